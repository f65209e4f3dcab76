#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "epinn/oracle.hpp"
#include "support.hpp"

using namespace epinn;

namespace {

// lambda*(u_xx + u_yy) + s = 0 with u = sin(pi x) sin(pi y) needs
// s = 2*lambda*pi^2 * sin(pi x) sin(pi y).
double manufactured_error(int n) {
    const double lambda = 0.02;
    Grid2d s;
    s.nx = s.ny = n;
    s.v.resize(static_cast<std::size_t>(n) * n);
    const double h = 1.0 / (n - 1);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix)
            s.at(ix, iy) =
                2.0 * lambda * kPi * kPi * std::sin(kPi * ix * h) * std::sin(kPi * iy * h);
    Grid2d u = solve_poisson_rhs(lambda, s);
    double err = 0.0;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix)
            err = std::max(err, std::abs(u.at(ix, iy) -
                                         std::sin(kPi * ix * h) * std::sin(kPi * iy * h)));
    return err;
}

} // namespace

TEST_CASE("elliptic solver converges at second order") {
    const double e1 = manufactured_error(33);
    const double e2 = manufactured_error(65);
    const double e3 = manufactured_error(129);
    const double p1 = std::log2(e1 / e2);
    const double p2 = std::log2(e2 / e3);
    CHECK(p1 >= 1.9);
    CHECK(p2 >= 1.9);
    CHECK(p1 <= 2.2);
}

TEST_CASE("elliptic solver meets its residual contract") {
    SourceProblemSpec spec;
    Grid2d u = solve_poisson(spec, 99);
    const int n = u.nx;
    const double inv_h2 = static_cast<double>(n - 1) * (n - 1);
    double rr = 0.0;
    for (int iy = 1; iy + 1 < n; ++iy) {
        for (int ix = 1; ix + 1 < n; ++ix) {
            const double lap = (u.at(ix + 1, iy) + u.at(ix - 1, iy) + u.at(ix, iy + 1) +
                                u.at(ix, iy - 1) - 4.0 * u.at(ix, iy)) * inv_h2;
            const double h = 1.0 / (n - 1);
            rr += square(spec.lambda * lap + spec.source_value(ix * h, iy * h));
        }
    }
    CHECK(std::sqrt(rr) < 1e-10);
    // Positive source, zero boundary: the temperature is positive inside.
    CHECK(u.at(n / 2, n / 2) > 0.0);
    for (int ix = 0; ix < n; ++ix) {
        CHECK(u.at(ix, 0) == 0.0);
        CHECK(u.at(ix, n - 1) == 0.0);
    }
}

TEST_CASE("parabolic solver conserves mass after the injection window") {
    DiffusionProblemSpec spec;
    const int nx = 49, nt = 301;
    std::vector<double> v(nx);
    for (int i = 0; i < nx; ++i)
        v[i] = 0.1 + std::exp(sinusoidal_log_diffusivity(i / 48.0));
    Grid1dTime g = solve_diffusion(spec, v, nx, nt);

    // The injection window closes at t = 0.01 (time index 100).
    const double m0 = grid_mass(g, 100);
    CHECK(m0 > 0.0);
    double max_drift = 0.0;
    for (int it = 101; it < nt; ++it)
        max_drift = std::max(max_drift, std::abs(grid_mass(g, it) - m0) / m0);
    CHECK(max_drift < 1e-8);

    // Injected mass: three bumps of strength*cutoff each (window integral).
    CHECK(m0 == doctest::Approx(3.0 * 100.0 * 0.01).epsilon(0.02));
    // Initial slice is identically zero.
    for (int i = 0; i < nx; ++i) CHECK(g.at(i, 0) == 0.0);
    // The state decays by spreading, never negative beyond roundoff.
    for (double ui : g.u) CHECK(ui > -1e-8);
}

TEST_CASE("parabolic solver refines at second order in time") {
    DiffusionProblemSpec spec;
    const int nx = 49;
    std::vector<double> v(nx, 0.5);
    Grid1dTime a = solve_diffusion(spec, v, nx, 301);
    Grid1dTime b = solve_diffusion(spec, v, nx, 601);
    Grid1dTime c = solve_diffusion(spec, v, nx, 1201);
    double d_ab = 0.0, d_bc = 0.0;
    for (int i = 0; i < nx; ++i) {
        d_ab = std::max(d_ab, std::abs(a.at(i, 300) - b.at(i, 600)));
        d_bc = std::max(d_bc, std::abs(b.at(i, 600) - c.at(i, 1200)));
    }
    CHECK(d_ab < 1e-5);
    CHECK(d_ab / d_bc == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("random field sampler has the declared covariance structure") {
    std::vector<double> nodes(49);
    for (int i = 0; i < 49; ++i) nodes[i] = i / 48.0;

    const int trials = 1000;
    std::vector<double> mean(nodes.size(), 0.0), var(nodes.size(), 0.0);
    double cov_l = 0.0; // covariance at separation 0.25 (12 nodes)
    const int ia = 10;
    const int ib = ia + 12;

    for (int t = 0; t < trials; ++t) {
        auto g = sample_grf(nodes, 0.3, 1000 + t);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            mean[i] += g[i];
            var[i] += g[i] * g[i];
        }
        cov_l += g[ia] * g[ib];
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        mean[i] /= trials;
        var[i] = var[i] / trials - mean[i] * mean[i];
        CHECK(std::abs(mean[i]) < 0.15);
        CHECK(var[i] > 0.85);
        CHECK(var[i] < 1.15);
    }
    // exp(-0.5*(0.25/0.3)^2) at that separation.
    CHECK(cov_l / trials ==
          doctest::Approx(std::exp(-0.5 * square(0.25 / 0.3))).epsilon(0.12));

    // Determinism.
    auto g1 = sample_grf(nodes, 0.3, 7);
    auto g2 = sample_grf(nodes, 0.3, 7);
    CHECK(g1 == g2);
    auto g3 = sample_grf(nodes, 0.3, 8);
    CHECK(g1 != g3);
}

TEST_CASE("subgrid sensor placement nests and never repeats") {
    SensorLayout lay = random_subgrid_sensors(197, 50, 2000, 42);
    CHECK(lay.pts.n() == 2000);
    std::set<std::size_t> seen(lay.node_index.begin(), lay.node_index.end());
    CHECK(seen.size() == 2000);
    const double h = 1.0 / 196.0;
    for (std::size_t i = 0; i < lay.pts.n(); ++i) {
        const double* p = lay.pts.point(i);
        // Every sensor sits on the coarse 50x50 lattice (stride 4 in nodes).
        const long ix = std::lround(p[0] / h);
        const long iy = std::lround(p[1] / h);
        CHECK(ix % 4 == 0);
        CHECK(iy % 4 == 0);
        CHECK(lay.node_index[i] == static_cast<std::size_t>(iy) * 197 + ix);
    }
    CHECK_THROWS_AS(random_subgrid_sensors(100, 50, 10, 1), ContractError);
    CHECK_THROWS_AS(random_subgrid_sensors(197, 50, 2501, 1), ContractError);
}

TEST_CASE("space-time sensors follow the declared array") {
    Grid1dTime g;
    g.nx = 49;
    g.nt = 301;
    g.t_end = 0.03;
    g.u.assign(static_cast<std::size_t>(g.nx) * g.nt, 0.0);
    SensorLayout lay = spacetime_sensors(g, 4, 100, 25, 300);
    CHECK(lay.pts.n() == 13 * 9);
    CHECK(lay.pts.point(0)[0] == 0.0);
    CHECK(lay.pts.point(0)[1] == doctest::Approx(0.01).epsilon(1e-14));
    // Sensor spacing 1/12 in x, 0.0025 in t.
    CHECK(lay.pts.point(1)[0] == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
    CHECK(lay.pts.point(13)[1] == doctest::Approx(0.0125).epsilon(1e-14));
}

TEST_CASE("observation noise is seeded and scaled") {
    std::vector<double> field(197 * 197, 2.5);
    SensorLayout lay = random_subgrid_sensors(197, 50, 2000, 3);

    ObservationSet clean = observe(field, lay, 0.0, 9);
    for (double d : clean.values) CHECK(d == 2.5);

    ObservationSet a = observe(field, lay, 0.02, 9);
    ObservationSet b = observe(field, lay, 0.02, 9);
    ObservationSet c = observe(field, lay, 0.02, 10);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);

    double mean = 0.0, var = 0.0;
    for (double d : a.values) mean += d - 2.5;
    mean /= a.values.size();
    for (double d : a.values) var += square(d - 2.5 - mean);
    var /= a.values.size();
    CHECK(std::abs(mean) < 0.002);
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.1));

    SensorLayout bad = lay;
    bad.node_index[5] = field.size() + 3;
    CHECK_THROWS_AS(observe(field, bad, 0.0, 1), ContractError);
}

TEST_CASE("normal sampler is unit variance and deterministic") {
    NormalSampler s1(123), s2(123);
    double m = 0.0, v = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = s1();
        CHECK(z == s2());
        m += z;
        v += z * z;
    }
    m /= n;
    v = v / n - m * m;
    CHECK(std::abs(m) < 0.02);
    CHECK(v == doctest::Approx(1.0).epsilon(0.03));
}
