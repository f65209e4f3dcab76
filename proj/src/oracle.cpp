#include "epinn/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace epinn {

double NormalSampler::operator()() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // (bits+1) * 2^-53 keeps u1 in (0,1] so the log is finite.
    const double u1 =
        static_cast<double>((splitmix64(state_) >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

namespace {

// y = lambda * (4u - sum of neighbours) / h^2 over interior unknowns of an
// n x n grid with zero Dirichlet boundary, u indexed (iy-1)*(n-2) + (ix-1).
void apply_neg_laplacian(double lambda, int n, const std::vector<double>& u,
                         std::vector<double>& y) {
    const int m = n - 2;
    const double inv_h2 = static_cast<double>(n - 1) * (n - 1);
    for (int iy = 0; iy < m; ++iy) {
        for (int ix = 0; ix < m; ++ix) {
            const int k = iy * m + ix;
            double nb = 0.0;
            if (ix > 0) nb += u[k - 1];
            if (ix < m - 1) nb += u[k + 1];
            if (iy > 0) nb += u[k - m];
            if (iy < m - 1) nb += u[k + m];
            y[k] = lambda * (4.0 * u[k] - nb) * inv_h2;
        }
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

Grid2d solve_poisson_rhs(double lambda, const Grid2d& s) {
    if (s.nx != s.ny || s.nx < 3) throw ContractError("solve_poisson_rhs: need square grid, n >= 3");
    if (lambda <= 0.0) throw ContractError("solve_poisson_rhs: lambda must be positive");
    const int n = s.nx;
    const int m = n - 2;
    const std::size_t mm = static_cast<std::size_t>(m) * m;

    std::vector<double> b(mm);
    for (int iy = 0; iy < m; ++iy)
        for (int ix = 0; ix < m; ++ix) b[iy * m + ix] = s.at(ix + 1, iy + 1);

    std::vector<double> u(mm, 0.0), r = b, p = b, ap(mm);
    const double b_norm = std::sqrt(dot(b, b));
    const double tol = std::max(0.5e-10, 1e-13 * b_norm);
    double rr = dot(r, r);
    const int max_iter = 40 * n + 2000;
    int it = 0;
    while (std::sqrt(rr) > tol) {
        if (++it > max_iter)
            throw NumericalError(strf("solve_poisson_rhs: CG stalled at residual ",
                                      std::sqrt(rr), " after ", max_iter, " iterations"));
        apply_neg_laplacian(lambda, n, p, ap);
        const double alpha = rr / dot(p, ap);
        for (std::size_t i = 0; i < mm; ++i) u[i] += alpha * p[i];
        for (std::size_t i = 0; i < mm; ++i) r[i] -= alpha * ap[i];
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < mm; ++i) p[i] = r[i] + beta * p[i];
    }

    // Recurrence residuals drift; enforce the contract on the true residual.
    apply_neg_laplacian(lambda, n, u, ap);
    double true_rr = 0.0;
    for (std::size_t i = 0; i < mm; ++i) true_rr += square(b[i] - ap[i]);
    if (std::sqrt(true_rr) >= 1e-10)
        throw NumericalError(strf("solve_poisson_rhs: final residual ", std::sqrt(true_rr)));

    Grid2d out;
    out.nx = out.ny = n;
    out.v.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int iy = 0; iy < m; ++iy)
        for (int ix = 0; ix < m; ++ix) out.at(ix + 1, iy + 1) = u[iy * m + ix];
    return out;
}

Grid2d solve_poisson(const SourceProblemSpec& spec, int n) {
    spec.validate();
    if (n < 3) throw ContractError("solve_poisson: n must be >= 3");
    Grid2d s;
    s.nx = s.ny = n;
    s.v.resize(static_cast<std::size_t>(n) * n);
    const double h = 1.0 / (n - 1);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix)
            s.at(ix, iy) = spec.source_value(ix * h, iy * h);
    return solve_poisson_rhs(spec.lambda, s);
}

Grid1dTime solve_diffusion(const DiffusionProblemSpec& spec,
                           const std::vector<double>& v, int nx, int nt) {
    spec.validate();
    if (nx < 3 || nt < 2) throw ContractError("solve_diffusion: grid too small");
    if (static_cast<int>(v.size()) != nx)
        throw ContractError("solve_diffusion: diffusivity size mismatch");
    for (double vi : v)
        if (!(vi > 0.0)) throw ContractError("solve_diffusion: diffusivity must be positive");

    Grid1dTime g;
    g.nx = nx;
    g.nt = nt;
    g.t_end = spec.t_end;
    g.u.assign(static_cast<std::size_t>(nx) * nt, 0.0);

    const double h = g.hx();
    const double dt = g.dt();
    const double r = 0.5 * dt / (h * h);

    std::vector<double> vf(nx - 1); // face-averaged diffusivity
    for (int i = 0; i + 1 < nx; ++i) vf[i] = 0.5 * (v[i] + v[i + 1]);

    // Implicit tridiagonal I - (dt/2) L; mirror ghosts double the edge flux.
    std::vector<double> lo(nx), di(nx), up(nx);
    di[0] = 1.0 + 2.0 * r * vf[0];
    up[0] = -2.0 * r * vf[0];
    for (int i = 1; i + 1 < nx; ++i) {
        lo[i] = -r * vf[i - 1];
        di[i] = 1.0 + r * (vf[i - 1] + vf[i]);
        up[i] = -r * vf[i];
    }
    lo[nx - 1] = -2.0 * r * vf[nx - 2];
    di[nx - 1] = 1.0 + 2.0 * r * vf[nx - 2];

    std::vector<double> cp(nx), rhs(nx), un(nx, 0.0), lu(nx), src(nx);
    auto apply_l = [&](const std::vector<double>& w) {
        lu[0] = 2.0 * vf[0] * (w[1] - w[0]) / (h * h);
        for (int i = 1; i + 1 < nx; ++i)
            lu[i] = (vf[i] * (w[i + 1] - w[i]) - vf[i - 1] * (w[i] - w[i - 1])) / (h * h);
        lu[nx - 1] = -2.0 * vf[nx - 2] * (w[nx - 1] - w[nx - 2]) / (h * h);
    };

    for (int it = 1; it < nt; ++it) {
        // Midpoint source evaluation: never lands on the window edge, and the
        // deposited mass is exact whenever the cutoff is a multiple of dt.
        const double tm = (it - 0.5) * dt;
        apply_l(un);
        for (int i = 0; i < nx; ++i) src[i] = spec.source_value(i * h, tm);
        for (int i = 0; i < nx; ++i)
            rhs[i] = un[i] + 0.5 * dt * lu[i] + dt * src[i];

        // Thomas sweep; the matrix is strictly diagonally dominant.
        cp[0] = up[0] / di[0];
        rhs[0] /= di[0];
        for (int i = 1; i < nx; ++i) {
            const double den = di[i] - lo[i] * cp[i - 1];
            cp[i] = up[i] / den;
            rhs[i] = (rhs[i] - lo[i] * rhs[i - 1]) / den;
        }
        un[nx - 1] = rhs[nx - 1];
        for (int i = nx - 2; i >= 0; --i) un[i] = rhs[i] - cp[i] * un[i + 1];

        for (int i = 0; i < nx; ++i) {
            if (!std::isfinite(un[i]))
                throw NumericalError(strf("solve_diffusion: non-finite state at step ", it));
            g.u[static_cast<std::size_t>(it) * nx + i] = un[i];
        }
    }
    return g;
}

double grid_mass(const Grid1dTime& g, int it) {
    if (it < 0 || it >= g.nt) throw ContractError("grid_mass: time index out of range");
    const double* u = g.u.data() + static_cast<std::size_t>(it) * g.nx;
    double s = 0.5 * (u[0] + u[g.nx - 1]);
    for (int i = 1; i + 1 < g.nx; ++i) s += u[i];
    return s * g.hx();
}

std::vector<double> sample_grf(const std::vector<double>& nodes, double length,
                               std::uint64_t seed) {
    const std::size_t n = nodes.size();
    if (n == 0) throw ContractError("sample_grf: empty node set");
    if (length <= 0.0) throw ContractError("sample_grf: length scale must be positive");

    std::vector<double> c(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            c[i * n + j] = std::exp(-0.5 * square((nodes[i] - nodes[j]) / length));

    // In-place lower Cholesky with escalating jitter until SPD.
    std::vector<double> l;
    double jitter = 1e-10;
    for (;; jitter *= 10.0) {
        if (jitter > 1e-6)
            throw NumericalError("sample_grf: covariance not SPD within jitter budget");
        l = c;
        for (std::size_t i = 0; i < n; ++i) l[i * n + i] += jitter;
        bool ok = true;
        for (std::size_t j = 0; j < n && ok; ++j) {
            for (std::size_t i = j; i < n; ++i) {
                double sum = l[i * n + j];
                for (std::size_t k = 0; k < j; ++k) sum -= l[i * n + k] * l[j * n + k];
                if (i == j) {
                    if (sum <= 0.0) {
                        ok = false;
                        break;
                    }
                    l[j * n + j] = std::sqrt(sum);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        if (ok) break;
    }

    NormalSampler normal(seed);
    std::vector<double> z(n), g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) z[i] = normal();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += l[i * n + k] * z[k];
        g[i] = s;
    }
    return g;
}

SensorLayout random_subgrid_sensors(int n, int sub_n, int count, std::uint64_t seed) {
    if (n < 2 || sub_n < 2) throw ContractError("random_subgrid_sensors: grids too small");
    if ((n - 1) % (sub_n - 1) != 0)
        throw ContractError("random_subgrid_sensors: subgrid does not nest in oracle grid");
    const long total = static_cast<long>(sub_n) * sub_n;
    if (count < 1 || count > total)
        throw ContractError("random_subgrid_sensors: sensor count out of range");

    const int stride = (n - 1) / (sub_n - 1);
    std::vector<long> pool(total);
    for (long i = 0; i < total; ++i) pool[i] = i;
    std::uint64_t state = seed ? seed : 1;
    const double h = 1.0 / (n - 1);

    SensorLayout out;
    out.pts.dim = 2;
    out.pts.x.reserve(2 * count);
    out.node_index.reserve(count);
    for (int i = 0; i < count; ++i) {
        const long j = i + static_cast<long>(splitmix64(state) % static_cast<std::uint64_t>(total - i));
        std::swap(pool[i], pool[j]);
        const int sx = static_cast<int>(pool[i] % sub_n);
        const int sy = static_cast<int>(pool[i] / sub_n);
        const int ix = sx * stride;
        const int iy = sy * stride;
        out.pts.x.push_back(ix * h);
        out.pts.x.push_back(iy * h);
        out.node_index.push_back(static_cast<std::size_t>(iy) * n + ix);
    }
    return out;
}

SensorLayout spacetime_sensors(const Grid1dTime& g, int x_stride, int it_first,
                               int it_stride, int it_last) {
    if (x_stride < 1 || it_stride < 1) throw ContractError("spacetime_sensors: bad stride");
    if (it_first < 0 || it_last >= g.nt || it_first > it_last ||
        (g.nx - 1) % x_stride != 0)
        throw ContractError("spacetime_sensors: indices do not fit the grid");
    SensorLayout out;
    out.pts.dim = 2;
    const double h = g.hx();
    const double dt = g.dt();
    for (int it = it_first; it <= it_last; it += it_stride) {
        for (int ix = 0; ix < g.nx; ix += x_stride) {
            out.pts.x.push_back(ix * h);
            out.pts.x.push_back(it * dt);
            out.node_index.push_back(static_cast<std::size_t>(it) * g.nx + ix);
        }
    }
    return out;
}

ObservationSet observe(const std::vector<double>& field, const SensorLayout& layout,
                       double noise_std, std::uint64_t seed) {
    if (noise_std < 0.0) throw ContractError("observe: noise level must be >= 0");
    layout.pts.validate();
    if (layout.node_index.size() != layout.pts.n())
        throw ContractError("observe: layout index/coordinate mismatch");
    ObservationSet obs;
    obs.pts = layout.pts;
    obs.values.resize(layout.node_index.size());
    NormalSampler normal(seed);
    for (std::size_t i = 0; i < layout.node_index.size(); ++i) {
        const std::size_t k = layout.node_index[i];
        if (k >= field.size())
            throw ContractError("observe: sensor does not lie on an oracle grid node");
        obs.values[i] = field[k] + noise_std * normal();
    }
    return obs;
}

} // namespace epinn
