// Acceptance gate for the ensemble inverse-problem trainer. Runs ten
// numbered checks and prints one PASS/FAIL line per check; every tolerance
// is pinned here, next to the check that uses it.
//
// Long-running checks (5..9) train through the harness into a work
// directory given as argv[1] and reuse any artifact whose config digest
// matches, so a completed run validates quickly on re-execution. Pass
// "--only 1,2,3" to restrict the set.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinn/active.hpp"
#include "epinn/common.hpp"
#include "epinn/ensemble.hpp"
#include "epinn/harness.hpp"
#include "epinn/metrics.hpp"
#include "epinn/oracle.hpp"
#include "epinn/problems.hpp"
#include "epinn/training.hpp"

namespace fs = std::filesystem;
using namespace epinn;

namespace {

std::string g_workdir = "acceptance_work";

struct CheckResult {
    int id = 0;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

void note(const std::string& msg) {
    std::printf("       %s\n", msg.c_str());
    std::fflush(stdout);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ordered_json read_json(const std::string& path) {
    return ordered_json::parse(slurp(path));
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// Componentwise relative error with a floor tied to the vector's own scale,
// so near-zero components are judged on an absolute scale that tracks the
// finite-difference noise instead of blowing up.
double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("max_rel_err: size mismatch");
    double amax = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        amax = std::max(amax, std::abs(a[i]));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom =
            std::max({std::abs(a[i]) + std::abs(b[i]), 1e-2 * amax, 1e-10});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients against central finite differences
// ---------------------------------------------------------------------------

struct FdSetup {
    InverseProblem problem;
    ObservationSet obs;
    PointSet colloc;
    PointSet qoi_pts;
    std::vector<double> qoi_values;
    LossWeights weights;
};

// Small random problem instance: a handful of observation, collocation and
// direct-QoI points inside the input box of the benchmark geometry.
FdSetup fd_setup(bool source, std::uint64_t seed) {
    FdSetup s;
    s.problem = source ? make_source_problem(5) : make_diffusion_problem(6, 7);
    // the benchmark's own loss weights; they also keep the random-net loss
    // magnitude in a range where central differences resolve 1e-6
    s.weights = source ? LossWeights{1.0, 1.0, 1.0}
                       : LossWeights{1.0, 0.001, 0.001};
    const int d = s.problem.u_arch.input_dim;
    const InputMap& map = s.problem.u_map;
    NormalSampler gauss(derive_seed(seed, "fd-values"));

    auto draw_points = [&](int n, std::uint64_t tag) {
        PointSet p;
        p.dim = d;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) {
                const double u = hash_uniform(seed, tag, i, k);
                p.x.push_back(map.lo[k] +
                              (0.05 + 0.9 * u) * (map.hi[k] - map.lo[k]));
            }
        return p;
    };

    s.obs.pts = draw_points(8, 11);
    for (std::size_t i = 0; i < s.obs.pts.n(); ++i)
        s.obs.values.push_back(0.5 * gauss());
    s.colloc = draw_points(12, 23);

    const int md = s.problem.m_arch.input_dim;
    s.qoi_pts.dim = md;
    for (int i = 0; i < 2; ++i) {
        for (int k = 0; k < md; ++k)
            s.qoi_pts.x.push_back(s.problem.m_map.lo[k] +
                                  (0.1 + 0.8 * hash_uniform(seed, 31, i, k)) *
                                      (s.problem.m_map.hi[k] -
                                       s.problem.m_map.lo[k]));
        s.qoi_values.push_back(gauss());
    }
    return s;
}

// Random parameters: Glorot plus noise so biases are nonzero.
std::vector<double> jittered_params(const MlpArchitecture& arch,
                                    std::uint64_t seed) {
    std::vector<double> p = glorot_init(arch, seed);
    NormalSampler gauss(derive_seed(seed, "fd-jitter"));
    for (double& v : p) v += 0.05 * gauss();
    return p;
}

MemberTrainer::Options fd_options(const LossWeights& w, bool at, double tau) {
    MemberTrainer::Options o;
    o.weights = w;
    o.at.enabled = at;
    o.at.tau = tau;
    o.backend = Backend::Serial;
    return o;
}

MemberTrainer fd_trainer(const FdSetup& s, const MemberTrainer::Options& o,
                         std::uint64_t seed) {
    MemberTrainer t(s.problem, s.obs, s.colloc, o,
                    derive_seed(seed, "fd-u"), derive_seed(seed, "fd-m"));
    for (std::size_t i = 0; i < s.qoi_pts.n(); ++i)
        t.add_qoi_observation(s.qoi_pts.point(i), s.qoi_values[i]);
    return t;
}

// Central difference of the scalar total loss over every parameter of both
// networks.
void fd_param_grad(MemberTrainer& t, std::vector<double> u,
                   std::vector<double> m, std::vector<double>& fd_u,
                   std::vector<double>& fd_m) {
    auto run = [&](std::vector<double>& v, std::vector<double>& fd) {
        fd.assign(v.size(), 0.0);
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double h = 1e-4 * (1.0 + std::abs(v[j]));
            const double keep = v[j];
            v[j] = keep + h;
            t.set_params(u, m);
            const double lp = t.losses().total;
            v[j] = keep - h;
            t.set_params(u, m);
            const double lm = t.losses().total;
            v[j] = keep;
            fd[j] = (lp - lm) / (2.0 * h);
        }
    };
    run(u, fd_u);
    run(m, fd_m);
    t.set_params(u, m);
}

// Derivative channels of one kernel against finite differences of its value
// channel, in physical units.
double channel_fd_worst(const MlpArchitecture& arch, const InputMap& map,
                        const ChannelSpec& spec,
                        const std::vector<double>& params, std::uint64_t seed) {
    ChannelKernel k(arch, map, spec);
    const int d = arch.input_dim;
    const int nch = spec.count();
    const int n = 30;
    std::vector<double> xs;
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a)
            xs.push_back(map.lo[a] + (0.05 + 0.9 * hash_uniform(seed, 47, i, a)) *
                                         (map.hi[a] - map.lo[a]));

    std::vector<double> out(static_cast<std::size_t>(n) * nch);
    k.forward(params, xs, n, out, nullptr, Backend::Serial);

    auto value_at = [&](const std::vector<double>& pts) {
        std::vector<double> o(static_cast<std::size_t>(n) * nch);
        k.forward(params, pts, n, o, nullptr, Backend::Serial);
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) v[i] = o[static_cast<std::size_t>(i) * nch];
        return v;
    };

    double worst = 0.0;
    int ch = 1;
    for (int a : spec.first) {
        const double h = 1e-5 * (map.hi[a] - map.lo[a]);
        std::vector<double> xp = xs, xm = xs;
        for (int i = 0; i < n; ++i) {
            xp[static_cast<std::size_t>(i) * d + a] += h;
            xm[static_cast<std::size_t>(i) * d + a] -= h;
        }
        const auto vp = value_at(xp), vm = value_at(xm);
        std::vector<double> fd(n), an(n);
        for (int i = 0; i < n; ++i) {
            fd[i] = (vp[i] - vm[i]) / (2.0 * h);
            an[i] = out[static_cast<std::size_t>(i) * nch + ch];
        }
        worst = std::max(worst, max_rel_err(an, fd));
        ++ch;
    }
    for (int a : spec.second) {
        const double h = 2e-4 * (map.hi[a] - map.lo[a]);
        std::vector<double> xp = xs, xm = xs;
        for (int i = 0; i < n; ++i) {
            xp[static_cast<std::size_t>(i) * d + a] += h;
            xm[static_cast<std::size_t>(i) * d + a] -= h;
        }
        const auto vp = value_at(xp), vm = value_at(xm);
        std::vector<double> fd(n), an(n);
        for (int i = 0; i < n; ++i) {
            const double v0 = out[static_cast<std::size_t>(i) * nch];
            fd[i] = (vp[i] - 2.0 * v0 + vm[i]) / (h * h);
            an[i] = out[static_cast<std::size_t>(i) * nch + ch];
        }
        worst = std::max(worst, max_rel_err(an, fd));
        ++ch;
    }
    return worst;
}

CheckResult check1() {
    const auto t0 = std::chrono::steady_clock::now();
    const double kParamTol = 1e-6;
    const double kInputTol = 1e-5;

    double worst_param = 0.0, worst_input = 0.0, worst_at = 0.0;
    for (int net = 0; net < 20; ++net) {
        const bool source = net % 2 == 0;
        const std::uint64_t seed = 1000 + net;
        FdSetup s = fd_setup(source, seed);
        const auto u = jittered_params(s.problem.u_arch, derive_seed(seed, "u"));
        const auto m = jittered_params(s.problem.m_arch, derive_seed(seed, "m"));

        // analytic gradient of the adversarial-free total loss
        MemberTrainer base = fd_trainer(s, fd_options(s.weights, false, 0.0), seed);
        base.set_params(u, m);
        std::vector<double> gu, gm;
        base.loss_and_grad(gu, gm);

        std::vector<double> fdu, fdm;
        fd_param_grad(base, u, m, fdu, fdm);
        worst_param = std::max(worst_param, max_rel_err(gu, fdu));
        worst_param = std::max(worst_param, max_rel_err(gm, fdm));

        worst_input = std::max(
            worst_input, channel_fd_worst(s.problem.u_arch, s.problem.u_map,
                                          s.problem.u_collocation_channels(), u,
                                          seed));
        worst_input = std::max(
            worst_input, channel_fd_worst(s.problem.m_arch, s.problem.m_map,
                                          s.problem.m_collocation_channels(), m,
                                          derive_seed(seed, "mchan")));

        // Adversarial term: its perturbation is held fixed by construction
        // (stop-gradient), so a naive difference through the full loss would
        // measure the wrong thing. Instead verify the decomposition
        //   grad(at on) = grad(at off) + grad(data loss at the perturbed
        //   points), with the last term finite-differenced directly.
        if (net < 4) {
            const double tau = fgm_radius(s.problem.u_map);
            MemberTrainer with_at = fd_trainer(s, fd_options(s.weights, true, tau), seed);
            with_at.set_params(u, m);
            std::vector<double> gau, gam;
            with_at.loss_and_grad(gau, gam);

            // replicate the perturbation from the data-gradient channels
            const int d = s.problem.u_arch.input_dim;
            ChannelKernel dk(s.problem.u_arch, s.problem.u_map,
                             s.problem.u_data_channels(true));
            const int nch = dk.n_channels();
            const std::size_t nobs = s.obs.pts.n();
            std::vector<double> dout(nobs * nch);
            dk.forward(u, s.obs.pts.x, nobs, dout, nullptr, Backend::Serial);
            std::vector<double> g(nobs * d);
            for (std::size_t i = 0; i < nobs; ++i) {
                const double r = dout[i * nch] - s.obs.values[i];
                for (int a = 0; a < d; ++a)
                    g[i * d + a] = r * dout[i * nch + 1 + a];
            }
            std::vector<double> delta(nobs * d);
            fgm_perturbation(g, d, tau, delta);

            FdSetup sp = s;
            for (std::size_t i = 0; i < nobs * d; ++i) sp.obs.pts.x[i] += delta[i];
            MemberTrainer::Options data_only = fd_options(s.weights, false, 0.0);
            data_only.weights = {s.weights.data, 0.0, 0.0};
            MemberTrainer pert(sp.problem, sp.obs, sp.colloc, data_only,
                               derive_seed(seed, "fd-u"),
                               derive_seed(seed, "fd-m"));
            pert.set_params(u, m);
            std::vector<double> gpu, gpm;
            pert.loss_and_grad(gpu, gpm);

            std::vector<double> sum_u(gu.size()), sum_m(gm.size());
            for (std::size_t j = 0; j < gu.size(); ++j) sum_u[j] = gu[j] + gpu[j];
            for (std::size_t j = 0; j < gm.size(); ++j) sum_m[j] = gm[j] + gpm[j];
            worst_at = std::max(worst_at, max_rel_err(gau, sum_u));
            worst_at = std::max(worst_at, max_rel_err(gam, sum_m));

            std::vector<double> fdpu, fdpm;
            fd_param_grad(pert, u, m, fdpu, fdpm);
            worst_param = std::max(worst_param, max_rel_err(gpu, fdpu));
        }
    }

    const double secs = elapsed(t0);
    CheckResult r;
    r.id = 1;
    r.seconds = secs;
    r.pass = worst_param < kParamTol && worst_input < kInputTol &&
             worst_at < 1e-9 && secs < 60.0;
    r.detail = "param grad vs FD " + fmt(worst_param) + " < 1e-6, input derivs " +
               fmt(worst_input) + " < 1e-5, at decomposition " + fmt(worst_at) +
               " < 1e-9, " + fmt(secs) + "s < 60s";
    return r;
}

// ---------------------------------------------------------------------------
// criterion 2: perturbation radius contract
// ---------------------------------------------------------------------------

CheckResult check2() {
    const auto t0 = std::chrono::steady_clock::now();
    const double kNormTol = 1e-12;

    double worst = 0.0;
    std::size_t zeros = 0;
    bool zeros_clean = true;
    for (int trial = 0; trial < 10000; ++trial) {
        const int d = 1 + trial % 3;
        const double tau =
            1e-4 + 2.0 * hash_uniform(9000, trial, 0);
        std::vector<double> g(d);
        if (trial % 7 == 0) {
            ++zeros;
        } else {
            for (int a = 0; a < d; ++a) {
                const double mag =
                    std::pow(10.0, -12.0 + 18.0 * hash_uniform(9001, trial, a));
                g[a] = (hash_uniform(9002, trial, a) < 0.5 ? -1.0 : 1.0) * mag;
            }
        }
        std::vector<double> delta(d);
        fgm_perturbation(g, d, tau, delta);
        double norm2 = 0.0;
        for (double v : delta) norm2 += v * v;
        const double norm = std::sqrt(norm2);
        if (trial % 7 == 0) {
            for (double v : delta) zeros_clean = zeros_clean && v == 0.0;
        } else {
            worst = std::max(worst, std::abs(norm - tau));
        }
    }

    CheckResult r;
    r.id = 2;
    r.seconds = elapsed(t0);
    r.pass = worst < kNormTol && zeros_clean;
    r.detail = "max | ||delta|| - tau | = " + fmt(worst) + " < 1e-12 over 10^4 draws, " +
               std::to_string(zeros) + " zero gradients mapped to zero";
    return r;
}

// ---------------------------------------------------------------------------
// criterion 3: ensemble statistics against a two-pass reference
// ---------------------------------------------------------------------------

CheckResult check3() {
    const auto t0 = std::chrono::steady_clock::now();
    const double kStatTol = 1e-12;

    double worst = 0.0;
    bool clamp_ok = true;
    const std::array<std::pair<int, int>, 5> shapes{
        {{2, 5}, {3, 17}, {5, 33}, {16, 9}, {4, 6}}};
    int case_id = 0;
    for (const auto& [m, n] : shapes) {
        PointSet pts;
        pts.dim = 1;
        for (int j = 0; j < n; ++j) pts.x.push_back(j * 0.1);
        NormalSampler gauss(derive_seed(7000, "stats", case_id));
        std::vector<std::vector<double>> rows(m, std::vector<double>(n));
        const bool identical = case_id == 4;
        for (int j = 0; j < n; ++j) {
            const double shared = 2.0 * gauss();
            for (int i = 0; i < m; ++i)
                rows[i][j] = identical ? shared : shared + 3.0 * gauss();
        }
        auto field = aggregate_members(pts, rows);
        for (int j = 0; j < n; ++j) {
            double mean = 0.0;
            for (int i = 0; i < m; ++i) mean += rows[i][j];
            mean /= m;
            double var = 0.0;
            for (int i = 0; i < m; ++i) var += square(rows[i][j] - mean);
            var /= m;
            worst = std::max(worst, std::abs(field.mean[j] - mean) /
                                        std::max(1.0, std::abs(mean)));
            worst = std::max(worst, std::abs(field.variance[j] - var) /
                                        std::max(1.0, var));
            clamp_ok = clamp_ok && field.variance[j] >= 0.0;
        }
        ++case_id;
    }

    CheckResult r;
    r.id = 3;
    r.seconds = elapsed(t0);
    r.pass = worst < kStatTol && clamp_ok;
    r.detail = "max deviation " + fmt(worst) +
               " < 1e-12 incl. M=2 and identical members, variance >= 0";
    return r;
}

// ---------------------------------------------------------------------------
// criterion 4: forward solver verification
// ---------------------------------------------------------------------------

CheckResult check4() {
    const auto t0 = std::chrono::steady_clock::now();
    const double kOrderFloor = 1.9;
    const double kMassTol = 1e-8;

    // manufactured solution for the Poisson operator
    const double lambda = 0.02;
    auto exact = [](double x, double y) {
        return std::sin(kPi * x) * std::sin(2.0 * kPi * y);
    };
    std::vector<double> errs;
    for (int n : {17, 33, 65, 129}) {
        Grid2d s;
        s.nx = s.ny = n;
        s.v.resize(static_cast<std::size_t>(n) * n);
        const double h = 1.0 / (n - 1);
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix)
                s.at(ix, iy) = 5.0 * kPi * kPi * lambda * exact(ix * h, iy * h);
        Grid2d u = solve_poisson_rhs(lambda, s);
        double e2 = 0.0;
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix)
                e2 += square(u.at(ix, iy) - exact(ix * h, iy * h));
        errs.push_back(std::sqrt(e2 * h * h));
    }
    double min_order = 1e9;
    for (std::size_t k = 0; k + 1 < errs.size(); ++k)
        min_order = std::min(min_order, std::log2(errs[k] / errs[k + 1]));

    // mass conservation once the source window has closed
    DiffusionProblemSpec spec;
    const int nx = 49, nt = 301;
    std::vector<double> v(nx);
    for (int i = 0; i < nx; ++i)
        v[i] = spec.v_floor + std::exp(sinusoidal_log_diffusivity(i / double(nx - 1)));
    Grid1dTime g = solve_diffusion(spec, v, nx, nt);
    const int it0 = 110; // t = 0.011, past the t = 0.01 source cutoff
    const double m0 = grid_mass(g, it0);
    double drift = 0.0;
    for (int it = it0 + 1; it < nt; ++it)
        drift = std::max(drift, std::abs(grid_mass(g, it) - m0) / std::abs(m0));

    const double secs = elapsed(t0);
    CheckResult r;
    r.id = 4;
    r.seconds = secs;
    r.pass = min_order >= kOrderFloor && drift < kMassTol && secs < 120.0;
    r.detail = "observed order " + fmt(min_order) + " >= 1.9, post-cutoff mass drift " +
               fmt(drift) + " < 1e-8, " + fmt(secs) + "s < 120s";
    return r;
}

// ---------------------------------------------------------------------------
// training cache shared by criteria 5..9
// ---------------------------------------------------------------------------

bool artifacts_ready(const ExperimentConfig& cfg) {
    const std::string dir = cfg.out_dir;
    if (fs::exists(dir + "/FAILED")) return false;
    if (!fs::exists(dir + "/metrics.json") || !fs::exists(dir + "/checkpoint.json"))
        return false;
    try {
        return read_json(dir + "/metrics.json").value("config_digest", "") ==
               config_digest(cfg);
    } catch (...) {
        return false;
    }
}

ordered_json ensure_run(const ExperimentConfig& cfg) {
    if (artifacts_ready(cfg)) {
        note("reusing " + cfg.out_dir);
    } else {
        note("training " + cfg.out_dir + " (digest " + config_digest(cfg) + ")");
        fs::remove_all(cfg.out_dir);
        run_train(cfg);
    }
    return read_json(cfg.out_dir + "/metrics.json");
}

// ---------------------------------------------------------------------------
// criterion 5: sinusoidal diffusivity recovery at desk scale
// ---------------------------------------------------------------------------

ExperimentConfig c5_config() {
    ExperimentConfig cfg = preset_config("desk-diffusion-sinusoidal");
    cfg.out_dir = g_workdir + "/c5";
    return cfg;
}

CheckResult check5() {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = c5_config();
    const ordered_json m = ensure_run(cfg);
    const double r2 = m.at("r2").get<double>();
    const double rel = m.at("rel_l2").get<double>();
    const int failed = m.at("members_failed").get<int>();

    CheckResult r;
    r.id = 5;
    r.seconds = elapsed(t0);
    r.pass = r2 >= 0.90 && rel <= 0.30 && failed == 0;
    r.detail = "sinusoidal noise 0.01: r2 " + fmt(r2) + " >= 0.90, rel_l2 " +
               fmt(rel) + " <= 0.30, members failed " + std::to_string(failed);
    return r;
}

// ---------------------------------------------------------------------------
// criterion 6: random-field diffusivity recovery and band calibration
// ---------------------------------------------------------------------------

CheckResult check6() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = preset_config("desk-diffusion-grf");
    cfg.out_dir = g_workdir + "/c6";
    const ordered_json m = ensure_run(cfg);
    const double r2 = m.at("r2").get<double>();
    const double cov = m.at("coverage_2sigma").get<double>();

    CheckResult r;
    r.id = 6;
    r.seconds = elapsed(t0);
    r.pass = r2 >= 0.75 && cov >= 0.80;
    r.detail = "random field noise 0.05: r2 " + fmt(r2) +
               " >= 0.75, 2-sigma coverage " + fmt(cov) + " >= 0.80";
    return r;
}

// ---------------------------------------------------------------------------
// criterion 7: active sampling termination and acquisition audit
// ---------------------------------------------------------------------------

CheckResult check7() {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = c5_config();
    const std::string digest = config_digest(cfg);
    const std::string dir = g_workdir + "/c7";
    const std::string marker = dir + "/result.json";

    ordered_json res;
    bool have = false;
    if (fs::exists(marker)) {
        try {
            res = read_json(marker);
            have = res.value("config_digest", "") == digest;
        } catch (...) {
            have = false;
        }
    }

    if (!have) {
        ensure_run(cfg); // warm start needs the trained ensemble
        note("active sampling from " + cfg.out_dir + "/checkpoint.json");
        fs::remove_all(dir);
        fs::create_directories(dir);

        GeneratedData gen = generate_data(cfg);
        EnsembleResult ens =
            read_checkpoint(cfg.out_dir + "/checkpoint.json", digest);

        MemberTrainer::Options opts;
        opts.weights = cfg.weights;
        opts.at.enabled = cfg.at_enabled;
        opts.at.tau = cfg.at_enabled ? fgm_radius(gen.problem.u_map) : 0.0;
        opts.u_opt = {cfg.lr_u, cfg.beta1, cfg.beta2, cfg.eps};
        opts.m_opt = {cfg.lr_m, cfg.beta1, cfg.beta2, cfg.eps};
        opts.backend =
            cfg.backend == "serial" ? Backend::Serial : Backend::Parallel;
        opts.dropout_seed = derive_seed(cfg.master_seed, "dropout", 0);
        opts.trace_interval = cfg.trace_interval;

        std::vector<MemberTrainer> members;
        members.reserve(ens.members.size());
        for (std::size_t i = 0; i < ens.members.size(); ++i) {
            if (ens.members[i].failed) continue;
            members.emplace_back(gen.problem, gen.observations, gen.collocation,
                                 opts, derive_seed(cfg.master_seed, "member-u", i),
                                 derive_seed(cfg.master_seed, "member-m", i));
            members.back().set_params(ens.members[i].u_params,
                                      ens.members[i].m_params);
        }

        const AsConfig as{0.02, 15, 10000};
        AsResult as_res =
            run_active_sampling(members, gen.qoi_eval, gen.qoi_truth, as);

        // every acquisition must be the strict max-variance candidate among
        // the not-yet-acquired points, lowest index on ties
        bool audit = true;
        std::set<std::size_t> taken;
        for (const auto& row : as_res.iterations) {
            if (row.sigma2_field.size() != gen.qoi_eval.n()) audit = false;
            std::size_t best = gen.qoi_eval.n();
            double best_v = -1.0;
            for (std::size_t j = 0; j < row.sigma2_field.size(); ++j) {
                if (taken.count(j)) continue;
                if (row.sigma2_field[j] > best_v) {
                    best_v = row.sigma2_field[j];
                    best = j;
                }
            }
            if (row.acquired_index != best) audit = false;
            for (int a = 0; a < gen.qoi_eval.dim; ++a)
                if (row.x_s[a] != gen.qoi_eval.point(row.acquired_index)[a])
                    audit = false;
            if (row.m_s != gen.qoi_truth[row.acquired_index]) audit = false;
            taken.insert(row.acquired_index);
        }

        write_as_trace_csv(dir + "/as_trace.csv", digest, as_res, {"x"});
        write_posterior_csv(dir + "/posterior_as.csv", digest,
                            as_res.final_posterior, {"x"});

        res = ordered_json();
        res["config_digest"] = digest;
        res["converged"] = as_res.converged;
        res["eta_degenerate"] = as_res.eta_degenerate;
        res["iterations"] = as_res.iterations.size();
        res["argmax_audit_ok"] = audit;
        res["r2"] = r_squared(as_res.final_posterior.mean, gen.qoi_truth);
        res["rel_l2"] = relative_l2(as_res.final_posterior.mean, gen.qoi_truth);
        std::ofstream(marker) << res.dump(2) << "\n";
    } else {
        note("reusing " + marker);
    }

    const bool converged = res.at("converged").get<bool>();
    const std::size_t iters = res.at("iterations").get<std::size_t>();
    const bool audit = res.at("argmax_audit_ok").get<bool>();
    const double r2 = res.at("r2").get<double>();

    CheckResult r;
    r.id = 7;
    r.seconds = elapsed(t0);
    r.pass = converged && iters <= 15 && audit && r2 >= 0.97;
    r.detail = std::string("eta stop ") + (converged ? "yes" : "NO") + " after " +
               std::to_string(iters) + " <= 15 iterations, argmax audit " +
               (audit ? "clean" : "VIOLATED") + ", r2 " + fmt(r2) + " >= 0.97";
    return r;
}

// ---------------------------------------------------------------------------
// criterion 8: source inversion peak locations
// ---------------------------------------------------------------------------

CheckResult check8() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = preset_config("desk-source2d");
    cfg.out_dir = g_workdir + "/c8";
    const ordered_json m = ensure_run(cfg);
    const double rel = m.at("rel_l2").get<double>();

    // posterior mean field on the evaluation lattice
    std::vector<std::array<double, 3>> field; // x, y, mu
    {
        std::ifstream in(cfg.out_dir + "/posterior.csv");
        if (!in) throw IoError("missing posterior.csv");
        std::string line;
        std::getline(in, line); // digest comment
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            std::array<double, 3> row{};
            std::istringstream ls(line);
            std::string cell;
            for (int c = 0; c < 3 && std::getline(ls, cell, ','); ++c)
                row[c] = std::stod(cell);
            field.push_back(row);
        }
    }

    auto argmax_outside = [&](double cx, double cy, double exclusion) {
        std::size_t best = field.size();
        for (std::size_t i = 0; i < field.size(); ++i) {
            const double dx = field[i][0] - cx, dy = field[i][1] - cy;
            if (exclusion > 0.0 && std::sqrt(dx * dx + dy * dy) < exclusion)
                continue;
            if (best == field.size() || field[i][2] > field[best][2]) best = i;
        }
        return best;
    };
    const std::size_t p1 = argmax_outside(0.0, 0.0, 0.0);
    const std::size_t p2 = argmax_outside(field[p1][0], field[p1][1], 0.2);

    auto dist = [&](std::size_t p, double cx, double cy) {
        return std::sqrt(square(field[p][0] - cx) + square(field[p][1] - cy));
    };
    // the two detected peaks must cover both true centers, either pairing
    const double pairing = std::min(
        std::max(dist(p1, 0.3, 0.4), dist(p2, 0.8, 0.8)),
        std::max(dist(p1, 0.8, 0.8), dist(p2, 0.3, 0.4)));

    CheckResult r;
    r.id = 8;
    r.seconds = elapsed(t0);
    r.pass = pairing <= 0.05 && rel <= 0.40;
    r.detail = "peak offsets within " + fmt(pairing) + " <= 0.05 of (0.3,0.4) and (0.8,0.8), rel_l2 " +
               fmt(rel) + " <= 0.40";
    return r;
}

// ---------------------------------------------------------------------------
// criterion 9: comparison report and dropout baseline gap
// ---------------------------------------------------------------------------

// Reduced joint budget for the nine-run comparison matrix; the scaling is
// uniform across methods, so the ensemble vs dropout ordering it tests is
// preserved.
constexpr std::size_t kReportSteps = 4000;

ExperimentConfig c9_base(std::uint64_t seed) {
    ExperimentConfig cfg = preset_config("desk-diffusion-grf");
    cfg.noise_std = 0.01;
    cfg.train_steps = kReportSteps;
    cfg.pretrain_max_steps = kReportSteps;
    cfg.master_seed = seed;
    return cfg;
}

CheckResult check9() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string root = g_workdir + "/c9";

    struct Row {
        std::string name;
        bool at = false;
        int members = 5;
        bool dropout = false;
        std::uint64_t seed = 1;
    };
    const std::vector<Row> rows = {
        {"at-on-m5-s1", true, 5, false, 1},   {"at-on-m5-s2", true, 5, false, 2},
        {"at-on-m5-s3", true, 5, false, 3},   {"at-off-m5-s1", false, 5, false, 1},
        {"at-on-m10-s1", true, 10, false, 1}, {"at-off-m10-s1", false, 10, false, 1},
        {"dropout-s1", false, 1, true, 1},    {"dropout-s2", false, 1, true, 2},
        {"dropout-s3", false, 1, true, 3},
    };

    std::map<std::string, double> rel;
    for (const auto& row : rows) {
        ExperimentConfig cfg = c9_base(row.seed);
        cfg.at_enabled = row.at;
        cfg.members = row.members;
        cfg.dropout_baseline = row.dropout;
        cfg.out_dir = root + "/" + row.name;
        const ordered_json m = ensure_run(cfg);
        rel[row.name] = m.at("rel_l2").get<double>();
    }

    run_report(root);
    const std::string report = slurp(root + "/report.csv");
    bool listed = true;
    for (const auto& row : rows)
        listed = listed && report.find(row.name) != std::string::npos;

    bool gap = true;
    std::string gaps;
    for (int s = 1; s <= 3; ++s) {
        const double e = rel["at-on-m5-s" + std::to_string(s)];
        const double d = rel["dropout-s" + std::to_string(s)];
        gap = gap && e < d;
        gaps += (s > 1 ? ", " : "") + fmt(e) + " vs " + fmt(d);
    }

    CheckResult r;
    r.id = 9;
    r.seconds = elapsed(t0);
    r.pass = listed && gap;
    r.detail = std::string("report lists all 9 runs: ") + (listed ? "yes" : "NO") +
               "; ensemble vs dropout rel_l2 per seed: " + gaps;
    return r;
}

// ---------------------------------------------------------------------------
// criterion 10: bit-identical reruns
// ---------------------------------------------------------------------------

CheckResult check10() {
    const auto t0 = std::chrono::steady_clock::now();

    std::size_t files_compared = 0;
    bool identical = true;
    std::string first_diff;
    for (const std::string preset : {"smoke-diffusion", "smoke-source2d"}) {
        std::array<std::string, 2> dirs;
        for (int rep = 0; rep < 2; ++rep) {
            ExperimentConfig cfg = preset_config(preset);
            cfg.out_dir =
                g_workdir + "/c10/" + preset + "-r" + std::to_string(rep + 1);
            dirs[rep] = cfg.out_dir;
            fs::remove_all(cfg.out_dir);
            run_train(cfg);
            if (!cfg.is_source()) run_sample(cfg);
        }
        std::vector<std::string> names = {"metrics.json", "checkpoint.json",
                                          "posterior.csv", "dataset.csv",
                                          "truth.csv"};
        if (preset == "smoke-diffusion") {
            names.insert(names.end(), {"as_metrics.json", "as_trace.csv",
                                       "checkpoint_as.json", "posterior_as.csv"});
        }
        for (const auto& name : names) {
            ++files_compared;
            if (slurp(dirs[0] + "/" + name) != slurp(dirs[1] + "/" + name)) {
                identical = false;
                if (first_diff.empty()) first_diff = preset + "/" + name;
            }
        }
    }

    CheckResult r;
    r.id = 10;
    r.seconds = elapsed(t0);
    r.pass = identical;
    r.detail = identical ? std::to_string(files_compared) +
                               " artifacts bit-identical across rerun pairs"
                         : "first differing artifact: " + first_diff;
    return r;
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            std::istringstream ls(argv[++i]);
            std::string tok;
            while (std::getline(ls, tok, ',')) only.insert(std::stoi(tok));
        } else {
            g_workdir = arg;
        }
    }
    fs::create_directories(g_workdir);

    // cheap checks first, then the training-backed ones in dependency order
    const std::vector<std::pair<int, CheckResult (*)()>> checks = {
        {1, check1}, {2, check2}, {3, check3},  {4, check4}, {10, check10},
        {5, check5}, {7, check7}, {6, check6},  {8, check8}, {9, check9},
    };

    std::vector<CheckResult> results;
    for (const auto& [id, fn] : checks) {
        if (!only.empty() && !only.count(id)) continue;
        std::printf("[%2d] running...\n", id);
        std::fflush(stdout);
        CheckResult r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r.id = id;
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%2d] %s  %s  [%.1fs]\n", r.id, r.pass ? "PASS" : "FAIL",
                    r.detail.c_str(), r.seconds);
        std::fflush(stdout);
        results.push_back(r);
    }

    std::sort(results.begin(), results.end(),
              [](const CheckResult& a, const CheckResult& b) { return a.id < b.id; });
    int passed = 0;
    std::printf("\n");
    for (const auto& r : results) {
        std::printf("criterion %2d: %s  %s\n", r.id, r.pass ? "PASS" : "FAIL",
                    r.detail.c_str());
        passed += r.pass ? 1 : 0;
    }
    std::printf("acceptance: %d/%zu criteria passed\n", passed, results.size());
    return passed == static_cast<int>(results.size()) ? 0 : 1;
}
