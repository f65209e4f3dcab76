#include "epinn/harness.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "epinn/common.hpp"

namespace epinn {

namespace {

void check_known_keys(const ordered_json& j, const char* ctx,
                      std::initializer_list<const char*> keys) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : keys)
            if (item.key() == k) { known = true; break; }
        if (!known)
            throw IoError("unknown config key " + std::string(ctx) + "." + item.key());
    }
}

const ordered_json& get_obj(const ordered_json& j, const char* key) {
    if (!j.contains(key)) throw IoError("missing config section " + std::string(key));
    const auto& v = j.at(key);
    if (!v.is_object()) throw IoError("config section " + std::string(key) + " must be an object");
    return v;
}

template <class T>
T get_num(const ordered_json& j, const char* ctx, const char* key) {
    if (!j.contains(key))
        throw IoError("missing config key " + std::string(ctx) + "." + key);
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean())
            throw IoError("config key " + std::string(ctx) + "." + key + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string())
            throw IoError("config key " + std::string(ctx) + "." + key + " must be a string");
    } else {
        if (!v.is_number())
            throw IoError("config key " + std::string(ctx) + "." + key + " must be a number");
    }
    return v.get<T>();
}

} // namespace

void ExperimentConfig::validate() const {
    if (schema_version != 1)
        throw IoError("config schema_version: expected 1, found " + std::to_string(schema_version));
    const bool source = problem == "source2d";
    const bool diffusion = problem == "diffusion-sinusoidal" || problem == "diffusion-grf";
    if (!source && !diffusion) throw IoError("unknown problem \"" + problem + "\"");
    if (backend != "serial" && backend != "parallel")
        throw IoError("backend must be \"serial\" or \"parallel\"");
    if (out_dir.empty()) throw IoError("out_dir must not be empty");
    if (dropout_baseline) {
        if (members != 1)
            throw IoError("dropout baseline trains a single member; set members to 1");
        if (!(dropout_rate > 0.0) || dropout_rate >= 1.0)
            throw IoError("dropout rate must lie in (0, 1)");
        if (dropout_passes < 2) throw IoError("dropout passes must be at least 2");
    } else if (members < 2) {
        throw IoError("ensemble needs at least 2 members");
    }
    if (noise_std < 0.0) throw IoError("noise_std must be nonnegative");
    if (train_steps == 0) throw IoError("train_steps must be positive");
    if (trace_interval == 0) throw IoError("trace_interval must be positive");
    if (!(lr_u > 0.0) || !(lr_m > 0.0)) throw IoError("learning rates must be positive");
    if (pretrain_target < 0.0) throw IoError("pretrain target must be nonnegative");
    if (source) {
        if (oracle_n < 5) throw IoError("oracle.n too small");
        if (sensor_grid < 2 || (oracle_n - 1) % (sensor_grid - 1) != 0)
            throw IoError("sensor_grid must nest in the oracle grid: (n-1) divisible by (sensor_grid-1)");
        if (sensor_count < 1 || sensor_count > sensor_grid * sensor_grid)
            throw IoError("sensor_count must lie in [1, sensor_grid^2]");
    } else {
        if (oracle_nx < 5 || (oracle_nx - 1) % 4 != 0)
            throw IoError("oracle.nx must satisfy (nx-1) divisible by 4 for the sensor array");
        if (oracle_nt < 13 || (oracle_nt - 1) % 12 != 0)
            throw IoError("oracle.nt must satisfy (nt-1) divisible by 12 for the sensor times");
    }
    if (colloc_nx < 2 || colloc_nb < 2) throw IoError("collocation grid must be at least 2x2");
    if (as_enabled) {
        if (!(as.alpha > 0.0)) throw IoError("active_sampling.alpha must be positive");
        if (as.max_iterations == 0) throw IoError("active_sampling.max_iterations must be positive");
        if (as.retrain_steps == 0) throw IoError("active_sampling.retrain_steps must be positive");
    }
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["schema_version"] = cfg.schema_version;
    j["problem"] = cfg.problem;
    j["out_dir"] = cfg.out_dir;
    j["master_seed"] = cfg.master_seed;
    j["backend"] = cfg.backend;
    j["members"] = cfg.members;
    j["noise_std"] = cfg.noise_std;
    if (cfg.is_source()) {
        j["sensor_count"] = cfg.sensor_count;
        j["sensor_grid"] = cfg.sensor_grid;
        j["oracle"] = ordered_json{{"n", cfg.oracle_n}};
        j["collocation"] = ordered_json{{"nx", cfg.colloc_nx}, {"ny", cfg.colloc_nb}};
    } else {
        j["oracle"] = ordered_json{{"nx", cfg.oracle_nx}, {"nt", cfg.oracle_nt}};
        j["collocation"] = ordered_json{{"nx", cfg.colloc_nx}, {"nt", cfg.colloc_nb}};
    }
    j["weights"] = ordered_json{{"data", cfg.weights.data}, {"pde", cfg.weights.pde}, {"bc", cfg.weights.bc}};
    j["optimizer"] = ordered_json{{"lr_u", cfg.lr_u}, {"lr_m", cfg.lr_m},
                                  {"beta1", cfg.beta1}, {"beta2", cfg.beta2}, {"eps", cfg.eps}};
    j["train_steps"] = cfg.train_steps;
    j["trace_interval"] = cfg.trace_interval;
    j["pretrain"] = ordered_json{{"max_steps", cfg.pretrain_max_steps}, {"target", cfg.pretrain_target}};
    j["at"] = ordered_json{{"enabled", cfg.at_enabled}};
    j["active_sampling"] = ordered_json{{"enabled", cfg.as_enabled}, {"alpha", cfg.as.alpha},
                                        {"max_iterations", cfg.as.max_iterations},
                                        {"retrain_steps", cfg.as.retrain_steps}};
    j["dropout_baseline"] = ordered_json{{"enabled", cfg.dropout_baseline},
                                         {"rate", cfg.dropout_rate}, {"passes", cfg.dropout_passes}};
    return j;
}

ExperimentConfig config_from_json(const ordered_json& j) {
    if (!j.is_object()) throw IoError("config root must be an object");
    check_known_keys(j, "root",
                     {"schema_version", "problem", "out_dir", "master_seed", "backend", "members",
                      "noise_std", "sensor_count", "sensor_grid", "oracle", "collocation", "weights",
                      "optimizer", "train_steps", "trace_interval", "pretrain", "at",
                      "active_sampling", "dropout_baseline", "config_digest"});
    ExperimentConfig cfg;
    cfg.schema_version = get_num<int>(j, "root", "schema_version");
    if (cfg.schema_version != 1)
        throw IoError("config schema_version: expected 1, found " + std::to_string(cfg.schema_version));
    cfg.problem = get_num<std::string>(j, "root", "problem");
    cfg.out_dir = get_num<std::string>(j, "root", "out_dir");
    cfg.master_seed = get_num<std::uint64_t>(j, "root", "master_seed");
    cfg.backend = get_num<std::string>(j, "root", "backend");
    cfg.members = get_num<int>(j, "root", "members");
    cfg.noise_std = get_num<double>(j, "root", "noise_std");

    const auto& oracle = get_obj(j, "oracle");
    const auto& colloc = get_obj(j, "collocation");
    if (cfg.problem == "source2d") {
        cfg.sensor_count = get_num<int>(j, "root", "sensor_count");
        cfg.sensor_grid = get_num<int>(j, "root", "sensor_grid");
        check_known_keys(oracle, "oracle", {"n"});
        cfg.oracle_n = get_num<int>(oracle, "oracle", "n");
        check_known_keys(colloc, "collocation", {"nx", "ny"});
        cfg.colloc_nx = get_num<int>(colloc, "collocation", "nx");
        cfg.colloc_nb = get_num<int>(colloc, "collocation", "ny");
    } else {
        if (j.contains("sensor_count") || j.contains("sensor_grid"))
            throw IoError("sensor_count/sensor_grid apply to source2d only; the diffusion sensor array is fixed");
        check_known_keys(oracle, "oracle", {"nx", "nt"});
        cfg.oracle_nx = get_num<int>(oracle, "oracle", "nx");
        cfg.oracle_nt = get_num<int>(oracle, "oracle", "nt");
        check_known_keys(colloc, "collocation", {"nx", "nt"});
        cfg.colloc_nx = get_num<int>(colloc, "collocation", "nx");
        cfg.colloc_nb = get_num<int>(colloc, "collocation", "nt");
    }

    const auto& w = get_obj(j, "weights");
    check_known_keys(w, "weights", {"data", "pde", "bc"});
    cfg.weights.data = get_num<double>(w, "weights", "data");
    cfg.weights.pde = get_num<double>(w, "weights", "pde");
    cfg.weights.bc = get_num<double>(w, "weights", "bc");

    const auto& opt = get_obj(j, "optimizer");
    check_known_keys(opt, "optimizer", {"lr_u", "lr_m", "beta1", "beta2", "eps"});
    cfg.lr_u = get_num<double>(opt, "optimizer", "lr_u");
    cfg.lr_m = get_num<double>(opt, "optimizer", "lr_m");
    cfg.beta1 = get_num<double>(opt, "optimizer", "beta1");
    cfg.beta2 = get_num<double>(opt, "optimizer", "beta2");
    cfg.eps = get_num<double>(opt, "optimizer", "eps");

    cfg.train_steps = get_num<std::size_t>(j, "root", "train_steps");
    cfg.trace_interval = get_num<std::size_t>(j, "root", "trace_interval");

    const auto& pre = get_obj(j, "pretrain");
    check_known_keys(pre, "pretrain", {"max_steps", "target"});
    cfg.pretrain_max_steps = get_num<std::size_t>(pre, "pretrain", "max_steps");
    cfg.pretrain_target = get_num<double>(pre, "pretrain", "target");

    const auto& at = get_obj(j, "at");
    check_known_keys(at, "at", {"enabled"});
    cfg.at_enabled = get_num<bool>(at, "at", "enabled");

    const auto& as = get_obj(j, "active_sampling");
    check_known_keys(as, "active_sampling", {"enabled", "alpha", "max_iterations", "retrain_steps"});
    cfg.as_enabled = get_num<bool>(as, "active_sampling", "enabled");
    cfg.as.alpha = get_num<double>(as, "active_sampling", "alpha");
    cfg.as.max_iterations = get_num<std::size_t>(as, "active_sampling", "max_iterations");
    cfg.as.retrain_steps = get_num<std::size_t>(as, "active_sampling", "retrain_steps");

    const auto& drop = get_obj(j, "dropout_baseline");
    check_known_keys(drop, "dropout_baseline", {"enabled", "rate", "passes"});
    cfg.dropout_baseline = get_num<bool>(drop, "dropout_baseline", "enabled");
    cfg.dropout_rate = get_num<double>(drop, "dropout_baseline", "rate");
    cfg.dropout_passes = get_num<int>(drop, "dropout_baseline", "passes");

    cfg.validate();

    // Optional integrity field: a stored digest must match the content.
    if (j.contains("config_digest")) {
        const auto stored = get_num<std::string>(j, "root", "config_digest");
        const auto actual = config_digest(cfg);
        if (stored != actual)
            throw IoError("config_digest mismatch: stored " + stored + ", content hashes to " + actual);
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    ordered_json j;
    try {
        j = ordered_json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_digest(const ExperimentConfig& cfg) {
    ordered_json j = config_to_json(cfg);
    j.erase("out_dir"); // the experiment identity is independent of where it is written
    const std::uint64_t h = fnv1a64(j.dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

ExperimentConfig base_source() {
    ExperimentConfig c;
    c.problem = "source2d";
    c.out_dir = "runs/source2d";
    c.members = 5;
    c.noise_std = 0.02;
    c.sensor_count = 2000;
    c.sensor_grid = 50;
    c.oracle_n = 197;
    c.colloc_nx = 50;
    c.colloc_nb = 48;
    c.weights = {1.0, 1.0, 1.0};
    c.train_steps = 100000;
    c.trace_interval = 1000;
    c.at_enabled = true;
    return c;
}

ExperimentConfig base_diffusion(bool grf) {
    ExperimentConfig c;
    c.problem = grf ? "diffusion-grf" : "diffusion-sinusoidal";
    c.out_dir = grf ? "runs/diffusion-grf" : "runs/diffusion-sinusoidal";
    c.members = 5;
    c.noise_std = grf ? 0.05 : 0.01;
    c.oracle_nx = 49;
    c.oracle_nt = 301;
    c.colloc_nx = 50;
    c.colloc_nb = 100;
    c.weights = {1.0, 0.001, 0.001};
    c.train_steps = 50000;
    c.trace_interval = 1000;
    c.pretrain_max_steps = 50000;
    c.pretrain_target = 1e-4;
    c.at_enabled = true;
    return c;
}

std::map<std::string, std::string> build_presets() {
    std::map<std::string, ExperimentConfig> cfgs;
    cfgs["source2d"] = base_source();
    cfgs["diffusion-sinusoidal"] = base_diffusion(false);
    cfgs["diffusion-grf"] = base_diffusion(true);

    // Desk family: reduced step budgets, everything else verbatim.
    {
        ExperimentConfig c = base_source();
        c.out_dir = "runs/desk-source2d";
        c.train_steps = 30000;
        cfgs["desk-source2d"] = c;
    }
    for (bool grf : {false, true}) {
        ExperimentConfig c = base_diffusion(grf);
        c.out_dir = grf ? "runs/desk-diffusion-grf" : "runs/desk-diffusion-sinusoidal";
        c.train_steps = 20000;
        c.pretrain_max_steps = 20000;
        cfgs[grf ? "desk-diffusion-grf" : "desk-diffusion-sinusoidal"] = c;
    }

    // Smoke family: minutes-scale sanity runs, not benchmark settings.
    {
        ExperimentConfig c = base_source();
        c.out_dir = "runs/smoke-source2d";
        c.backend = "serial";
        c.members = 2;
        c.sensor_count = 120;
        c.sensor_grid = 25;
        c.oracle_n = 49;
        c.colloc_nx = 12;
        c.colloc_nb = 10;
        c.train_steps = 50;
        c.trace_interval = 10;
        cfgs["smoke-source2d"] = c;
    }
    {
        ExperimentConfig c = base_diffusion(false);
        c.out_dir = "runs/smoke-diffusion";
        c.backend = "serial";
        c.members = 2;
        c.colloc_nx = 13;
        c.colloc_nb = 12;
        c.train_steps = 50;
        c.trace_interval = 10;
        c.pretrain_max_steps = 30;
        c.as.max_iterations = 3;
        c.as.retrain_steps = 100;
        cfgs["smoke-diffusion"] = c;
    }

    std::map<std::string, std::string> out;
    for (auto& [name, cfg] : cfgs) {
        cfg.validate();
        out[name] = config_to_json(cfg).dump(2) + "\n";
    }
    return out;
}

} // namespace

const std::map<std::string, std::string>& preset_texts() {
    static const std::map<std::string, std::string> presets = build_presets();
    return presets;
}

ExperimentConfig preset_config(const std::string& name) {
    const auto& all = preset_texts();
    auto it = all.find(name);
    if (it == all.end()) {
        std::string names;
        for (const auto& [n, _] : all) names += (names.empty() ? "" : ", ") + n;
        throw IoError("unknown preset \"" + name + "\" (available: " + names + ")");
    }
    return config_from_json(ordered_json::parse(it->second));
}

namespace {

PointSet lattice2(double ax_lo, double ax_hi, int na, double bx_lo, double bx_hi, int nb) {
    PointSet p;
    p.dim = 2;
    p.x.reserve(static_cast<std::size_t>(na) * nb * 2);
    for (int j = 0; j < nb; ++j) {
        const double b = bx_lo + (bx_hi - bx_lo) * j / (nb - 1);
        for (int i = 0; i < na; ++i) {
            const double a = ax_lo + (ax_hi - ax_lo) * i / (na - 1);
            p.x.push_back(a);
            p.x.push_back(b);
        }
    }
    return p;
}

} // namespace

GeneratedData generate_data(const ExperimentConfig& cfg) {
    cfg.validate();
    GeneratedData g;
    const std::uint64_t sensor_seed = derive_seed(cfg.master_seed, "sensors", 0);
    const std::uint64_t noise_seed = derive_seed(cfg.master_seed, "noise", 0);

    if (cfg.is_source()) {
        SourceProblemSpec spec;
        Grid2d u = solve_poisson(spec, cfg.oracle_n);
        g.sensors = random_subgrid_sensors(cfg.oracle_n, cfg.sensor_grid, cfg.sensor_count,
                                           sensor_seed);
        g.observations = observe(u.v, g.sensors, cfg.noise_std, noise_seed);
        g.collocation = lattice2(0.0, 1.0, cfg.colloc_nx, 0.0, 1.0, cfg.colloc_nb);
        g.problem = make_source_problem(50);
        g.qoi_eval = lattice2(0.0, 1.0, cfg.oracle_n, 0.0, 1.0, cfg.oracle_n);
        g.qoi_truth.resize(g.qoi_eval.n());
        for (std::size_t i = 0; i < g.qoi_eval.n(); ++i) {
            const double* p = g.qoi_eval.point(i);
            g.qoi_truth[i] = spec.source_value(p[0], p[1]);
        }
        g.u_truth = u.v;
    } else {
        DiffusionProblemSpec spec;
        const int nx = cfg.oracle_nx, nt = cfg.oracle_nt;
        std::vector<double> nodes(nx);
        for (int i = 0; i < nx; ++i) nodes[i] = static_cast<double>(i) / (nx - 1);
        std::vector<double> m_true(nx);
        if (cfg.is_grf()) {
            m_true = sample_grf(nodes, 0.3, derive_seed(cfg.master_seed, "grf", 0));
        } else {
            for (int i = 0; i < nx; ++i) m_true[i] = sinusoidal_log_diffusivity(nodes[i]);
        }
        std::vector<double> v(nx);
        for (int i = 0; i < nx; ++i) v[i] = spec.v_floor + std::exp(m_true[i]);
        Grid1dTime u = solve_diffusion(spec, v, nx, nt);
        // 13 sensors every 4th node; 9 readout times from t/3 to t_end, step t/12.
        g.sensors = spacetime_sensors(u, 4, (nt - 1) / 3, (nt - 1) / 12, nt - 1);
        g.observations = observe(u.u, g.sensors, cfg.noise_std, noise_seed);
        g.collocation = lattice2(0.0, 1.0, cfg.colloc_nx, 0.0, spec.t_end, cfg.colloc_nb);
        g.problem = make_diffusion_problem(100, 50, spec.t_end);
        g.qoi_eval.dim = 1;
        g.qoi_eval.x = nodes;
        g.qoi_truth = std::move(m_true);
        g.u_truth = u.u;
    }
    return g;
}

} // namespace epinn
