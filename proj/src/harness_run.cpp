#include "epinn/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "epinn/common.hpp"
#include "epinn/metrics.hpp"

namespace epinn {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << content;
    if (!f) throw IoError("write to " + path + " failed");
}

ordered_json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    try {
        return ordered_json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path + ": " + e.what());
    }
}

Backend backend_of(const ExperimentConfig& cfg) {
    return cfg.backend == "parallel" ? Backend::Parallel : Backend::Serial;
}

std::vector<std::string> obs_coord_names(const ExperimentConfig& cfg) {
    return cfg.is_source() ? std::vector<std::string>{"x", "y"}
                           : std::vector<std::string>{"x", "t"};
}

std::vector<std::string> qoi_coord_names(const ExperimentConfig& cfg) {
    return cfg.is_source() ? std::vector<std::string>{"x", "y"}
                           : std::vector<std::string>{"x"};
}

MemberTrainer::Options member_options(const ExperimentConfig& cfg, const InverseProblem& problem) {
    MemberTrainer::Options o;
    o.weights = cfg.weights;
    o.at.enabled = cfg.at_enabled;
    o.at.tau = cfg.at_enabled ? fgm_radius(problem.u_map) : 0.0;
    o.u_opt = {cfg.lr_u, cfg.beta1, cfg.beta2, cfg.eps};
    o.m_opt = {cfg.lr_m, cfg.beta1, cfg.beta2, cfg.eps};
    o.backend = backend_of(cfg);
    o.qoi_dropout_rate = cfg.dropout_baseline ? cfg.dropout_rate : 0.0;
    o.dropout_seed = derive_seed(cfg.master_seed, "dropout", 0);
    o.trace_interval = cfg.trace_interval;
    return o;
}

// Leaves a marker naming the failed stage next to whatever artifacts were
// already flushed, then lets the error escape to the caller.
template <class F>
auto stage(const std::string& dir, const char* name, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        try {
            write_text(dir + "/FAILED", std::string(name) + ": " + e.what() + "\n");
        } catch (...) {
        }
        throw;
    }
}

std::string run_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::error_code ec;
    fs::remove(fs::path(cfg.out_dir) / "FAILED", ec);
    return cfg.out_dir;
}

void write_truth_csv(const std::string& path, const std::string& digest,
                     const PointSet& pts, const std::vector<double>& truth,
                     const std::vector<std::string>& coord_names) {
    std::string s = "# config_digest=" + digest + "\n";
    for (const auto& c : coord_names) s += c + ",";
    s += "value\n";
    for (std::size_t i = 0; i < pts.n(); ++i) {
        const double* p = pts.point(i);
        for (int d = 0; d < pts.dim; ++d) s += strf(p[d]) + ",";
        s += strf(truth[i]) + "\n";
    }
    write_text(path, s);
}

void write_generate_artifacts(const ExperimentConfig& cfg, const std::string& dir,
                              const std::string& digest, const GeneratedData& gen) {
    write_dataset_csv(dir + "/dataset.csv", digest, gen.observations, obs_coord_names(cfg));
    ordered_json meta;
    meta["schema_version"] = 1;
    meta["config_digest"] = digest;
    meta["problem"] = cfg.problem;
    meta["coords"] = obs_coord_names(cfg);
    meta["noise_std"] = cfg.noise_std;
    meta["sensor_seed"] = derive_seed(cfg.master_seed, "sensors", 0);
    meta["noise_seed"] = derive_seed(cfg.master_seed, "noise", 0);
    meta["sensor_count"] = gen.sensors.pts.n();
    if (cfg.is_source())
        meta["oracle"] = ordered_json{{"n", cfg.oracle_n}};
    else
        meta["oracle"] = ordered_json{{"nx", cfg.oracle_nx}, {"nt", cfg.oracle_nt}};
    meta["sensor_nodes"] = gen.sensors.node_index;
    write_text(dir + "/dataset_meta.json", meta.dump(2) + "\n");
    write_truth_csv(dir + "/truth.csv", digest, gen.qoi_eval, gen.qoi_truth,
                    qoi_coord_names(cfg));
}

ordered_json losses_json(const LossTerms& t) {
    return ordered_json{{"data", t.data}, {"pde", t.pde}, {"bc", t.bc},
                        {"at", t.at},     {"qoi", t.qoi}, {"total", t.total}};
}

// Loss components at the stored parameters, one entry per surviving member.
// For the dropout baseline the mask of evaluation draw 0 is used.
std::vector<LossTerms> final_losses(const ExperimentConfig& cfg, const GeneratedData& gen,
                                    const EnsembleResult& ens) {
    MemberTrainer probe(gen.problem, gen.observations, gen.collocation,
                        member_options(cfg, gen.problem), 1, 2);
    std::vector<LossTerms> out;
    for (const auto& m : ens.members) {
        if (m.failed) continue;
        probe.set_params(m.u_params, m.m_params);
        out.push_back(probe.losses());
    }
    return out;
}

PosteriorField make_posterior(const ExperimentConfig& cfg, const GeneratedData& gen,
                              const EnsembleResult& ens) {
    if (cfg.dropout_baseline) {
        if (ens.members.empty() || ens.members[0].failed)
            throw ContractError("dropout baseline checkpoint holds no usable member");
        return mc_dropout_posterior(gen.problem, ens.members[0].m_params, gen.qoi_eval,
                                    cfg.dropout_passes, cfg.dropout_rate,
                                    derive_seed(cfg.master_seed, "dropout-eval", 0),
                                    backend_of(cfg));
    }
    return ensemble_posterior(gen.problem, ens, gen.qoi_eval, backend_of(cfg));
}

RunSummary evaluate_and_write(const ExperimentConfig& cfg, const std::string& dir,
                              const std::string& digest, const GeneratedData& gen,
                              const EnsembleResult& ens) {
    PosteriorField post = make_posterior(cfg, gen, ens);
    write_posterior_csv(dir + "/posterior.csv", digest, post, qoi_coord_names(cfg));

    RunSummary s;
    s.r2 = r_squared(post.mean, gen.qoi_truth);
    s.rel_l2 = relative_l2(post.mean, gen.qoi_truth);
    s.coverage = coverage_fraction(post, gen.qoi_truth, 2.0);
    s.members_failed = ens.n_failed();
    const auto member_losses = final_losses(cfg, gen, ens);
    LossTerms mean;
    for (const auto& t : member_losses) {
        mean.data += t.data; mean.pde += t.pde; mean.bc += t.bc;
        mean.at += t.at; mean.qoi += t.qoi; mean.total += t.total;
    }
    if (!member_losses.empty()) {
        const double inv = 1.0 / static_cast<double>(member_losses.size());
        mean.data *= inv; mean.pde *= inv; mean.bc *= inv;
        mean.at *= inv; mean.qoi *= inv; mean.total *= inv;
    }
    s.final_losses = mean;

    ordered_json m;
    m["schema_version"] = 1;
    m["config_digest"] = digest;
    m["method"] = cfg.dropout_baseline ? "mc-dropout" : "epinn";
    ordered_json cj = config_to_json(cfg);
    cj.erase("out_dir"); // keeps the document identical across output locations
    m["config"] = cj;
    m["members_failed"] = s.members_failed;
    m["r2"] = s.r2;
    m["rel_l2"] = s.rel_l2;
    m["coverage_2sigma"] = s.coverage;
    m["final_losses_mean"] = losses_json(mean);
    ordered_json per = ordered_json::array();
    for (const auto& t : member_losses) per.push_back(losses_json(t));
    m["final_losses_member"] = per;
    write_text(dir + "/metrics.json", m.dump(2) + "\n");
    return s;
}

std::vector<std::size_t> surviving_indices(const EnsembleResult& ens) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ens.members.size(); ++i)
        if (!ens.members[i].failed) idx.push_back(i);
    return idx;
}

SampleSummary sample_from_ensemble(const ExperimentConfig& cfg, const std::string& dir,
                                   const std::string& digest, const GeneratedData& gen,
                                   EnsembleResult& ens) {
    if (cfg.dropout_baseline)
        throw ContractError("active sampling requires an ensemble, not the dropout baseline");
    const auto idx = surviving_indices(ens);
    if (idx.size() < 2)
        throw ContractError("active sampling needs at least two surviving members");

    const auto opts = member_options(cfg, gen.problem);
    std::vector<MemberTrainer> trainers;
    trainers.reserve(idx.size());
    for (std::size_t i : idx) {
        trainers.emplace_back(gen.problem, gen.observations, gen.collocation, opts,
                              derive_seed(cfg.master_seed, "member-u", i),
                              derive_seed(cfg.master_seed, "member-m", i));
        trainers.back().set_params(ens.members[i].u_params, ens.members[i].m_params);
    }

    AsResult res = run_active_sampling(trainers, gen.qoi_eval, gen.qoi_truth, cfg.as);
    write_as_trace_csv(dir + "/as_trace.csv", digest, res, qoi_coord_names(cfg));
    write_posterior_csv(dir + "/posterior_as.csv", digest, res.final_posterior,
                        qoi_coord_names(cfg));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        ens.members[idx[k]].u_params = trainers[k].u_params();
        ens.members[idx[k]].m_params = trainers[k].m_params();
    }
    write_checkpoint(dir + "/checkpoint_as.json", digest, cfg.problem, ens);

    SampleSummary s;
    s.converged = res.converged;
    s.iterations = res.iterations.size();
    s.r2 = r_squared(res.final_posterior.mean, gen.qoi_truth);
    s.rel_l2 = relative_l2(res.final_posterior.mean, gen.qoi_truth);

    ordered_json m;
    m["schema_version"] = 1;
    m["config_digest"] = digest;
    m["converged"] = res.converged;
    m["eta_degenerate"] = res.eta_degenerate;
    m["iterations"] = s.iterations;
    m["r2"] = s.r2;
    m["rel_l2"] = s.rel_l2;
    m["coverage_2sigma"] = coverage_fraction(res.final_posterior, gen.qoi_truth, 2.0);
    write_text(dir + "/as_metrics.json", m.dump(2) + "\n");
    return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

void write_dataset_csv(const std::string& path, const std::string& digest,
                       const ObservationSet& obs,
                       const std::vector<std::string>& coord_names) {
    if (static_cast<int>(coord_names.size()) != obs.pts.dim)
        throw ContractError("dataset coord names do not match point dimension");
    std::string s = "# config_digest=" + digest + "\n";
    for (const auto& c : coord_names) s += c + ",";
    s += "value\n";
    for (std::size_t i = 0; i < obs.pts.n(); ++i) {
        const double* p = obs.pts.point(i);
        for (int d = 0; d < obs.pts.dim; ++d) s += strf(p[d]) + ",";
        s += strf(obs.values[i]) + "\n";
    }
    write_text(path, s);
}

void write_posterior_csv(const std::string& path, const std::string& digest,
                         const PosteriorField& field,
                         const std::vector<std::string>& coord_names) {
    if (static_cast<int>(coord_names.size()) != field.pts.dim)
        throw ContractError("posterior coord names do not match point dimension");
    std::string s = "# config_digest=" + digest + "\n";
    for (const auto& c : coord_names) s += c + ",";
    s += "mu,sigma2";
    for (std::size_t k = 0; k < field.member_values.size(); ++k)
        s += ",member_" + std::to_string(k);
    s += "\n";
    for (std::size_t i = 0; i < field.pts.n(); ++i) {
        const double* p = field.pts.point(i);
        for (int d = 0; d < field.pts.dim; ++d) s += strf(p[d]) + ",";
        s += strf(field.mean[i]) + "," + strf(field.variance[i]);
        for (const auto& mv : field.member_values) s += "," + strf(mv[i]);
        s += "\n";
    }
    write_text(path, s);
}

void write_trace_csv(const std::string& path, const std::string& digest,
                     const std::vector<TraceRow>& pretrain,
                     const std::vector<TraceRow>& joint) {
    std::string s = "# config_digest=" + digest + "\n";
    s += "phase,step,data,pde,bc,at,qoi,total\n";
    auto emit = [&s](const char* phase, const TraceRow& r) {
        s += std::string(phase) + "," + std::to_string(r.step);
        const LossTerms& t = r.losses;
        for (double v : {t.data, t.pde, t.bc, t.at, t.qoi, t.total}) s += "," + strf(v);
        s += "\n";
    };
    for (const auto& r : pretrain) emit("pretrain", r);
    for (const auto& r : joint) emit("train", r);
    write_text(path, s);
}

void write_as_trace_csv(const std::string& path, const std::string& digest,
                        const AsResult& result,
                        const std::vector<std::string>& coord_names) {
    std::string s = "# config_digest=" + digest + "\n";
    s += "iteration";
    if (coord_names.size() == 1) {
        s += ",x_s";
    } else {
        for (std::size_t d = 0; d < coord_names.size(); ++d)
            s += ",x_s_" + std::to_string(d);
    }
    s += ",m_s,max_sigma,eta,r2,rel_l2\n";
    for (const auto& row : result.iterations) {
        if (row.x_s.size() != coord_names.size())
            throw ContractError("acquisition coord names do not match point dimension");
        s += std::to_string(row.iteration);
        for (double c : row.x_s) s += "," + strf(c);
        for (double v : {row.m_s, row.max_sigma, row.eta, row.r2, row.rel_l2})
            s += "," + strf(v);
        s += "\n";
    }
    write_text(path, s);
}

void write_checkpoint(const std::string& path, const std::string& digest,
                      const std::string& problem, const EnsembleResult& ens) {
    ordered_json j;
    j["schema_version"] = 1;
    j["config_digest"] = digest;
    j["problem"] = problem;
    ordered_json members = ordered_json::array();
    for (const auto& m : ens.members) {
        ordered_json e;
        e["failed"] = m.failed;
        e["failure"] = m.failure;
        // Failed members may hold non-finite parameters, which JSON cannot
        // round-trip; their parameters are dropped.
        e["u_params"] = m.failed ? std::vector<double>{} : m.u_params;
        e["m_params"] = m.failed ? std::vector<double>{} : m.m_params;
        members.push_back(std::move(e));
    }
    j["members"] = std::move(members);
    write_text(path, j.dump() + "\n");
}

EnsembleResult read_checkpoint(const std::string& path, const std::string& digest) {
    const ordered_json j = read_json_file(path);
    if (!j.is_object() || !j.contains("schema_version") || !j.at("schema_version").is_number_integer())
        throw IoError("checkpoint " + path + ": missing schema_version");
    const int ver = j.at("schema_version").get<int>();
    if (ver != 1)
        throw IoError("checkpoint schema_version: expected 1, found " + std::to_string(ver));
    if (!j.contains("config_digest") || !j.at("config_digest").is_string())
        throw IoError("checkpoint " + path + ": missing config_digest");
    const auto stored = j.at("config_digest").get<std::string>();
    if (stored != digest)
        throw IoError("checkpoint config_digest mismatch: checkpoint has " + stored +
                      ", current config hashes to " + digest);
    if (!j.contains("members") || !j.at("members").is_array())
        throw IoError("checkpoint " + path + ": missing members array");
    EnsembleResult ens;
    for (const auto& e : j.at("members")) {
        MemberResult m;
        m.failed = e.at("failed").get<bool>();
        m.failure = e.at("failure").get<std::string>();
        m.u_params = e.at("u_params").get<std::vector<double>>();
        m.m_params = e.at("m_params").get<std::vector<double>>();
        ens.members.push_back(std::move(m));
    }
    return ens;
}

void run_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = run_dir(cfg);
    const std::string digest = config_digest(cfg);
    stage(dir, "generate", [&] {
        GeneratedData gen = generate_data(cfg);
        write_text(dir + "/config.json", [&] {
            ordered_json j = config_to_json(cfg);
            j["config_digest"] = digest;
            return j.dump(2) + "\n";
        }());
        write_generate_artifacts(cfg, dir, digest, gen);
        std::cout << "[generate] " << gen.observations.pts.n() << " observations -> " << dir
                  << std::endl;
        return 0;
    });
}

RunSummary run_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = run_dir(cfg);
    const std::string digest = config_digest(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    std::string timing;

    GeneratedData gen = stage(dir, "generate", [&] {
        GeneratedData g = generate_data(cfg);
        write_text(dir + "/config.json", [&] {
            ordered_json j = config_to_json(cfg);
            j["config_digest"] = digest;
            return j.dump(2) + "\n";
        }());
        write_generate_artifacts(cfg, dir, digest, g);
        return g;
    });
    timing += "generate_seconds " + strf(seconds_since(t0)) + "\n";
    std::cout << "[generate] " << gen.observations.pts.n() << " observations, "
              << gen.collocation.n() << " collocation points" << std::endl;

    const auto t1 = std::chrono::steady_clock::now();
    EnsembleResult ens = stage(dir, "train", [&] {
        EnsembleResult r;
        if (cfg.dropout_baseline) {
            MemberTrainer t(gen.problem, gen.observations, gen.collocation,
                            member_options(cfg, gen.problem),
                            derive_seed(cfg.master_seed, "member-u", 0),
                            derive_seed(cfg.master_seed, "member-m", 0));
            MemberResult m;
            if (cfg.pretrain_max_steps > 0)
                m.pretrain_steps_taken =
                    t.pretrain(cfg.pretrain_max_steps, cfg.pretrain_target, &m.pretrain_trace);
            t.train(cfg.train_steps, &m.trace);
            m.u_params = t.u_params();
            m.m_params = t.m_params();
            r.members.push_back(std::move(m));
        } else {
            EnsembleConfig ec;
            ec.members = cfg.members;
            ec.master_seed = cfg.master_seed;
            ec.member = member_options(cfg, gen.problem);
            ec.pretrain_steps = cfg.pretrain_max_steps;
            ec.pretrain_target = cfg.pretrain_target;
            ec.train_steps = cfg.train_steps;
            r = train_ensemble(gen.problem, gen.observations, gen.collocation, ec);
        }
        for (std::size_t i = 0; i < r.members.size(); ++i)
            write_trace_csv(dir + "/trace_member_" + std::to_string(i) + ".csv", digest,
                            r.members[i].pretrain_trace, r.members[i].trace);
        write_checkpoint(dir + "/checkpoint.json", digest, cfg.problem, r);
        return r;
    });
    timing += "train_seconds " + strf(seconds_since(t1)) + "\n";
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
        const auto& m = ens.members[i];
        std::cout << "[train] member " << i << ": "
                  << (m.failed ? "FAILED (" + m.failure + ")"
                               : "pretrain " + std::to_string(m.pretrain_steps_taken) + " steps")
                  << std::endl;
    }

    const auto t2 = std::chrono::steady_clock::now();
    RunSummary s = stage(dir, "evaluate",
                         [&] { return evaluate_and_write(cfg, dir, digest, gen, ens); });
    timing += "evaluate_seconds " + strf(seconds_since(t2)) + "\n";
    std::cout << "[evaluate] r2 " << s.r2 << ", rel_l2 " << s.rel_l2 << ", coverage "
              << s.coverage << std::endl;

    if (cfg.as_enabled) {
        const auto t3 = std::chrono::steady_clock::now();
        SampleSummary as = stage(dir, "sample",
                                 [&] { return sample_from_ensemble(cfg, dir, digest, gen, ens); });
        timing += "sample_seconds " + strf(seconds_since(t3)) + "\n";
        std::cout << "[sample] " << as.iterations << " acquisitions, "
                  << (as.converged ? "converged" : "budget exhausted") << ", r2 " << as.r2
                  << std::endl;
    }

    timing += "total_seconds " + strf(seconds_since(t0)) + "\n";
    write_text(dir + "/timing.txt", timing);
    return s;
}

RunSummary run_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = run_dir(cfg);
    const std::string digest = config_digest(cfg);
    GeneratedData gen = stage(dir, "generate", [&] { return generate_data(cfg); });
    return stage(dir, "evaluate", [&] {
        EnsembleResult ens = read_checkpoint(dir + "/checkpoint.json", digest);
        for (const auto& m : ens.members) {
            if (m.failed) continue;
            if (m.u_params.size() != gen.problem.u_arch.param_count() ||
                m.m_params.size() != gen.problem.m_arch.param_count())
                throw IoError("checkpoint parameter counts do not fit the configured networks");
        }
        RunSummary s = evaluate_and_write(cfg, dir, digest, gen, ens);
        std::cout << "[evaluate] r2 " << s.r2 << ", rel_l2 " << s.rel_l2 << ", coverage "
                  << s.coverage << std::endl;
        return s;
    });
}

SampleSummary run_sample(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = run_dir(cfg);
    const std::string digest = config_digest(cfg);
    GeneratedData gen = stage(dir, "generate", [&] { return generate_data(cfg); });
    return stage(dir, "sample", [&] {
        EnsembleResult ens = read_checkpoint(dir + "/checkpoint.json", digest);
        for (const auto& m : ens.members) {
            if (m.failed) continue;
            if (m.u_params.size() != gen.problem.u_arch.param_count() ||
                m.m_params.size() != gen.problem.m_arch.param_count())
                throw IoError("checkpoint parameter counts do not fit the configured networks");
        }
        SampleSummary s = sample_from_ensemble(cfg, dir, digest, gen, ens);
        std::cout << "[sample] " << s.iterations << " acquisitions, "
                  << (s.converged ? "converged" : "budget exhausted") << ", r2 " << s.r2
                  << ", rel_l2 " << s.rel_l2 << std::endl;
        return s;
    });
}

void run_report(const std::string& root) {
    struct Row {
        std::string name, problem, method;
        bool at = false;
        int members = 0;
        std::uint64_t seed = 0;
        double noise = 0.0, r2 = 0.0, rel_l2 = 0.0, coverage = 0.0;
        bool has_as = false, as_converged = false;
        std::size_t as_iterations = 0;
        double as_r2 = 0.0, as_rel_l2 = 0.0;
    };
    std::vector<Row> rows;
    if (!fs::is_directory(root)) throw IoError("report root " + root + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "metrics.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        const ordered_json m = read_json_file((d / "metrics.json").string());
        Row r;
        r.name = d.filename().string();
        r.method = m.at("method").get<std::string>();
        const auto& c = m.at("config");
        r.problem = c.at("problem").get<std::string>();
        r.at = c.at("at").at("enabled").get<bool>();
        r.members = c.at("members").get<int>();
        r.seed = c.at("master_seed").get<std::uint64_t>();
        r.noise = c.at("noise_std").get<double>();
        r.r2 = m.at("r2").get<double>();
        r.rel_l2 = m.at("rel_l2").get<double>();
        r.coverage = m.at("coverage_2sigma").get<double>();
        if (fs::exists(d / "as_metrics.json")) {
            const ordered_json a = read_json_file((d / "as_metrics.json").string());
            r.has_as = true;
            r.as_converged = a.at("converged").get<bool>();
            r.as_iterations = a.at("iterations").get<std::size_t>();
            r.as_r2 = a.at("r2").get<double>();
            r.as_rel_l2 = a.at("rel_l2").get<double>();
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw IoError("no run directories with metrics.json under " + root);

    std::string csv =
        "run,problem,method,at,members,seed,noise_std,r2,rel_l2,coverage_2sigma,"
        "as_converged,as_iterations,as_r2,as_rel_l2\n";
    for (const auto& r : rows) {
        csv += r.name + "," + r.problem + "," + r.method + "," + (r.at ? "on" : "off") + "," +
               std::to_string(r.members) + "," + std::to_string(r.seed) + "," + strf(r.noise) +
               "," + strf(r.r2) + "," + strf(r.rel_l2) + "," + strf(r.coverage);
        if (r.has_as)
            csv += std::string(",") + (r.as_converged ? "yes" : "no") + "," +
                   std::to_string(r.as_iterations) + "," + strf(r.as_r2) + "," + strf(r.as_rel_l2);
        else
            csv += ",,,,";
        csv += "\n";
    }
    write_text(root + "/report.csv", csv);

    char line[256];
    std::string tbl;
    std::snprintf(line, sizeof line, "%-28s %-22s %-10s %-3s %2s %6s %7s %9s %9s %9s\n", "run",
                  "problem", "method", "at", "M", "seed", "noise", "r2", "rel_l2", "cov2s");
    tbl += line;
    tbl += std::string(112, '-') + "\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line,
                      "%-28s %-22s %-10s %-3s %2d %6llu %7.4g %9.4f %9.4f %9.4f\n",
                      r.name.c_str(), r.problem.c_str(), r.method.c_str(), r.at ? "on" : "off",
                      r.members, static_cast<unsigned long long>(r.seed), r.noise, r.r2, r.rel_l2,
                      r.coverage);
        tbl += line;
        if (r.has_as) {
            std::snprintf(line, sizeof line,
                          "%-28s   sampling: %s after %zu acquisitions, r2 %.4f, rel_l2 %.4f\n",
                          "", r.as_converged ? "converged" : "stopped", r.as_iterations, r.as_r2,
                          r.as_rel_l2);
            tbl += line;
        }
    }
    write_text(root + "/table.txt", tbl);
    std::cout << tbl;
}

} // namespace epinn
