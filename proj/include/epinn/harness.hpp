#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinn/active.hpp"
#include "epinn/ensemble.hpp"
#include "epinn/oracle.hpp"

namespace epinn {

using ordered_json = nlohmann::ordered_json;

// Versioned, strictly parsed experiment description. Field semantics follow
// the benchmark presets; unknown keys are rejected so typos cannot silently
// fall back to defaults.
struct ExperimentConfig {
    int schema_version = 1;
    std::string problem;     // "source2d", "diffusion-sinusoidal", "diffusion-grf"
    std::string out_dir = "runs/out";
    std::uint64_t master_seed = 1;
    std::string backend = "parallel"; // "serial" or "parallel"
    int members = 5;
    double noise_std = 0.0;
    // Source benchmark only; diffusion uses a fixed sensor array derived from
    // the oracle grid. Sensors are drawn from a sensor_grid^2 candidate
    // lattice nested in the oracle grid.
    int sensor_count = 0;
    int sensor_grid = 50;

    int oracle_n = 0;               // source: oracle grid is n x n
    int oracle_nx = 0, oracle_nt = 0; // diffusion space-time grid

    int colloc_nx = 0, colloc_nb = 0; // second axis: y nodes or t nodes

    LossWeights weights;
    double lr_u = 0.003, lr_m = 0.005;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t train_steps = 0;
    std::size_t trace_interval = 500;
    std::size_t pretrain_max_steps = 0;
    double pretrain_target = 0.0;

    bool at_enabled = false;

    bool as_enabled = false;
    AsConfig as;

    bool dropout_baseline = false;
    double dropout_rate = 0.1;
    int dropout_passes = 100;

    void validate() const;
    bool is_source() const { return problem == "source2d"; }
    bool is_grf() const { return problem == "diffusion-grf"; }
};

ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const ordered_json& j);
ExperimentConfig load_config_file(const std::string& path);

// Hex content hash over the canonical serialization, out_dir excluded: the
// same experiment written to two directories shares one identity.
std::string config_digest(const ExperimentConfig& cfg);

// name -> canonical JSON text; full-scale presets plus the desk family.
const std::map<std::string, std::string>& preset_texts();
ExperimentConfig preset_config(const std::string& name);

// Everything derived deterministically from (config, master seed) before
// any network exists.
struct GeneratedData {
    InverseProblem problem;
    ObservationSet observations;
    PointSet collocation;
    SensorLayout sensors;
    PointSet qoi_eval;              // metrics / acquisition grid
    std::vector<double> qoi_truth;  // truth in aggregation space on qoi_eval
    std::vector<double> u_truth;    // flattened oracle solution field
};

GeneratedData generate_data(const ExperimentConfig& cfg);

// Persistence. Every artifact embeds the config digest: JSON documents in a
// "config_digest" field, CSVs in a leading comment line.
void write_dataset_csv(const std::string& path, const std::string& digest,
                       const ObservationSet& obs,
                       const std::vector<std::string>& coord_names);
void write_posterior_csv(const std::string& path, const std::string& digest,
                         const PosteriorField& field,
                         const std::vector<std::string>& coord_names);
void write_trace_csv(const std::string& path, const std::string& digest,
                     const std::vector<TraceRow>& pretrain,
                     const std::vector<TraceRow>& joint);
void write_as_trace_csv(const std::string& path, const std::string& digest,
                        const AsResult& result,
                        const std::vector<std::string>& coord_names);

void write_checkpoint(const std::string& path, const std::string& digest,
                      const std::string& problem, const EnsembleResult& ens);
// Rejects unknown schema versions and digest mismatches by name.
EnsembleResult read_checkpoint(const std::string& path, const std::string& digest);

// Orchestration. Each stage writes its artifacts under cfg.out_dir; on
// failure a FAILED marker naming the stage is left behind and the error is
// rethrown for the CLI to turn into a nonzero exit.
struct RunSummary {
    double r2 = 0.0, rel_l2 = 0.0, coverage = 0.0;
    int members_failed = 0;
    LossTerms final_losses; // mean over surviving members
};

void run_generate(const ExperimentConfig& cfg);
RunSummary run_train(const ExperimentConfig& cfg);
RunSummary run_evaluate(const ExperimentConfig& cfg);

struct SampleSummary {
    bool converged = false;
    std::size_t iterations = 0;
    double r2 = 0.0, rel_l2 = 0.0;
};
SampleSummary run_sample(const ExperimentConfig& cfg);

// Aggregates metrics documents under root/{run}/ into a comparison table
// (report.csv and table.txt in root).
void run_report(const std::string& root);

} // namespace epinn
