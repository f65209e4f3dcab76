#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "epinn/common.hpp"
#include "epinn/harness.hpp"

namespace {

struct ConfigOpts {
    std::string config_path;
    std::string preset;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int members = 0;
    bool members_set = false;
    bool no_at = false;
    bool dropout_baseline = false;
};

void add_config_opts(CLI::App* cmd, ConfigOpts& o) {
    auto* cfg = cmd->add_option("--config", o.config_path, "experiment config file (JSON)");
    auto* pre = cmd->add_option("--preset", o.preset, "built-in preset name");
    cfg->excludes(pre);
    cmd->add_option("--out", o.out, "output directory (overrides the config)");
    cmd->add_option("--seed", o.seed, "master seed (overrides the config)")
        ->each([&o](const std::string&) { o.seed_set = true; });
    cmd->add_option("--members", o.members, "ensemble size (overrides the config)")
        ->each([&o](const std::string&) { o.members_set = true; });
    cmd->add_flag("--no-at", o.no_at, "disable adversarial training");
    cmd->add_flag("--dropout-baseline", o.dropout_baseline,
                  "train a single stochastic-mask member instead of an ensemble");
}

epinn::ExperimentConfig resolve_config(const ConfigOpts& o) {
    if (o.config_path.empty() == o.preset.empty())
        throw epinn::IoError("exactly one of --config or --preset is required");
    epinn::ExperimentConfig cfg = o.config_path.empty()
                                      ? epinn::preset_config(o.preset)
                                      : epinn::load_config_file(o.config_path);
    if (o.seed_set) cfg.master_seed = o.seed;
    if (o.members_set) cfg.members = o.members;
    if (o.no_at) cfg.at_enabled = false;
    if (o.dropout_baseline) {
        cfg.dropout_baseline = true;
        cfg.members = 1;
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Ensemble PINN inverse-problem trainer.\n"
        "Thread count follows OpenMP; set OMP_NUM_THREADS to bound the pool."};
    app.require_subcommand(1);

    ConfigOpts gen_o, train_o, eval_o, sample_o;
    auto* gen = app.add_subcommand("generate", "synthesize the dataset artifacts");
    add_config_opts(gen, gen_o);
    auto* train = app.add_subcommand(
        "train", "full pipeline: generate, train, evaluate (and sample when enabled)");
    add_config_opts(train, train_o);
    auto* eval = app.add_subcommand("evaluate", "recompute posterior and metrics from a checkpoint");
    add_config_opts(eval, eval_o);
    auto* sample = app.add_subcommand("sample", "max-variance acquisition from a checkpoint");
    add_config_opts(sample, sample_o);

    std::string report_root;
    auto* report = app.add_subcommand("report", "aggregate run directories into a comparison table");
    report->add_option("--root", report_root, "directory holding run subdirectories")->required();

    std::string preset_dir;
    auto* presets = app.add_subcommand("presets", "list built-in presets, or write them as files");
    presets->add_option("--write", preset_dir, "write every preset JSON into this directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            epinn::run_generate(resolve_config(gen_o));
        } else if (train->parsed()) {
            epinn::run_train(resolve_config(train_o));
        } else if (eval->parsed()) {
            epinn::run_evaluate(resolve_config(eval_o));
        } else if (sample->parsed()) {
            epinn::run_sample(resolve_config(sample_o));
        } else if (report->parsed()) {
            epinn::run_report(report_root);
        } else if (presets->parsed()) {
            if (preset_dir.empty()) {
                for (const auto& [name, _] : epinn::preset_texts())
                    std::cout << name << "\n";
            } else {
                std::filesystem::create_directories(preset_dir);
                for (const auto& [name, text] : epinn::preset_texts()) {
                    const std::string path = preset_dir + "/" + name + ".json";
                    std::ofstream f(path, std::ios::binary);
                    if (!f) throw epinn::IoError("cannot open " + path + " for writing");
                    f << text;
                    std::cout << path << "\n";
                }
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
