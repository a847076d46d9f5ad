#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "focal/error.hpp"
#include "focal/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Experiment config (JSON)");
    cmd->add_option("--seed", c.seed, "Root seed; overrides the config");
    cmd->add_option("--out", c.out, "Output root; overrides FOCAL_OUT_DIR and the config");
    cmd->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
}

focal::ExperimentConfig load(const Common& c) {
    focal::ExperimentConfig config = c.config.empty() ? focal::parse_config(focal::Json::object())
                                                      : focal::load_config(c.config);
    if (c.seed) {
        config.apply_seed(*c.seed);
        config.validate();
    }
    return config;
}

fs::path run_dir(const focal::ExperimentConfig& config, const Common& c) {
    const std::optional<fs::path> out = c.out ? std::optional<fs::path>(*c.out) : std::nullopt;
    return focal::resolve_out_root(config, out) / config.run_name;
}

void report(const fs::path& dir, const focal::Json& summary, const std::vector<std::string>& keys) {
    std::cout << "output: " << dir.string() << "\n";
    for (const auto& k : keys) {
        if (summary.contains(k)) std::cout << k << ": " << summary.at(k).dump() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temperature-scaled attention experiments"};
    app.require_subcommand(1);

    Common train_opts;
    bool resume = false;
    auto* train = app.add_subcommand("train", "Train a model");
    add_common(train, train_opts);
    train->add_flag("--resume", resume, "Continue from the newest checkpoint in the run directory");

    Common sc_opts;
    std::vector<double> t_values;
    std::string mode;
    auto* sweep_const = app.add_subcommand("sweep-const", "Sweep the constant temperature scale t");
    add_common(sweep_const, sc_opts);
    sweep_const->add_option("--t", t_values, "Grid of t values");
    sweep_const->add_option("--mode", mode, "Trial execution")->check(CLI::IsMember({"in_process", "subprocess"}));

    Common sl_opts;
    std::vector<double> tau_min, tau_max;
    std::string sl_mode;
    auto* sweep_learned = app.add_subcommand("sweep-learned", "Sweep the learned temperature clip range");
    add_common(sweep_learned, sl_opts);
    sweep_learned->add_option("--tau-min", tau_min, "Grid of tau_min values");
    sweep_learned->add_option("--tau-max", tau_max, "Grid of tau_max values");
    sweep_learned->add_option("--mode", sl_mode, "Trial execution")->check(CLI::IsMember({"in_process", "subprocess"}));

    Common eval_opts;
    std::string eval_ckpt;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on synthetic tasks across context lengths");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();

    Common adapt_opts;
    std::string adapt_ckpt;
    auto* adapt = app.add_subcommand("adapt", "Switch a checkpoint's temperature policy and continue training");
    add_common(adapt, adapt_opts);
    adapt->add_option("--checkpoint", adapt_ckpt, "Checkpoint directory")->required();

    Common diag_opts;
    std::string diag_a;
    std::optional<std::string> diag_b;
    auto* diagnose = app.add_subcommand("diagnose", "Compare attention sharpness between two policies or checkpoints");
    add_common(diagnose, diag_opts);
    diagnose->add_option("--checkpoint", diag_a, "Checkpoint directory")->required();
    diagnose->add_option("--checkpoint-b", diag_b, "Second checkpoint; default is a policy override of the first");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(focal::ExitCode::config_error);
    }

    try {
        (void)focal::log_level_from_env();
        if (train->parsed()) {
            const auto config = load(train_opts);
            const fs::path dir = run_dir(config, train_opts);
            report(dir, focal::cmd_train(config, dir, resume), {"steps", "final_train_loss", "final_val_loss"});
        } else if (sweep_const->parsed()) {
            auto config = load(sc_opts);
            if (!t_values.empty()) config.sweep.t_values = t_values;
            if (!mode.empty()) config.sweep.subprocess = mode == "subprocess";
            config.validate();
            const fs::path dir = run_dir(config, sc_opts);
            const focal::SweepRunner runner{fs::read_symlink("/proc/self/exe")};
            report(dir, focal::cmd_sweep_constant(config, dir, runner), {"comparison"});
        } else if (sweep_learned->parsed()) {
            auto config = load(sl_opts);
            if (!tau_min.empty()) config.sweep.tau_min_values = tau_min;
            if (!tau_max.empty()) config.sweep.tau_max_values = tau_max;
            if (!sl_mode.empty()) config.sweep.subprocess = sl_mode == "subprocess";
            config.validate();
            const fs::path dir = run_dir(config, sl_opts);
            const focal::SweepRunner runner{fs::read_symlink("/proc/self/exe")};
            report(dir, focal::cmd_sweep_learned(config, dir, runner), {});
        } else if (eval->parsed()) {
            const auto config = load(eval_opts);
            const fs::path dir = run_dir(config, eval_opts);
            report(dir, focal::cmd_eval(config, eval_ckpt, dir), {"results"});
        } else if (adapt->parsed()) {
            const auto config = load(adapt_opts);
            const fs::path dir = run_dir(config, adapt_opts);
            report(dir, focal::cmd_adapt(config, adapt_ckpt, dir), {"pre", "post"});
        } else if (diagnose->parsed()) {
            const auto config = load(diag_opts);
            const fs::path dir = run_dir(config, diag_opts);
            const std::optional<fs::path> b = diag_b ? std::optional<fs::path>(*diag_b) : std::nullopt;
            report(dir,
                   focal::cmd_diagnose(config, diag_a, b, dir, focal::report_format_from_string(diag_opts.format)),
                   {"layers", "b_lower_entropy_every_layer", "b_relevant_mass_not_lower"});
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(focal::exit_code_for(e));
    }
    return 0;
}
