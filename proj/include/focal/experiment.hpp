#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "focal/config.hpp"
#include "focal/diagnostics.hpp"

namespace focal {

enum class LogLevel { quiet, info, debug };

/// FOCAL_LOG_LEVEL: quiet | info (default) | debug.
LogLevel log_level_from_env();

/// Output root: `cli_out` when given, else FOCAL_OUT_DIR, else config.out_dir.
std::filesystem::path resolve_out_root(const ExperimentConfig& config, const std::optional<std::filesystem::path>& cli_out);

/// Newest ckpt/step_N under a run directory, or nullopt.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

/// Summaries are deterministic given the config except for the "timing" key.
Json strip_timing(Json summary);

/// Trains from scratch (or from the newest checkpoint when `resume`) into
/// `run_dir`: steps.jsonl, ckpt/step_N (always including the final step),
/// config.json and summary.json. Returns the summary.
Json cmd_train(const ExperimentConfig& config, const std::filesystem::path& run_dir, bool resume = false);

/// Sweep trial runner: in-process, or a child `focal train` per trial when
/// config.sweep.subprocess. `self_exe` is the CLI binary for the child runs.
struct SweepRunner {
    std::filesystem::path self_exe;
};

/// One run per (t, seed index). Seed index s trains with root seed
/// config.seed + s, so every t sees the same data and initialization.
/// Writes trials/<name>/..., report.csv (one row per t) and summary.json.
Json cmd_sweep_constant(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                        const SweepRunner& runner = {});

/// Grid over (tau_min, tau_max) with the learned policy; same layout.
Json cmd_sweep_learned(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                       const SweepRunner& runner = {});

/// Accuracy of a checkpoint on config.tasks (the probe task when empty) at
/// every context length in config.eval_contexts.
Json cmd_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
              const std::filesystem::path& run_dir);

/// Loads a checkpoint, switches every layer to config.adapt.policy and
/// continues training with the adapt learning rate and step budget.
/// The summary holds task accuracy and validation loss before and after.
Json cmd_adapt(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
               const std::filesystem::path& run_dir);

/// Compares attention sharpness on the configured probe set: checkpoint A vs
/// checkpoint B when `checkpoint_b` is set, otherwise checkpoint A under
/// probe.reference_policy (a) vs probe.override_policy (b).
Json cmd_diagnose(const ExperimentConfig& config, const std::filesystem::path& checkpoint_a,
                  const std::optional<std::filesystem::path>& checkpoint_b, const std::filesystem::path& run_dir,
                  ReportFormat format = ReportFormat::csv);

}  // namespace focal
