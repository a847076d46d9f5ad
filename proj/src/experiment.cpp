#include "focal/experiment.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "focal/checkpoint.hpp"
#include "focal/error.hpp"
#include "focal/train.hpp"

extern char** environ;

namespace focal {

namespace fs = std::filesystem;

LogLevel log_level_from_env() {
    const char* v = std::getenv("FOCAL_LOG_LEVEL");
    if (v == nullptr || std::string(v).empty() || std::string(v) == "info") return LogLevel::info;
    const std::string s(v);
    if (s == "quiet") return LogLevel::quiet;
    if (s == "debug") return LogLevel::debug;
    throw ConfigError("FOCAL_LOG_LEVEL must be quiet, info or debug, got '" + s + "'");
}

fs::path resolve_out_root(const ExperimentConfig& config, const std::optional<fs::path>& cli_out) {
    if (cli_out) return *cli_out;
    if (const char* env = std::getenv("FOCAL_OUT_DIR"); env != nullptr && *env != '\0') return env;
    return config.out_dir;
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
    const fs::path root = run_dir / "ckpt";
    std::error_code ec;
    if (!fs::is_directory(root, ec)) return std::nullopt;
    std::optional<fs::path> best;
    std::uint64_t best_step = 0;
    for (const auto& entry : fs::directory_iterator(root, ec)) {
        const std::string name = entry.path().filename().string();
        if (!entry.is_directory() || name.rfind("step_", 0) != 0 || name.find('.') != std::string::npos) continue;
        try {
            const std::uint64_t step = std::stoull(name.substr(5));
            if (!best || step > best_step) {
                best = entry.path();
                best_step = step;
            }
        } catch (const std::exception&) {
        }
    }
    return best;
}

Json strip_timing(Json summary) {
    summary.erase("timing");
    return summary;
}

namespace {

void log(LogLevel level, const std::string& message) {
    static const LogLevel threshold = log_level_from_env();
    if (threshold == LogLevel::quiet || level > threshold) return;
    std::cerr << "[focal] " << message << std::endl;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write on " + path.string());
}

Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw IoError("corrupt JSON in " + path.string() + ": " + e.what());
    }
}

/// Calls f(T{}) with T matching the configured precision.
template <typename F>
decltype(auto) with_precision(Precision p, F&& f) {
    if (p == Precision::f64) return f(double{});
    return f(float{});
}

TokenStream build_corpus(const ExperimentConfig& c, std::uint64_t seed) {
    TokenStream stream;
    if (!c.data.corpus_path.empty()) stream = read_corpus(c.data.corpus_path);
    if (c.data.synthetic.documents > 0) {
        const TokenStream syn = synthetic_corpus(c.data.synthetic, derive_seed(seed, "corpus"));
        stream.tokens.insert(stream.tokens.end(), syn.tokens.begin(), syn.tokens.end());
        if (stream.source_id.empty()) stream.source_id = syn.source_id;
    }
    return stream;
}

std::vector<TaskSpec> eval_specs(const ExperimentConfig& c) {
    return c.tasks.empty() ? std::vector<TaskSpec>{c.probe.task} : c.tasks;
}

template <typename T>
Json score_tasks(const Model<T>& model, const std::vector<TaskSpec>& specs) {
    Json out = Json::array();
    for (const TaskSpec& spec : specs) {
        const TaskScore score = score_task(model, generate(spec));
        Json j = to_json(spec);
        j["accuracy"] = score.accuracy;
        out.push_back(j);
    }
    return out;
}

double mean_accuracy(const Json& tasks) {
    if (tasks.empty()) return 0;
    double s = 0;
    for (const Json& t : tasks) s += t.at("accuracy").get<double>();
    return s / static_cast<double>(tasks.size());
}

/// Keeps steps.jsonl lines up to `step` so a resumed run appends cleanly.
void truncate_step_log(const fs::path& path, std::uint64_t step) {
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> kept;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        if (Json::parse(line).at("step").get<std::uint64_t>() <= step) kept.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& line : kept) out << line << "\n";
}

Json read_step_log(const fs::path& path) {
    std::ifstream in(path);
    Json steps = Json::array();
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) steps.push_back(Json::parse(line));
    }
    return steps;
}

template <typename T>
Json train_run(const ExperimentConfig& c, const fs::path& dir, bool resume) {
    ensure_dir(dir);
    write_json(dir / "config.json", to_json(c));
    const TokenStream corpus = build_corpus(c, c.train.seed);
    DataSplit split = split_corpus(corpus, c.train.seq_len, c.train.batch_size, c.data.val_batches, c.train.seed);

    TrainState<T> state;
    const auto ckpt = resume ? latest_checkpoint(dir) : std::nullopt;
    if (ckpt) {
        TrainConfig stored;
        state = load_state<T>(*ckpt, &stored);
        if (!(stored == c.train) || !(state.model.config() == c.model)) {
            throw ConfigError("resume: checkpoint " + ckpt->string() + " was written with a different config");
        }
        truncate_step_log(dir / "steps.jsonl", state.step);
        log(LogLevel::info, "resuming " + c.run_name + " at step " + std::to_string(state.step));
    } else {
        state.model = init_params<T>(c.model);
    }

    TrainOptions options;
    options.out_dir = dir;
    options.root_seed = c.seed;
    const std::size_t every = std::max<std::size_t>(1, c.train.total_steps / 20);
    options.on_step = [&](const StepLog& s) {
        if (s.step % every == 0 || s.val_loss) {
            std::ostringstream m;
            m << c.run_name << " step " << s.step << "/" << c.train.total_steps << " loss " << s.train_loss;
            if (s.val_loss) m << " val " << *s.val_loss;
            log(LogLevel::info, m.str());
        }
    };
    const RunRecord record = train(state, split.train, split.validation, c.train, options);
    const fs::path final_ckpt = checkpoint_dir(dir, state.step);
    if (!fs::exists(final_ckpt)) save_state(final_ckpt, state, c.train, c.seed);

    // Rebuilt from steps.jsonl so a resumed run reports the whole trajectory.
    const Json steps = read_step_log(dir / "steps.jsonl");
    Json summary;
    summary["run_name"] = c.run_name;
    summary["seed"] = c.seed;
    summary["precision"] = to_string(c.precision);
    summary["policy"] = to_json(c.model.policy);
    summary["params"] = count_params(c.model);
    summary["steps"] = state.step;
    summary["tokens_seen"] = state.step * c.train.batch_tokens();
    Json validation = Json::array();
    double final_train = 0;
    Json final_tau;
    for (const Json& s : steps) {
        final_train = s.at("train_loss").get<double>();
        if (s.contains("val_loss")) validation.push_back(Json{{"step", s.at("step")}, {"loss", s.at("val_loss")}});
        if (s.contains("tau")) final_tau = s.at("tau");
    }
    summary["final_train_loss"] = final_train;
    summary["final_val_loss"] = validation.empty() ? Json() : validation.back().at("loss");
    summary["validation"] = validation;
    if (!final_tau.is_null()) summary["final_tau"] = final_tau;
    summary["tasks"] = score_tasks(state.model, c.tasks);
    summary["checkpoint"] = fs::relative(final_ckpt, dir).string();
    summary["timing"] = Json{{"wall_time_s", record.wall_time},
                             {"ms_per_step", record.steps.empty() || record.wall_time == 0
                                                 ? 0.0
                                                 : 1000.0 * record.wall_time /
                                                       static_cast<double>(record.last_step - (record.steps.front().step - 1))}};
    write_json(dir / "summary.json", summary);
    return summary;
}

std::string grid_label(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

struct Trial {
    std::string name;
    ExperimentConfig config;
};

std::string status_of(int code) {
    switch (code) {
        case 2: return "config_error";
        case 3: return "diverged";
        case 4: return "io_error";
        default: return "failed";
    }
}

/// Runs a trial and returns its summary; failures become {"status": ...}.
Json run_trial(const Trial& trial, const fs::path& trials_dir, const SweepRunner& runner, bool subprocess) {
    const fs::path dir = trials_dir / trial.name;
    if (!subprocess) {
        try {
            Json s = cmd_train(trial.config, dir);
            s["status"] = "ok";
            return s;
        } catch (const NumericalError& e) {
            log(LogLevel::info, trial.name + ": " + e.what());
            return Json{{"run_name", trial.name}, {"status", "diverged"}};
        }
    }
    if (runner.self_exe.empty()) throw UsageError("sweep: subprocess mode needs the CLI executable path");
    ensure_dir(dir);
    const fs::path cfg = dir / "trial_config.json";
    write_json(cfg, to_json(trial.config));
    std::vector<std::string> args{runner.self_exe.string(), "train", "--config", cfg.string(), "--out",
                                  trials_dir.string()};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) {
        throw IoError("sweep: cannot launch " + args[0]);
    }
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) throw IoError("sweep: lost trial " + trial.name);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
    if (code != 0) {
        log(LogLevel::info, trial.name + ": child exited with " + std::to_string(code));
        return Json{{"run_name", trial.name}, {"status", status_of(code)}};
    }
    Json s = read_json(dir / "summary.json");
    s["status"] = "ok";
    return s;
}

struct GridPoint {
    Json key;  // e.g. {"t": 0.4}
    std::string label;
    TemperaturePolicy policy;
};

/// Shared sweep driver: every grid point x seed index, merged per point.
Json run_sweep(const ExperimentConfig& config, const fs::path& run_dir, const SweepRunner& runner,
               const std::vector<GridPoint>& grid, const std::string& kind) {
    config.validate();
    ensure_dir(run_dir);
    write_json(run_dir / "config.json", to_json(config));
    const fs::path trials_dir = run_dir / "trials";
    Json rows = Json::array();
    for (const GridPoint& point : grid) {
        Json seeds = Json::array();
        std::vector<double> losses;
        double acc_sum = 0;
        for (std::size_t s = 0; s < config.sweep.seeds; ++s) {
            Trial trial{point.label + "_s" + std::to_string(s), config};
            trial.config.run_name = trial.name;
            trial.config.out_dir = trials_dir.string();
            trial.config.model.policy = point.policy;
            trial.config.apply_seed(config.seed + s);
            log(LogLevel::info, kind + ": trial " + trial.name);
            const Json summary = run_trial(trial, trials_dir, runner, config.sweep.subprocess);
            Json entry{{"seed_index", s}, {"seed", trial.config.seed}, {"status", summary.at("status")}};
            if (summary.at("status") == "ok") {
                entry["final_val_loss"] = summary.at("final_val_loss");
                entry["accuracy"] = mean_accuracy(summary.at("tasks"));
                if (!summary.at("final_val_loss").is_null()) losses.push_back(summary.at("final_val_loss").get<double>());
                acc_sum += entry["accuracy"].get<double>();
            }
            seeds.push_back(entry);
        }
        Json row = point.key;
        row["policy"] = to_json(point.policy);
        row["completed"] = losses.size();
        if (losses.empty()) {
            row["mean_val_loss"] = nullptr;
            row["std_val_loss"] = nullptr;
            row["mean_accuracy"] = nullptr;
        } else {
            double mean = 0;
            for (double l : losses) mean += l;
            mean /= static_cast<double>(losses.size());
            double var = 0;
            for (double l : losses) var += (l - mean) * (l - mean);
            row["mean_val_loss"] = mean;
            row["std_val_loss"] = losses.size() > 1 ? std::sqrt(var / static_cast<double>(losses.size() - 1)) : 0.0;
            row["mean_accuracy"] = acc_sum / static_cast<double>(losses.size());
        }
        row["trials"] = seeds;
        rows.push_back(row);
    }

    std::ofstream csv(run_dir / "report.csv");
    if (!csv) throw IoError("cannot write " + (run_dir / "report.csv").string());
    std::vector<std::string> key_cols;
    for (const auto& item : grid.front().key.items()) key_cols.push_back(item.key());
    for (const auto& k : key_cols) csv << k << ",";
    csv << "completed,mean_val_loss,std_val_loss,mean_accuracy\n";
    auto cell = [](const Json& v) {
        if (v.is_null()) return std::string("nan");
        if (v.is_string()) return v.get<std::string>();
        std::ostringstream s;
        s.precision(17);
        s << v.get<double>();
        return s.str();
    };
    for (const Json& r : rows) {
        for (const auto& k : key_cols) csv << cell(r.at(k)) << ",";
        csv << r.at("completed").get<std::size_t>() << "," << cell(r.at("mean_val_loss")) << ","
            << cell(r.at("std_val_loss")) << "," << cell(r.at("mean_accuracy")) << "\n";
    }
    csv.close();

    Json summary;
    summary["kind"] = kind;
    summary["seed"] = config.seed;
    summary["seeds"] = config.sweep.seeds;
    summary["rows"] = rows;
    write_json(run_dir / "summary.json", summary);
    return summary;
}

template <typename T>
Model<T> load_model(const fs::path& checkpoint) {
    return load_checkpoint<T>(checkpoint).model;
}

}  // namespace

Json cmd_train(const ExperimentConfig& config, const fs::path& run_dir, bool resume) {
    config.validate();
    return with_precision(config.precision, [&](auto tag) {
        using T = decltype(tag);
        return train_run<T>(config, run_dir, resume);
    });
}

Json cmd_sweep_constant(const ExperimentConfig& config, const fs::path& run_dir, const SweepRunner& runner) {
    std::vector<double> ts = config.sweep.t_values;
    // The t = 1 row is always present so every sweep carries its baseline.
    if (std::find(ts.begin(), ts.end(), 1.0) == ts.end()) ts.push_back(1.0);
    std::vector<GridPoint> grid;
    for (double t : ts) grid.push_back({Json{{"t", t}}, "t" + grid_label(t), TemperaturePolicy::focal_constant(t)});
    Json summary = run_sweep(config, run_dir, runner, grid, "sweep_constant");

    const Json* baseline = nullptr;
    const Json* best = nullptr;
    for (const Json& r : summary.at("rows")) {
        if (r.at("mean_val_loss").is_null()) continue;
        if (r.at("t").get<double>() == 1.0) {
            baseline = &r;
        } else if (best == nullptr || r.at("mean_val_loss").get<double>() < best->at("mean_val_loss").get<double>()) {
            best = &r;
        }
    }
    Json verdict;
    verdict["baseline_val_loss"] = baseline ? baseline->at("mean_val_loss") : Json();
    verdict["best_t"] = best ? best->at("t") : Json();
    verdict["best_val_loss"] = best ? best->at("mean_val_loss") : Json();
    verdict["best_beats_baseline"] = baseline && best && best->at("mean_val_loss").get<double>() <
                                                            baseline->at("mean_val_loss").get<double>();
    summary["comparison"] = verdict;
    write_json(run_dir / "summary.json", summary);
    return summary;
}

Json cmd_sweep_learned(const ExperimentConfig& config, const fs::path& run_dir, const SweepRunner& runner) {
    const TemperaturePolicy& base = config.model.policy;
    std::vector<GridPoint> grid;
    grid.push_back({Json{{"tau_min", "baseline"}, {"tau_max", "baseline"}}, "baseline", TemperaturePolicy::baseline()});
    for (double hi : config.sweep.tau_max_values) {
        for (double lo : config.sweep.tau_min_values) {
            TemperaturePolicy p = TemperaturePolicy::focal_learned(lo, hi, base.mean_mode);
            if (base.learned()) {
                p.clip = base.clip;
                p.tau_init = base.tau_init;
            }
            grid.push_back({Json{{"tau_min", lo}, {"tau_max", hi}},
                            "tau" + grid_label(lo) + "-" + grid_label(hi), p});
        }
    }
    return run_sweep(config, run_dir, runner, grid, "sweep_learned");
}

Json cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& run_dir) {
    config.validate();
    ensure_dir(run_dir);
    return with_precision(config.precision, [&](auto tag) {
        using T = decltype(tag);
        const Model<T> model = load_model<T>(checkpoint);
        Json rows = Json::array();
        std::vector<TaskSpec> scored;
        const auto specs = eval_specs(config);
        for (const TaskSpec& base : specs) {
            for (std::size_t ctx : config.eval_contexts) {
                if (ctx > model.config().max_context) {
                    throw ConfigError("eval: context " + std::to_string(ctx) + " exceeds the checkpoint's max_context " +
                                      std::to_string(model.config().max_context));
                }
                TaskSpec spec = base;
                spec.context_length = ctx;
                spec.seed = derive_seed(base.seed, "ctx-" + std::to_string(ctx));
                const TaskScore score = score_task(model, generate(spec));
                Json row = to_json(spec);
                row["accuracy"] = score.accuracy;
                rows.push_back(row);
                scored.push_back(spec);
                log(LogLevel::info, "eval " + to_string(spec.kind) + " @" + std::to_string(ctx) + ": " +
                                        std::to_string(score.accuracy));
            }
        }
        std::ofstream csv(run_dir / "report.csv");
        if (!csv) throw IoError("cannot write " + (run_dir / "report.csv").string());
        csv << "task,knob,context_length,count,accuracy\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            csv << to_string(scored[i].kind) << "," << scored[i].knob << "," << scored[i].context_length << ","
                << scored[i].count << "," << rows[i].at("accuracy").get<double>() << "\n";
        }
        Json summary;
        summary["checkpoint"] = checkpoint.string();
        summary["policy"] = to_json(model.config().policy);
        summary["results"] = rows;
        write_json(run_dir / "summary.json", summary);
        return summary;
    });
}

Json cmd_adapt(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& run_dir) {
    config.validate();
    ensure_dir(run_dir);
    return with_precision(config.precision, [&](auto tag) {
        using T = decltype(tag);
        Checkpoint<T> ck = load_checkpoint<T>(checkpoint);
        TrainConfig tc = ck.meta.train;
        tc.peak_lr = config.adapt.peak_lr;
        tc.total_steps = config.adapt.steps;
        tc.warmup_steps = config.adapt.warmup_steps;
        tc.eval_every = 0;
        tc.checkpoint_every = 0;
        tc.seed = derive_seed(config.seed, "adapt");
        tc.validate();

        const TokenStream corpus = build_corpus(config, tc.seed);
        DataSplit split = split_corpus(corpus, tc.seq_len, tc.batch_size, config.data.val_batches, tc.seed);
        const auto specs = config.tasks;

        Json pre;
        pre["policy"] = to_json(ck.model.config().policy);
        pre["val_loss"] = evaluate_loss(ck.model, split.validation);
        pre["tasks"] = score_tasks(ck.model, specs);

        TrainState<T> state{std::move(ck.model), {}, 0, 0};
        set_temperature(state.model, config.adapt.policy);
        TrainOptions options;
        options.out_dir = run_dir;
        options.root_seed = config.seed;
        options.checkpoint_extra = Json{{"adapted_from", checkpoint.string()}};
        const RunRecord record = train(state, split.train, split.validation, tc, options);
        save_state(checkpoint_dir(run_dir, state.step), state, tc, config.seed, options.checkpoint_extra);

        Json post;
        post["policy"] = to_json(state.model.config().policy);
        post["val_loss"] = record.final_val_loss ? Json(*record.final_val_loss) : Json();
        post["tasks"] = score_tasks(state.model, specs);

        Json summary;
        summary["checkpoint"] = checkpoint.string();
        summary["steps"] = tc.total_steps;
        summary["peak_lr"] = tc.peak_lr;
        summary["pre"] = pre;
        summary["post"] = post;
        summary["timing"] = Json{{"wall_time_s", record.wall_time}};
        write_json(run_dir / "summary.json", summary);
        return summary;
    });
}

Json cmd_diagnose(const ExperimentConfig& config, const fs::path& checkpoint_a,
                  const std::optional<fs::path>& checkpoint_b, const fs::path& run_dir, ReportFormat format) {
    config.validate();
    ensure_dir(run_dir);
    return with_precision(config.precision, [&](auto tag) {
        using T = decltype(tag);
        Model<T> a = load_model<T>(checkpoint_a);
        Model<T> b;
        if (checkpoint_b) {
            b = load_model<T>(*checkpoint_b);
        } else {
            b = clone_model(a);
            set_temperature(a, config.probe.reference_policy);
            set_temperature(b, config.probe.override_policy);
        }
        const std::vector<TaskInstance> probes = generate(config.probe.task);
        ProbeOptions options;
        options.final_row_only = config.probe.final_row_only;
        options.max_rows = config.probe.max_rows;
        options.top_k = config.probe.top_k;
        const SharpnessReport report = compare_policies(a, b, probes, options);
        emit_report(report, run_dir / (format == ReportFormat::csv ? "report.csv" : "report.json"), format);

        Json layers = Json::array();
        bool sharper = true;
        double rel_a = 0, rel_b = 0;
        std::size_t rel_layers = 0;
        for (std::size_t l = 0; l < report.layers(); ++l) {
            Json row{{"layer", l},
                     {"entropy_a", report.value(l, kAllHeads, "a:entropy")},
                     {"entropy_b", report.value(l, kAllHeads, "b:entropy")}};
            sharper = sharper && row["entropy_b"].get<double>() < row["entropy_a"].get<double>();
            if (report.has(l, kAllHeads, "a:mass_on_relevant")) {
                row["mass_on_relevant_a"] = report.value(l, kAllHeads, "a:mass_on_relevant");
                row["mass_on_relevant_b"] = report.value(l, kAllHeads, "b:mass_on_relevant");
                rel_a += row["mass_on_relevant_a"].get<double>();
                rel_b += row["mass_on_relevant_b"].get<double>();
                ++rel_layers;
            }
            layers.push_back(row);
        }
        Json summary;
        summary["a"] = checkpoint_a.string() + (checkpoint_b ? "" : " @ " + config.probe.reference_policy.describe());
        summary["b"] = checkpoint_b ? checkpoint_b->string()
                                    : checkpoint_a.string() + " @ " + config.probe.override_policy.describe();
        summary["probe"] = to_json(config.probe.task);
        summary["probes"] = probes.size();
        summary["layers"] = layers;
        summary["b_lower_entropy_every_layer"] = sharper;
        if (rel_layers > 0) {
            summary["mean_mass_on_relevant_a"] = rel_a / static_cast<double>(rel_layers);
            summary["mean_mass_on_relevant_b"] = rel_b / static_cast<double>(rel_layers);
            summary["b_relevant_mass_not_lower"] = rel_b >= rel_a;
        }
        write_json(run_dir / "summary.json", summary);
        return summary;
    });
}

}  // namespace focal
