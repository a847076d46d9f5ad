#include "focal/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "focal/error.hpp"

namespace focal {

namespace {

void require_object(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    require_object(j, where);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
        if (!ok.contains(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

// Literal integers in a document built in code are signed; files parse as unsigned.
bool is_count(const Json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

void read(const Json& j, const char* key, double& out, const std::string& where) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    out = v.get<double>();
}

void read(const Json& j, const char* key, std::size_t& out, const std::string& where) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!is_count(v)) throw ConfigError(where + "." + key + ": expected a non-negative integer");
    out = v.get<std::size_t>();
}

void read(const Json& j, const char* key, bool& out, const std::string& where) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    out = v.get<bool>();
}

void read(const Json& j, const char* key, std::string& out, const std::string& where) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
    out = v.get<std::string>();
}

template <typename V>
void read_list(const Json& j, const char* key, std::vector<V>& out, const std::string& where) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array");
    out.clear();
    for (const Json& e : v) {
        if constexpr (std::is_same_v<V, double>) {
            if (!e.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
        } else {
            if (!is_count(e)) throw ConfigError(where + "." + key + ": expected non-negative integers");
        }
        out.push_back(e.get<V>());
    }
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const std::string& where) {
    for (const auto& [name, value] : options) {
        if (s == name) return value;
    }
    throw ConfigError(where + ": unrecognized value '" + s + "'");
}

}  // namespace

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Json to_json(const TemperaturePolicy& p) {
    Json j;
    j["kind"] = to_string(p.kind);
    j["t"] = p.t;
    j["tau_min"] = p.tau_min;
    j["tau_max"] = p.tau_max;
    j["mean_mode"] = to_string(p.mean_mode);
    j["clip"] = p.clip == ClipGradient::straight_through ? "straight_through" : "hard";
    j["tau_init"] = p.tau_init == TauInit::zeros ? "zeros" : "small_random";
    return j;
}

TemperaturePolicy policy_from_json(const Json& j) {
    const std::string where = "policy";
    check_keys(j, {"kind", "t", "tau_min", "tau_max", "mean_mode", "clip", "tau_init"}, where);
    TemperaturePolicy p;
    std::string kind = "baseline", mode = "full_sequence", clip = "straight_through", init = "zeros";
    read(j, "kind", kind, where);
    read(j, "mean_mode", mode, where);
    read(j, "clip", clip, where);
    read(j, "tau_init", init, where);
    p.kind = parse_enum<PolicyKind>(kind,
                                    {{"baseline", PolicyKind::baseline},
                                     {"focal_constant", PolicyKind::focal_constant},
                                     {"focal_learned", PolicyKind::focal_learned}},
                                    where + ".kind");
    p.mean_mode = parse_enum<MeanMode>(
        mode, {{"full_sequence", MeanMode::full_sequence}, {"causal_prefix", MeanMode::causal_prefix}},
        where + ".mean_mode");
    p.clip = parse_enum<ClipGradient>(
        clip, {{"straight_through", ClipGradient::straight_through}, {"hard", ClipGradient::hard}}, where + ".clip");
    p.tau_init = parse_enum<TauInit>(init, {{"zeros", TauInit::zeros}, {"small_random", TauInit::small_random}},
                                     where + ".tau_init");
    read(j, "t", p.t, where);
    read(j, "tau_min", p.tau_min, where);
    read(j, "tau_max", p.tau_max, where);
    p.validate();
    return p;
}

Json to_json(const ModelConfig& c) {
    Json j;
    j["name"] = c.name;
    j["n_layers"] = c.n_layers;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["d_ffn"] = c.d_ffn;
    j["vocab_size"] = c.vocab_size;
    j["max_context"] = c.max_context;
    j["rope_theta"] = c.rope_theta;
    j["norm_eps"] = c.norm_eps;
    j["tie_embeddings"] = c.tie_embeddings;
    j["policy"] = to_json(c.policy);
    j["seed"] = c.seed;
    return j;
}

ModelConfig model_config_from_json(const Json& j) {
    const std::string where = "model";
    check_keys(j,
               {"preset", "name", "n_layers", "d_model", "n_heads", "d_ffn", "vocab_size", "max_context",
                "rope_theta", "norm_eps", "tie_embeddings", "policy", "seed"},
               where);
    std::string preset = "toy";
    read(j, "preset", preset, where);
    ModelConfig c = model_preset(preset);
    read(j, "name", c.name, where);
    read(j, "n_layers", c.n_layers, where);
    read(j, "d_model", c.d_model, where);
    read(j, "n_heads", c.n_heads, where);
    read(j, "d_ffn", c.d_ffn, where);
    read(j, "vocab_size", c.vocab_size, where);
    read(j, "max_context", c.max_context, where);
    read(j, "rope_theta", c.rope_theta, where);
    read(j, "norm_eps", c.norm_eps, where);
    read(j, "tie_embeddings", c.tie_embeddings, where);
    if (j.contains("seed")) {
        if (!is_count(j.at("seed"))) throw ConfigError("model.seed: expected a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
    c.validate();
    return c;
}

Json to_json(const TrainConfig& c) {
    Json j;
    j["peak_lr"] = c.peak_lr;
    j["final_lr_fraction"] = c.final_lr_fraction;
    j["warmup_steps"] = c.warmup_steps;
    j["total_steps"] = c.total_steps;
    j["batch_size"] = c.batch_size;
    j["seq_len"] = c.seq_len;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["weight_decay"] = c.weight_decay;
    j["grad_clip_norm"] = c.grad_clip_norm;
    j["eval_every"] = c.eval_every;
    j["checkpoint_every"] = c.checkpoint_every;
    j["log_every"] = c.log_every;
    j["seed"] = c.seed;
    return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
    const std::string where = "train";
    check_keys(j,
               {"peak_lr", "final_lr_fraction", "warmup_steps", "total_steps", "batch_size", "batch_tokens",
                "seq_len", "beta1", "beta2", "eps", "weight_decay", "grad_clip_norm", "eval_every",
                "checkpoint_every", "log_every", "seed"},
               where);
    read(j, "peak_lr", c.peak_lr, where);
    read(j, "final_lr_fraction", c.final_lr_fraction, where);
    read(j, "warmup_steps", c.warmup_steps, where);
    read(j, "total_steps", c.total_steps, where);
    read(j, "seq_len", c.seq_len, where);
    read(j, "batch_size", c.batch_size, where);
    if (j.contains("batch_tokens")) {
        if (j.contains("batch_size")) throw ConfigError("train: give batch_size or batch_tokens, not both");
        std::size_t tokens = 0;
        read(j, "batch_tokens", tokens, where);
        if (c.seq_len == 0 || tokens % c.seq_len != 0) {
            throw ConfigError("train.batch_tokens: must be a multiple of seq_len");
        }
        c.batch_size = tokens / c.seq_len;
    }
    read(j, "beta1", c.beta1, where);
    read(j, "beta2", c.beta2, where);
    read(j, "eps", c.eps, where);
    read(j, "weight_decay", c.weight_decay, where);
    read(j, "grad_clip_norm", c.grad_clip_norm, where);
    read(j, "eval_every", c.eval_every, where);
    read(j, "checkpoint_every", c.checkpoint_every, where);
    read(j, "log_every", c.log_every, where);
    if (j.contains("seed")) {
        if (!is_count(j.at("seed"))) throw ConfigError("train.seed: expected a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    return c;
}

namespace {

const char* knob_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::kv_recall: return "n_pairs";
        case TaskKind::needle_uuid: return "n_distractors";
        case TaskKind::icl_classify: return "n_labels";
        case TaskKind::copy: return "length";
    }
    return "knob";
}

}  // namespace

Json to_json(const TaskSpec& s) {
    Json j;
    j["kind"] = to_string(s.kind);
    j["context_length"] = s.context_length;
    j[knob_name(s.kind)] = s.knob;
    if (s.kind == TaskKind::icl_classify) j["shots"] = s.shots;
    j["count"] = s.count;
    return j;
}

TaskSpec task_spec_from_json(const Json& j) {
    const std::string where = "task";
    require_object(j, where);
    std::string kind = "kv_recall";
    read(j, "kind", kind, where);
    TaskSpec s;
    s.kind = task_kind_from_string(kind);
    const char* knob = knob_name(s.kind);
    if (s.kind == TaskKind::icl_classify) {
        check_keys(j, {"kind", "context_length", "n_labels", "shots", "count"}, where);
    } else {
        std::set<std::string> ok{"kind", "context_length", "count", knob};
        for (const auto& item : j.items()) {
            if (!ok.contains(item.key())) throw ConfigError(where + " (" + kind + "): unknown key '" + item.key() + "'");
        }
    }
    if (s.kind == TaskKind::icl_classify) s.knob = 4;
    read(j, "context_length", s.context_length, where);
    read(j, knob, s.knob, where);
    read(j, "shots", s.shots, where);
    read(j, "count", s.count, where);
    if (s.count == 0) throw ConfigError(where + ".count: must be > 0");
    if (s.context_length == 0) throw ConfigError(where + ".context_length: must be > 0");
    return s;
}

void ExperimentConfig::apply_seed(std::uint64_t root) {
    seed = root;
    model.seed = derive_seed(root, "init");
    train.seed = derive_seed(root, "data");
    probe.task.seed = derive_seed(root, "probe");
    for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].seed = derive_seed(root, "eval-" + std::to_string(i));
}

void ExperimentConfig::validate() const {
    if (run_name.empty()) throw ConfigError("run_name must not be empty");
    model.validate();
    train.validate();
    if (train.seq_len > model.max_context) {
        throw ConfigError("train.seq_len " + std::to_string(train.seq_len) + " exceeds the model's max_context " +
                          std::to_string(model.max_context));
    }
    if (data.val_batches == 0) throw ConfigError("data.val_batches must be > 0");
    if (data.synthetic.documents == 0 && data.corpus_path.empty()) {
        throw ConfigError("data: need a corpus_path or a non-empty synthetic mix");
    }
    if (data.synthetic.kv_pairs_min == 0 || data.synthetic.kv_pairs_min > data.synthetic.kv_pairs_max) {
        throw ConfigError("data.synthetic: need 0 < kv_pairs_min <= kv_pairs_max");
    }
    if (!(data.synthetic.kv_fraction >= 0.0 && data.synthetic.kv_fraction <= 1.0)) {
        throw ConfigError("data.synthetic.kv_fraction must be in [0, 1]");
    }
    if (data.synthetic.kv_fraction > 0.0 && data.synthetic.kv_pairs_max > kv_recall_max_pairs(data.synthetic.kv_context)) {
        throw ConfigError("data.synthetic: kv_pairs_max " + std::to_string(data.synthetic.kv_pairs_max) +
                          " does not fit in kv_context " + std::to_string(data.synthetic.kv_context));
    }
    for (const TaskSpec& t : tasks) {
        if (t.context_length > model.max_context) {
            throw ConfigError("task " + to_string(t.kind) + ": context_length " + std::to_string(t.context_length) +
                              " exceeds max_context " + std::to_string(model.max_context));
        }
    }
    for (std::size_t ctx : eval_contexts) {
        if (ctx == 0 || ctx > model.max_context) {
            throw ConfigError("eval_contexts: " + std::to_string(ctx) + " outside (0, max_context]");
        }
    }
    if (probe.task.context_length > model.max_context) {
        throw ConfigError("probe.task.context_length exceeds max_context");
    }
    if (probe.top_k == 0) throw ConfigError("probe.top_k must be > 0");
    if (probe.max_rows == 0) throw ConfigError("probe.max_rows must be > 0");
    probe.override_policy.validate();
    probe.reference_policy.validate();
    adapt.policy.validate();
    if (!(adapt.peak_lr > 0.0)) throw ConfigError("adapt.peak_lr must be > 0");
    if (adapt.warmup_steps >= adapt.steps) throw ConfigError("adapt.warmup_steps must be < adapt.steps");
    if (sweep.seeds == 0) throw ConfigError("sweep.seeds must be > 0");
    for (double t : sweep.t_values) TemperaturePolicy::focal_constant(t).validate();
    if (sweep.tau_min_values.empty() || sweep.tau_max_values.empty()) {
        throw ConfigError("sweep: tau grids must not be empty");
    }
    for (double lo : sweep.tau_min_values) {
        for (double hi : sweep.tau_max_values) TemperaturePolicy::focal_learned(lo, hi).validate();
    }
}

ExperimentConfig parse_config(const Json& doc) {
    check_keys(doc,
               {"run_name", "seed", "precision", "out_dir", "model", "policy", "train", "data", "tasks",
                "eval_contexts", "probe", "adapt", "sweep"},
               "config");
    ExperimentConfig c;
    read(doc, "run_name", c.run_name, "config");
    std::uint64_t root = 0;
    if (doc.contains("seed")) {
        if (!is_count(doc.at("seed"))) throw ConfigError("config.seed: expected a non-negative integer");
        root = doc.at("seed").get<std::uint64_t>();
    }
    std::string precision = "f32";
    read(doc, "precision", precision, "config");
    c.precision = parse_enum<Precision>(precision, {{"f32", Precision::f32}, {"f64", Precision::f64}}, "config.precision");
    read(doc, "out_dir", c.out_dir, "config");

    if (doc.contains("model")) {
        const Json& m = doc.at("model");
        require_object(m, "model");
        if (m.contains("seed")) throw ConfigError("model: unknown key 'seed' (sub-seeds derive from the root seed)");
        c.model = model_config_from_json(m);
    }
    if (doc.contains("policy")) c.model.policy = policy_from_json(doc.at("policy"));

    if (doc.contains("train")) {
        const Json& t = doc.at("train");
        require_object(t, "train");
        if (t.contains("seed")) throw ConfigError("train: unknown key 'seed' (sub-seeds derive from the root seed)");
        c.train = train_config_from_json(t);
    }

    if (doc.contains("data")) {
        const Json& d = doc.at("data");
        check_keys(d, {"corpus_path", "synthetic", "val_batches"}, "data");
        read(d, "corpus_path", c.data.corpus_path, "data");
        read(d, "val_batches", c.data.val_batches, "data");
        if (d.contains("synthetic")) {
            const Json& s = d.at("synthetic");
            const std::string w = "data.synthetic";
            check_keys(s, {"documents", "kv_fraction", "kv_context", "kv_pairs_min", "kv_pairs_max", "salad_words"}, w);
            read(s, "documents", c.data.synthetic.documents, w);
            read(s, "kv_fraction", c.data.synthetic.kv_fraction, w);
            read(s, "kv_context", c.data.synthetic.kv_context, w);
            read(s, "kv_pairs_min", c.data.synthetic.kv_pairs_min, w);
            read(s, "kv_pairs_max", c.data.synthetic.kv_pairs_max, w);
            read(s, "salad_words", c.data.synthetic.salad_words, w);
        }
    }

    if (doc.contains("tasks")) {
        const Json& ts = doc.at("tasks");
        if (!ts.is_array()) throw ConfigError("tasks: expected an array");
        for (const Json& t : ts) c.tasks.push_back(task_spec_from_json(t));
    }
    read_list(doc, "eval_contexts", c.eval_contexts, "config");

    if (doc.contains("probe")) {
        const Json& p = doc.at("probe");
        const std::string w = "probe";
        check_keys(p, {"task", "final_row_only", "max_rows", "top_k", "override_policy", "reference_policy"}, w);
        if (p.contains("task")) c.probe.task = task_spec_from_json(p.at("task"));
        read(p, "final_row_only", c.probe.final_row_only, w);
        read(p, "max_rows", c.probe.max_rows, w);
        read(p, "top_k", c.probe.top_k, w);
        if (p.contains("override_policy")) c.probe.override_policy = policy_from_json(p.at("override_policy"));
        if (p.contains("reference_policy")) c.probe.reference_policy = policy_from_json(p.at("reference_policy"));
    }

    if (doc.contains("adapt")) {
        const Json& a = doc.at("adapt");
        const std::string w = "adapt";
        check_keys(a, {"policy", "peak_lr", "steps", "warmup_steps"}, w);
        if (a.contains("policy")) c.adapt.policy = policy_from_json(a.at("policy"));
        read(a, "peak_lr", c.adapt.peak_lr, w);
        read(a, "steps", c.adapt.steps, w);
        read(a, "warmup_steps", c.adapt.warmup_steps, w);
    }

    if (doc.contains("sweep")) {
        const Json& s = doc.at("sweep");
        const std::string w = "sweep";
        check_keys(s, {"t_values", "tau_min_values", "tau_max_values", "seeds", "mode"}, w);
        read_list(s, "t_values", c.sweep.t_values, w);
        read_list(s, "tau_min_values", c.sweep.tau_min_values, w);
        read_list(s, "tau_max_values", c.sweep.tau_max_values, w);
        read(s, "seeds", c.sweep.seeds, w);
        std::string mode = "in_process";
        read(s, "mode", mode, w);
        c.sweep.subprocess = parse_enum<bool>(mode, {{"in_process", false}, {"subprocess", true}}, "sweep.mode");
    }

    c.apply_seed(root);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

Json to_json(const ExperimentConfig& c) {
    Json j;
    j["run_name"] = c.run_name;
    j["seed"] = c.seed;
    j["precision"] = to_string(c.precision);
    j["out_dir"] = c.out_dir;
    Json model = to_json(c.model);
    model.erase("seed");
    model.erase("policy");
    j["model"] = model;
    j["policy"] = to_json(c.model.policy);
    Json train = to_json(c.train);
    train.erase("seed");
    j["train"] = train;
    Json data;
    data["corpus_path"] = c.data.corpus_path;
    data["val_batches"] = c.data.val_batches;
    const SyntheticMix& s = c.data.synthetic;
    data["synthetic"] = Json{{"documents", s.documents},       {"kv_fraction", s.kv_fraction},
                             {"kv_context", s.kv_context},     {"kv_pairs_min", s.kv_pairs_min},
                             {"kv_pairs_max", s.kv_pairs_max}, {"salad_words", s.salad_words}};
    j["data"] = data;
    Json tasks = Json::array();
    for (const TaskSpec& t : c.tasks) tasks.push_back(to_json(t));
    j["tasks"] = tasks;
    j["eval_contexts"] = c.eval_contexts;
    j["probe"] = Json{{"task", to_json(c.probe.task)},
                      {"final_row_only", c.probe.final_row_only},
                      {"max_rows", c.probe.max_rows},
                      {"top_k", c.probe.top_k},
                      {"override_policy", to_json(c.probe.override_policy)},
                      {"reference_policy", to_json(c.probe.reference_policy)}};
    j["adapt"] = Json{{"policy", to_json(c.adapt.policy)},
                      {"peak_lr", c.adapt.peak_lr},
                      {"steps", c.adapt.steps},
                      {"warmup_steps", c.adapt.warmup_steps}};
    j["sweep"] = Json{{"t_values", c.sweep.t_values},
                      {"tau_min_values", c.sweep.tau_min_values},
                      {"tau_max_values", c.sweep.tau_max_values},
                      {"seeds", c.sweep.seeds},
                      {"mode", c.sweep.subprocess ? "subprocess" : "in_process"}};
    return j;
}

}  // namespace focal
