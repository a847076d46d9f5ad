#include "focal/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "focal/error.hpp"
#include "focal/ops.hpp"

namespace focal {

Json to_json(const StepLog& log, bool include_time) {
    Json j;
    j["step"] = log.step;
    j["lr"] = log.lr;
    j["train_loss"] = log.train_loss;
    j["grad_norm"] = log.grad_norm;
    if (!log.tau.empty()) {
        Json tau = Json::array();
        for (const TauStats& t : log.tau) tau.push_back(Json{{"min", t.min}, {"max", t.max}, {"mean", t.mean}});
        j["tau"] = tau;
    }
    if (log.val_loss) j["val_loss"] = *log.val_loss;
    if (include_time) j["wall_time"] = log.wall_time;
    return j;
}

template <typename T>
double evaluate_loss(const Model<T>& model, const std::vector<Batch>& batches) {
    double total = 0;
    std::size_t tokens = 0;
    for (const Batch& b : batches) {
        const auto counted = static_cast<std::size_t>(
            std::count_if(b.targets.begin(), b.targets.end(), [](std::int32_t t) { return t != token::kPad; }));
        if (counted == 0) continue;
        Graph<T> g(false);
        const Tensor<T> logits = model.forward(g, b.inputs, b.batch_size, b.seq_len);
        const Tensor<T> loss = cross_entropy(g, logits, b.targets, token::kPad);
        total += static_cast<double>(loss.item()) * static_cast<double>(counted);
        tokens += counted;
    }
    if (tokens == 0) throw DataError("evaluate_loss: no scored tokens");
    return total / static_cast<double>(tokens);
}

template <typename T>
void save_state(const std::filesystem::path& dir, const TrainState<T>& state, const TrainConfig& config,
                std::uint64_t root_seed, const Json& extra) {
    CheckpointMeta meta;
    meta.step = state.step;
    meta.data_cursor = state.data_cursor;
    meta.root_seed = root_seed;
    meta.train = config;
    meta.extra = extra;
    save_checkpoint(dir, state.model, &state.optimizer, meta);
}

template <typename T>
TrainState<T> load_state(const std::filesystem::path& dir, TrainConfig* config) {
    Checkpoint<T> ck = load_checkpoint<T>(dir);
    TrainState<T> state{std::move(ck.model), {}, ck.meta.step, ck.meta.data_cursor};
    if (ck.optimizer) state.optimizer = std::move(*ck.optimizer);
    if (config != nullptr) *config = ck.meta.train;
    return state;
}

namespace {

template <typename T>
std::vector<TauStats> tau_stats(const ForwardCapture<T>& capture) {
    std::vector<TauStats> out;
    for (const auto& layer : capture.tau) {
        if (layer.empty()) continue;
        TauStats s;
        s.min = *std::min_element(layer.begin(), layer.end());
        s.max = *std::max_element(layer.begin(), layer.end());
        double sum = 0;
        for (T v : layer) sum += static_cast<double>(v);
        s.mean = sum / static_cast<double>(layer.size());
        out.push_back(s);
    }
    return out;
}

}  // namespace

template <typename T>
RunRecord train(TrainState<T>& state, BatchIterator& data, const std::vector<Batch>& validation,
                const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    if (data.seq_len() != config.seq_len || data.batch_size() != config.batch_size) {
        throw ConfigError("train: data geometry does not match the training config");
    }
    const std::uint64_t until = options.until_step == 0 ? config.total_steps : options.until_step;
    if (until > config.total_steps) throw ConfigError("train: until_step beyond total_steps");

    const bool write = !options.out_dir.empty();
    std::ofstream steps_log;
    if (write) {
        std::error_code ec;
        std::filesystem::create_directories(options.out_dir, ec);
        if (ec) throw IoError("train: cannot create " + options.out_dir.string() + ": " + ec.message());
        steps_log.open(options.out_dir / "steps.jsonl", state.step == 0 ? std::ios::trunc : std::ios::app);
        if (!steps_log) throw IoError("train: cannot open steps.jsonl in " + options.out_dir.string());
    }

    const auto params = state.model.parameters();
    const bool learned = state.model.config().policy.learned();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    RunRecord record;
    data.seek(state.data_cursor);
    for (std::uint64_t step = state.step + 1; step <= until; ++step) {
        const Batch batch = data.next();
        Graph<T> g(true);
        ForwardCapture<T> capture;
        const Tensor<T> logits =
            state.model.forward(g, batch.inputs, batch.batch_size, batch.seq_len, learned ? &capture : nullptr);
        const Tensor<T> loss = cross_entropy(g, logits, batch.targets, token::kPad);
        const double loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
            if (write) {
                save_state(checkpoint_dir(options.out_dir, state.step), state, config, options.root_seed,
                           options.checkpoint_extra);
            }
            throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                                 "; last good state is step " + std::to_string(state.step));
        }
        g.backward(loss);
        const double grad_norm = clip_grad_norm(params, config.grad_clip_norm);
        const double lr = lr_at(step, config);
        adamw_step(params, state.optimizer, lr, config);
        state.model.zero_grad();
        state.step = step;
        state.data_cursor = data.cursor();

        StepLog log;
        log.step = step;
        log.lr = lr;
        log.train_loss = loss_value;
        log.grad_norm = grad_norm;
        if (learned) log.tau = tau_stats(capture);
        const bool eval_now = !validation.empty() &&
                              ((config.eval_every > 0 && step % config.eval_every == 0) || step == config.total_steps);
        if (eval_now) {
            log.val_loss = evaluate_loss(state.model, validation);
            record.validation.emplace_back(step, *log.val_loss);
        }
        log.wall_time = elapsed();
        record.final_train_loss = loss_value;
        if (step % config.log_every == 0 || step == until || eval_now) {
            if (write) steps_log << to_json(log).dump() << "\n";
            if (options.on_step) options.on_step(log);
            record.steps.push_back(std::move(log));
        }
        if (write && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
            save_state(checkpoint_dir(options.out_dir, step), state, config, options.root_seed,
                       options.checkpoint_extra);
        }
    }
    if (!record.validation.empty()) record.final_val_loss = record.validation.back().second;
    record.last_step = state.step;
    record.wall_time = elapsed();
    return record;
}

#define FOCAL_INSTANTIATE_TRAIN(T)                                                                               \
    template double evaluate_loss<T>(const Model<T>&, const std::vector<Batch>&);                                \
    template void save_state<T>(const std::filesystem::path&, const TrainState<T>&, const TrainConfig&,        \
                                std::uint64_t, const Json&);                                                     \
    template TrainState<T> load_state<T>(const std::filesystem::path&, TrainConfig*);                            \
    template RunRecord train<T>(TrainState<T>&, BatchIterator&, const std::vector<Batch>&, const TrainConfig&, \
                                const TrainOptions&);

FOCAL_INSTANTIATE_TRAIN(float)
FOCAL_INSTANTIATE_TRAIN(double)

}  // namespace focal
