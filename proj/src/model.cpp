#include "focal/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "focal/ops.hpp"

namespace focal {

void ModelConfig::validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ffn == 0 || vocab_size == 0 || max_context == 0) {
        throw ConfigError("model config: all sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("model config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (head_dim() % 2 != 0) throw ConfigError("model config: head dimension must be even, got " + std::to_string(head_dim()));
    if (!(rope_theta > 0.0)) throw ConfigError("model config: rope_theta must be > 0");
    if (!(norm_eps > 0.0)) throw ConfigError("model config: norm_eps must be > 0");
    policy.validate();
}

namespace {

ModelConfig large_preset(const char* name, std::size_t hidden, std::size_t ffn, std::size_t heads,
                         std::size_t layers) {
    ModelConfig c;
    c.name = name;
    c.d_model = hidden;
    c.d_ffn = ffn;
    c.n_heads = heads;
    c.n_layers = layers;
    c.vocab_size = 32000;
    c.max_context = 2048;
    return c;
}

}  // namespace

std::vector<std::string> size_preset_names() { return {"400M", "777M", "1.3B", "2.7B", "6.7B", "9.5B"}; }

std::vector<std::string> model_preset_names() {
    auto names = size_preset_names();
    names.insert(names.begin(), {"tiny", "toy"});
    return names;
}

ModelConfig model_preset(std::string_view name) {
    // hidden, intermediate, heads, layers
    if (name == "400M") return large_preset("400M", 1024, 3072, 8, 24);
    if (name == "777M") return large_preset("777M", 1536, 4096, 12, 24);
    if (name == "1.3B") return large_preset("1.3B", 2048, 5504, 16, 24);
    if (name == "2.7B") return large_preset("2.7B", 2560, 6912, 20, 32);
    if (name == "6.7B") return large_preset("6.7B", 4096, 11008, 32, 32);
    if (name == "9.5B") return large_preset("9.5B", 4608, 12288, 36, 36);
    if (name == "toy") {
        ModelConfig c;
        c.name = "toy";
        return c;
    }
    if (name == "tiny") {
        ModelConfig c;
        c.name = "tiny";
        c.n_layers = 2;
        c.d_model = 16;
        c.n_heads = 2;
        c.d_ffn = 32;
        c.max_context = 64;
        return c;
    }
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

std::size_t count_params(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    std::size_t per_layer = 4 * d * d + 3 * d * c.d_ffn + 2 * d + 2 * c.head_dim();
    if (c.policy.learned()) per_layer += d;
    const std::size_t embeddings = c.vocab_size * d * (c.tie_embeddings ? 1 : 2);
    return embeddings + c.n_layers * per_layer + d;
}

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const ModelConfig& c = config_;
    const std::size_t d = c.d_model, dh = c.head_dim();
    embedding = Tensor<T>({c.vocab_size, d}, true);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        Block<T> b;
        b.attn_norm = Tensor<T>({d}, std::vector<T>(d, T(1)), true);
        b.ffn_norm = Tensor<T>({d}, std::vector<T>(d, T(1)), true);
        AttentionLayer<T>& a = b.attn;
        a.heads = c.n_heads;
        a.head_dim = dh;
        a.max_context = c.max_context;
        a.rope_theta = c.rope_theta;
        a.norm_eps = c.norm_eps;
        a.wq = Tensor<T>({d, d}, true);
        a.wk = Tensor<T>({d, d}, true);
        a.wv = Tensor<T>({d, d}, true);
        a.wo = Tensor<T>({d, d}, true);
        a.q_norm = Tensor<T>({dh}, std::vector<T>(dh, T(1)), true);
        a.k_norm = Tensor<T>({dh}, std::vector<T>(dh, T(1)), true);
        a.policy = c.policy;
        if (c.policy.learned()) a.w_tau = Tensor<T>({d}, true);
        b.w_gate = Tensor<T>({d, c.d_ffn}, true);
        b.w_up = Tensor<T>({d, c.d_ffn}, true);
        b.w_down = Tensor<T>({c.d_ffn, d}, true);
        blocks.push_back(std::move(b));
    }
    final_norm = Tensor<T>({d}, std::vector<T>(d, T(1)), true);
    if (!c.tie_embeddings) output = Tensor<T>({c.vocab_size, d}, true);
}

template <typename T>
Tensor<T> Model<T>::forward(Graph<T>& g, std::span<const std::int32_t> tokens, std::size_t batch, std::size_t seq,
                            ForwardCapture<T>* capture) const {
    if (batch == 0 || seq == 0 || tokens.size() != batch * seq) {
        throw DimensionError("forward: " + std::to_string(tokens.size()) + " tokens for batch " + std::to_string(batch) +
                             " x seq " + std::to_string(seq));
    }
    if (seq > config_.max_context) {
        throw ConfigError("forward: sequence of " + std::to_string(seq) + " exceeds max_context " +
                          std::to_string(config_.max_context));
    }
    Tensor<T> x = focal::embedding(g, embedding, tokens);
    if (capture != nullptr) {
        capture->traces.clear();
        capture->tau.assign(blocks.size(), {});
    }
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const Block<T>& b = blocks[l];
        AttentionCapture<T> ac;
        ac.keep_probs = capture != nullptr && capture->keep_probs;
        const Tensor<T> h = rms_norm(g, x, b.attn_norm, config_.norm_eps);
        x = add(g, x, attend(g, h, b.attn, batch, seq, capture != nullptr ? &ac : nullptr));
        const Tensor<T> h2 = rms_norm(g, x, b.ffn_norm, config_.norm_eps);
        x = add(g, x, swiglu(g, h2, b.w_gate, b.w_up, b.w_down));
        if (capture != nullptr) {
            capture->tau[l] = std::move(ac.tau);
            if (ac.probs) {
                TraceOptions opts = capture->trace;
                opts.layer_index = l;
                const std::size_t used = capture->traces.size();
                opts.max_rows = used >= opts.max_rows ? 0 : opts.max_rows - used;
                auto rows = traces_from_probs(*ac.probs, batch, b.attn.heads, seq, opts);
                capture->traces.insert(capture->traces.end(), std::make_move_iterator(rows.begin()),
                                       std::make_move_iterator(rows.end()));
            }
        }
    }
    x = rms_norm(g, x, final_norm, config_.norm_eps);
    return matmul_nt(g, x, config_.tie_embeddings ? embedding : output);
}

template <typename T>
std::vector<NamedParam<T>> Model<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    out.push_back({"embedding", embedding, true});
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const Block<T>& b = blocks[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        out.push_back({p + "attn_norm", b.attn_norm, false});
        out.push_back({p + "attn.wq", b.attn.wq, true});
        out.push_back({p + "attn.wk", b.attn.wk, true});
        out.push_back({p + "attn.wv", b.attn.wv, true});
        out.push_back({p + "attn.wo", b.attn.wo, true});
        out.push_back({p + "attn.q_norm", b.attn.q_norm, false});
        out.push_back({p + "attn.k_norm", b.attn.k_norm, false});
        if (b.attn.w_tau.defined()) out.push_back({p + "attn.w_tau", b.attn.w_tau, false});
        out.push_back({p + "ffn_norm", b.ffn_norm, false});
        out.push_back({p + "ffn.w_gate", b.w_gate, true});
        out.push_back({p + "ffn.w_up", b.w_up, true});
        out.push_back({p + "ffn.w_down", b.w_down, true});
    }
    out.push_back({"final_norm", final_norm, false});
    if (output.defined()) out.push_back({"output", output, true});
    return out;
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
}

namespace {

template <typename T>
void fill_normal(Tensor<T>& t, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
Tensor<T> make_tau_weight(std::size_t d, TauInit init, std::uint64_t seed) {
    Tensor<T> w({d}, true);
    if (init == TauInit::small_random) {
        std::mt19937_64 rng(seed);
        fill_normal(w, rng, 0.02);
    }
    return w;
}

}  // namespace

template <typename T>
void Model<T>::set_temperature(const TemperaturePolicy& policy) {
    policy.validate();
    config_.policy = policy;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        AttentionLayer<T>& a = blocks[l].attn;
        a.policy = policy;
        if (policy.learned()) {
            if (!a.w_tau.defined()) a.w_tau = make_tau_weight<T>(config_.d_model, policy.tau_init, config_.seed + 7919 * (l + 1));
        } else {
            a.w_tau = Tensor<T>();
        }
    }
}

template <typename T>
Model<T> init_params(const ModelConfig& config) {
    Model<T> m(config);
    std::mt19937_64 rng(config.seed);
    constexpr double kStd = 0.02;
    const double out_std = kStd / std::sqrt(2.0 * static_cast<double>(config.n_layers));
    fill_normal(m.embedding, rng, kStd);
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        Block<T>& b = m.blocks[l];
        fill_normal(b.attn.wq, rng, kStd);
        fill_normal(b.attn.wk, rng, kStd);
        fill_normal(b.attn.wv, rng, kStd);
        fill_normal(b.attn.wo, rng, out_std);
        fill_normal(b.w_gate, rng, kStd);
        fill_normal(b.w_up, rng, kStd);
        fill_normal(b.w_down, rng, out_std);
        if (config.policy.learned()) {
            b.attn.w_tau = make_tau_weight<T>(config.d_model, config.policy.tau_init, config.seed + 7919 * (l + 1));
        }
    }
    if (m.output.defined()) fill_normal(m.output, rng, kStd);
    return m;
}

template <typename T>
Model<T> clone_model(const Model<T>& model) {
    Model<T> copy(model.config());
    const auto src = model.parameters();
    const auto dst = copy.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        Tensor<T> t = dst[i].tensor;
        std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), t.data().begin());
    }
    return copy;
}

template class Model<float>;
template class Model<double>;
template Model<float> init_params<float>(const ModelConfig&);
template Model<double> init_params<double>(const ModelConfig&);
template Model<float> clone_model<float>(const Model<float>&);
template Model<double> clone_model<double>(const Model<double>&);

}  // namespace focal
