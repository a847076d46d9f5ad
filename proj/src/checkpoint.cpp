#include "focal/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <type_traits>

#include "focal/error.hpp"

namespace focal {

namespace {

constexpr const char* kFormat = "focal-checkpoint";
constexpr int kVersion = 1;

template <typename T>
constexpr const char* dtype_name() {
    return std::is_same_v<T, float> ? "f32" : "f64";
}

Json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("checkpoint: cannot open " + path.string());
    Json m;
    try {
        m = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw IoError("checkpoint: corrupt manifest " + path.string() + ": " + e.what());
    }
    if (m.value("format", "") != kFormat || m.value("version", 0) != kVersion) {
        throw IoError("checkpoint: " + path.string() + " is not a version " + std::to_string(kVersion) + " checkpoint");
    }
    return m;
}

template <typename T>
void write_values(std::ofstream& out, std::span<const T> values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

template <typename Stored, typename T>
void convert(const std::vector<char>& payload, std::size_t offset, std::size_t count, std::span<T> dst) {
    if (offset + count * sizeof(Stored) > payload.size()) throw IoError("checkpoint: payload truncated");
    if constexpr (std::is_same_v<Stored, T>) {
        std::memcpy(dst.data(), payload.data() + offset, count * sizeof(T));
    } else {
        std::vector<Stored> tmp(count);
        std::memcpy(tmp.data(), payload.data() + offset, count * sizeof(Stored));
        for (std::size_t i = 0; i < count; ++i) dst[i] = static_cast<T>(tmp[i]);
    }
}

}  // namespace

std::filesystem::path checkpoint_dir(const std::filesystem::path& root, std::uint64_t step) {
    return root / "ckpt" / ("step_" + std::to_string(step));
}

std::string checkpoint_dtype(const std::filesystem::path& dir) { return read_manifest(dir).value("dtype", ""); }

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Model<T>& model, const OptimizerState<T>* optimizer,
                     const CheckpointMeta& meta) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const fs::path staging = dir.string() + ".partial";
    fs::remove_all(staging, ec);
    fs::create_directories(staging, ec);
    if (ec) throw IoError("checkpoint: cannot create " + staging.string() + ": " + ec.message());

    Json manifest;
    manifest["format"] = kFormat;
    manifest["version"] = kVersion;
    manifest["dtype"] = dtype_name<T>();
    manifest["step"] = meta.step;
    manifest["data_cursor"] = meta.data_cursor;
    manifest["root_seed"] = meta.root_seed;
    manifest["model"] = to_json(model.config());
    manifest["train"] = to_json(meta.train);
    manifest["extra"] = meta.extra;

    std::ofstream payload(staging / "tensors.bin", std::ios::binary);
    if (!payload) throw IoError("checkpoint: cannot write payload in " + staging.string());
    std::size_t offset = 0;
    Json table = Json::array();
    auto emit = [&](const std::string& name, const Shape& shape, std::span<const T> values) {
        table.push_back(Json{{"name", name}, {"shape", shape}, {"offset", offset}, {"count", values.size()}});
        write_values(payload, values);
        offset += values.size_bytes();
    };
    const auto params = model.parameters();
    for (const auto& p : params) emit(p.name, p.tensor.shape(), p.tensor.data());
    if (optimizer != nullptr) {
        manifest["optimizer_step"] = optimizer->step;
        if (!optimizer->first_moment.empty()) {
            if (optimizer->first_moment.size() != params.size()) {
                throw UsageError("checkpoint: optimizer state does not match the model's parameters");
            }
            for (std::size_t i = 0; i < params.size(); ++i) {
                emit("adam.m." + params[i].name, params[i].tensor.shape(), optimizer->first_moment[i]);
                emit("adam.v." + params[i].name, params[i].tensor.shape(), optimizer->second_moment[i]);
            }
        }
    }
    payload.close();
    if (!payload) throw IoError("checkpoint: short write in " + staging.string());
    manifest["tensors"] = table;
    {
        std::ofstream out(staging / "manifest.json");
        out << manifest.dump(2) << "\n";
        if (!out) throw IoError("checkpoint: cannot write manifest in " + staging.string());
    }
    fs::remove_all(dir, ec);
    fs::create_directories(dir.parent_path(), ec);
    fs::rename(staging, dir, ec);
    if (ec) throw IoError("checkpoint: cannot move into " + dir.string() + ": " + ec.message());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir) {
    const Json manifest = read_manifest(dir);
    const std::string dtype = manifest.value("dtype", "");
    if (dtype != "f32" && dtype != "f64") throw IoError("checkpoint: unknown dtype '" + dtype + "'");

    std::ifstream in(dir / "tensors.bin", std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open payload in " + dir.string());
    const std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Checkpoint<T> ck{Model<T>(model_config_from_json(manifest.at("model"))), std::nullopt, {}};
    ck.meta.step = manifest.at("step").get<std::uint64_t>();
    ck.meta.data_cursor = manifest.at("data_cursor").get<std::uint64_t>();
    ck.meta.root_seed = manifest.at("root_seed").get<std::uint64_t>();
    ck.meta.train = train_config_from_json(manifest.at("train"));
    ck.meta.extra = manifest.value("extra", Json::object());

    std::map<std::string, const Json*> entries;
    for (const Json& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = &e;

    auto fill = [&](const std::string& name, const Shape& shape, std::span<T> dst) {
        auto it = entries.find(name);
        if (it == entries.end()) throw IoError("checkpoint: missing tensor '" + name + "'");
        const Json& e = *it->second;
        if (e.at("shape").get<Shape>() != shape) {
            throw IoError("checkpoint: tensor '" + name + "' has shape " + shape_str(e.at("shape").get<Shape>()) +
                          ", model expects " + shape_str(shape));
        }
        const auto offset = e.at("offset").get<std::size_t>();
        const auto count = e.at("count").get<std::size_t>();
        if (count != dst.size()) throw IoError("checkpoint: tensor '" + name + "' has the wrong element count");
        if (dtype == "f32") {
            convert<float>(payload, offset, count, dst);
        } else {
            convert<double>(payload, offset, count, dst);
        }
    };

    const auto params = ck.model.parameters();
    for (const auto& p : params) {
        Tensor<T> t = p.tensor;
        fill(p.name, t.shape(), t.data());
    }
    if (manifest.contains("optimizer_step")) {
        OptimizerState<T> opt;
        opt.step = manifest.at("optimizer_step").get<std::uint64_t>();
        if (entries.contains("adam.m." + params.front().name)) {
            for (const auto& p : params) {
                opt.first_moment.emplace_back(p.tensor.numel());
                opt.second_moment.emplace_back(p.tensor.numel());
                fill("adam.m." + p.name, p.tensor.shape(), opt.first_moment.back());
                fill("adam.v." + p.name, p.tensor.shape(), opt.second_moment.back());
            }
        }
        ck.optimizer = std::move(opt);
    }
    return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const Model<float>&, const OptimizerState<float>*,
                                     const CheckpointMeta&);
template void save_checkpoint<double>(const std::filesystem::path&, const Model<double>&,
                                      const OptimizerState<double>*, const CheckpointMeta&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace focal
