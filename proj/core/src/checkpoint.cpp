#include "whvi/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "whvi/error.hpp"

namespace whvi::checkpoint {

namespace {

constexpr const char* kFormat = "whvi-checkpoint";
constexpr int kVersion = 1;

std::string encode(const Tensor& t) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(t.size() * 16);
    for (double v : t.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int shift = 60; shift >= 0; shift -= 4) out.push_back(digits[(bits >> shift) & 0xF]);
    }
    return out;
}

Tensor decode(const std::string& name, const nlohmann::json& entry) {
    const auto shape = entry.at("shape").get<Shape>();
    const auto& hex = entry.at("data").get_ref<const std::string&>();
    const std::size_t n = numel(shape);
    if (hex.size() != 16 * n) {
        throw CheckpointError("tensor '" + name + "': payload holds " + std::to_string(hex.size() / 16) +
                              " values, shape " + whvi::to_string(shape) + " needs " + std::to_string(n));
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        const char* first = hex.data() + 16 * i;
        const auto [ptr, ec] = std::from_chars(first, first + 16, bits, 16);
        if (ec != std::errc() || ptr != first + 16) {
            throw CheckpointError("tensor '" + name + "': bad hex payload at element " + std::to_string(i));
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return Tensor(shape, std::move(values));
}

nlohmann::json encode_group(const std::map<std::string, Tensor>& group) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [name, t] : group) out[name] = {{"shape", t.shape()}, {"data", encode(t)}};
    return out;
}

std::map<std::string, Tensor> decode_group(const nlohmann::json& j) {
    std::map<std::string, Tensor> out;
    for (const auto& [name, entry] : j.items()) out.emplace(name, decode(name, entry));
    return out;
}

void restore_group(const std::string& role, const std::map<std::string, Tensor>& stored,
                   const std::map<std::string, Tensor*>& targets) {
    for (const auto& [name, dst] : targets) {
        const auto it = stored.find(name);
        if (it == stored.end()) throw CheckpointError(role + " '" + name + "' is missing from the checkpoint");
        if (it->second.shape() != dst->shape()) {
            throw CheckpointError(role + " '" + name + "' has shape " + whvi::to_string(it->second.shape()) +
                                  " in the checkpoint but " + whvi::to_string(dst->shape()) +
                                  " in the model");
        }
    }
    for (const auto& [name, _] : stored) {
        if (!targets.contains(name)) {
            throw CheckpointError(role + " '" + name + "' in the checkpoint does not exist in the model");
        }
    }
    for (const auto& [name, dst] : targets) *dst = stored.at(name);
}

}  // namespace

Checkpoint capture(nn::Regressor& model, nlohmann::json metadata,
                   std::map<std::string, Tensor> extras) {
    Checkpoint c;
    c.model_kind = model.kind();
    c.metadata = std::move(metadata);
    for (const auto* p : model.parameters()) c.parameters.emplace(p->name, p->value);
    for (const auto& b : model.buffers()) c.buffers.emplace(b.name, *b.tensor);
    c.extras = std::move(extras);
    return c;
}

std::string serialize(const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["model"] = ckpt.model_kind;
    j["metadata"] = ckpt.metadata;
    j["parameters"] = encode_group(ckpt.parameters);
    j["buffers"] = encode_group(ckpt.buffers);
    j["extras"] = encode_group(ckpt.extras);
    return j.dump(1) + "\n";
}

Checkpoint deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format") != kFormat) throw CheckpointError("not a whvi checkpoint");
        if (j.at("version") != kVersion) {
            throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
        }
        Checkpoint c;
        c.model_kind = j.at("model").get<std::string>();
        c.metadata = j.at("metadata");
        c.parameters = decode_group(j.at("parameters"));
        c.buffers = decode_group(j.at("buffers"));
        c.extras = decode_group(j.at("extras"));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << serialize(ckpt);
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return deserialize(text.str());
}

void restore(nn::Regressor& model, const Checkpoint& ckpt) {
    if (ckpt.model_kind != model.kind()) {
        throw CheckpointError("checkpoint holds a " + ckpt.model_kind + " model, not " + model.kind());
    }
    std::map<std::string, Tensor*> params;
    for (auto* p : model.parameters()) params.emplace(p->name, &p->value);
    std::map<std::string, Tensor*> buffers;
    for (const auto& b : model.buffers()) buffers.emplace(b.name, b.tensor);
    restore_group("parameter", ckpt.parameters, params);
    restore_group("buffer", ckpt.buffers, buffers);
}

void save_model(nn::Regressor& model, const std::filesystem::path& path, nlohmann::json metadata,
                std::map<std::string, Tensor> extras) {
    save(capture(model, std::move(metadata), std::move(extras)), path);
}

Checkpoint load_model(nn::Regressor& model, const std::filesystem::path& path) {
    Checkpoint c = read(path);
    restore(model, c);
    return c;
}

}  // namespace whvi::checkpoint
