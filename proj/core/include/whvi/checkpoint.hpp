#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "whvi/models.hpp"

namespace whvi::checkpoint {

// JSON container: model kind, free-form metadata and every named tensor
// (parameters, buffers, extras) with its shape and the IEEE-754 bit pattern
// of each element as 16 hex digits. Keys are sorted, so equal content
// serializes to identical bytes.
struct Checkpoint {
    std::string model_kind;
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, Tensor> parameters;
    std::map<std::string, Tensor> buffers;
    std::map<std::string, Tensor> extras;
};

Checkpoint capture(nn::Regressor& model, nlohmann::json metadata = nlohmann::json::object(),
                   std::map<std::string, Tensor> extras = {});

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& text);

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read(const std::filesystem::path& path);

// Copy stored tensors into `model`. Throws CheckpointError naming the first
// tensor that is missing, unexpected or of the wrong shape.
void restore(nn::Regressor& model, const Checkpoint& ckpt);

void save_model(nn::Regressor& model, const std::filesystem::path& path,
                nlohmann::json metadata = nlohmann::json::object(),
                std::map<std::string, Tensor> extras = {});
Checkpoint load_model(nn::Regressor& model, const std::filesystem::path& path);

}  // namespace whvi::checkpoint
