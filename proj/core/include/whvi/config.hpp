#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "whvi/train.hpp"
#include "whvi/whvi_layer.hpp"

namespace whvi::config {

enum class ModelKind { bnn_whvi, bnn_meanfield, gp_whvi, gp_meanfield_matched };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct DatasetSpec {
    // Either a manifest dataset name or a synthetic function name.
    std::string name;
    std::filesystem::path manifest = "data/manifest.json";
    std::string synthetic;
    std::size_t n = 10000;
    std::optional<double> noise_std;  // synthetic only; defaults to the function's
    std::uint64_t seed = 0;           // synthetic only: seed of the generated design
    double train_fraction = 0.9;      // 0.8 for synthetic data unless given

    bool is_synthetic() const noexcept { return !synthetic.empty(); }
};

struct Architecture {
    std::vector<std::size_t> hidden = {128, 128};
    std::size_t hadamard_dim = 16;  // GP: D of the reshaped D x D weight matrix
    std::size_t blocks = 1;
    std::size_t features = 0;       // GP mean-field: 0 = parameter matched
    double lengthscale = 1.0;
    double amplitude = 1.0;
    double initial_noise_fraction = 0.01;
    double whvi_s_variance = 1.0;
    double whvi_mu_std = 1.0;
    double whvi_sigma = 0.1;
    double meanfield_sigma = 1e-3;
};

struct ExperimentConfig {
    ModelKind model = ModelKind::bnn_whvi;
    nn::CovarianceMode covariance = nn::CovarianceMode::diagonal;
    DatasetSpec dataset;
    Architecture architecture;
    train::TrainConfig training;
    std::vector<std::uint64_t> seeds = {0};
    std::filesystem::path output_dir = "runs/default";
};

// Strict parse: unknown keys, wrong types and out-of-range values raise
// ConfigError naming the dotted field path. Relative paths inside the
// document are resolved against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Every field with defaults materialized.
nlohmann::ordered_json to_json(const ExperimentConfig& c);

void validate(const ExperimentConfig& c);

// Closest candidate to `key` by edit distance (ignoring '_' and case), or
// empty if nothing is reasonably close.
std::string suggest(const std::string& key, const std::vector<std::string>& candidates);

}  // namespace whvi::config
