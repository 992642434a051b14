#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "whvi/config.hpp"
#include "whvi/data.hpp"
#include "whvi/metrics.hpp"
#include "whvi/models.hpp"
#include "whvi/train.hpp"

namespace whvi::experiment {

// The dataset named by the config, unsplit, in original units.
data::Dataset load_dataset(const config::ExperimentConfig& c);
// load_dataset + the train/test split belonging to `seed`.
data::Dataset prepare_split(const config::ExperimentConfig& c, std::uint64_t seed);

std::unique_ptr<nn::Regressor> build_model(const config::ExperimentConfig& c,
                                           std::size_t input_dim, const data::ColumnStats& y_stats,
                                           std::uint64_t seed);

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<metrics::MetricsRecord> records;
};

struct RunOptions {
    std::ostream* log = nullptr;  // progress lines; null = quiet
    std::size_t jobs = 1;         // seeds trained concurrently
};

struct RunResult {
    std::filesystem::path dir;
    std::vector<SeedResult> seeds;
    std::vector<metrics::Summary> summary;
};

// Metrics summarized over the final epoch of each seed.
inline const std::vector<std::string> kSummaryMetrics = {"test_rmse", "test_mnll", "elbo",
                                                         "data_fit", "kl"};

std::vector<metrics::Summary> summarize_finals(const std::vector<SeedResult>& seeds);

// Runs every seed and writes:
//   config.json             resolved config, defaults materialized
//   seeds.json              seed list
//   seed-<s>/metrics.jsonl  one record per epoch
//   seed-<s>/metrics.csv
//   seed-<s>/checkpoint.json
//   summary.csv, summary.json  mean and std over seeds
RunResult run(const config::ExperimentConfig& c, const RunOptions& options = {});

// Rebuild the model and test split recorded in a run checkpoint and score it.
train::EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint_path,
                                      std::size_t n_mc = 0);

struct ParamRow {
    std::string group;
    std::string tensor;
    Shape shape;
    std::size_t count = 0;
};

std::vector<ParamRow> param_report(nn::Regressor& model);
std::string format_param_report(const std::vector<ParamRow>& rows);

}  // namespace whvi::experiment
