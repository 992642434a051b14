#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "whvi/tensor.hpp"

namespace whvi::metrics {

// RMSE of the MC-mean prediction. samples: [n_mc x b x T], y: [b x T].
double rmse(const Tensor& samples, const Tensor& y);

// Mean over test points of -log((1/n_mc) sum_s N(y | mean_s, exp(log_var))),
// summed over targets. log_var: [T].
double mnll(const Tensor& samples, const Tensor& y, const Tensor& log_var);

struct MetricsRecord {
    std::string dataset;
    std::string model;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double elbo = 0.0;       // per-epoch average of the minibatch ELBO estimates
    double data_fit = 0.0;   // same average of the (N/b)-scaled expected log-likelihood
    double kl = 0.0;
    double kl_weight = 1.0;  // elbo = data_fit - kl_weight * kl
    double test_rmse = 0.0;
    double test_mnll = 0.0;
    double wall_clock_s = 0.0;
    std::size_t parameter_count = 0;
};

nlohmann::ordered_json to_json(const MetricsRecord& r);
MetricsRecord record_from_json(const nlohmann::json& j);

void write_jsonl(std::ostream& out, const MetricsRecord& r);
std::string csv_header();
void write_csv_row(std::ostream& out, const MetricsRecord& r);

// Mean and sample standard deviation (n - 1; 0 for a single value).
struct Summary {
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

Summary summarize(const std::string& metric, const std::vector<double>& values);

}  // namespace whvi::metrics
