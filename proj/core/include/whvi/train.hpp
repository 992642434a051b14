#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "whvi/adam.hpp"
#include "whvi/data.hpp"
#include "whvi/layer.hpp"
#include "whvi/metrics.hpp"
#include "whvi/models.hpp"

namespace whvi::train {

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 64;
    optim::AdamOptions adam{};
    std::size_t n_mc_train = 1;
    std::size_t n_mc_eval = 100;
    // KL weight ramps linearly from 1/warmup to 1 over this many epochs; 0 = off.
    std::size_t kl_warmup_epochs = 0;
    // Evaluate test metrics every k epochs (the final epoch always). Epochs
    // in between repeat the last evaluated values.
    std::size_t eval_every = 1;
    nn::Sampling sampling = nn::Sampling::local_reparam;
};

struct EvalResult {
    double rmse = 0.0;
    double mnll = 0.0;
};

EvalResult evaluate(nn::Regressor& model, const Tensor& x, const Tensor& y, std::size_t n_mc,
                    NoiseStream& noise);

double kl_weight_at(const TrainConfig& config, std::size_t epoch);

using EpochCallback = std::function<void(const metrics::MetricsRecord&)>;

// Minibatch ELBO ascent with Adam over ds's training rows, one MetricsRecord
// per epoch. Deterministic given `seed`. Throws TrainingDiverged on a
// non-finite objective or gradient.
std::vector<metrics::MetricsRecord> train_loop(nn::Regressor& model, const data::Dataset& ds,
                                               const TrainConfig& config, std::uint64_t seed,
                                               const EpochCallback& on_epoch = {});

}  // namespace whvi::train
