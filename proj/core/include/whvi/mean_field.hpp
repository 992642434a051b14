#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "whvi/autodiff.hpp"
#include "whvi/layer.hpp"
#include "whvi/noise.hpp"

namespace whvi::nn {

struct MeanFieldInit {
    // mu ~ N(0, mu_variance / in)
    double mu_variance = 1.0;
    double sigma = 1e-3;
};

// Fully factorized Gaussian posterior over an out x in weight matrix with an
// N(0, 1) prior on every weight. 2 * in * out parameters.
class MeanFieldLayer final : public BayesianLayer {
public:
    MeanFieldLayer(std::size_t in, std::size_t out, NoiseStream& init_stream,
                   const std::string& prefix, const MeanFieldInit& init = {});

    std::string kind() const override { return "meanfield"; }
    std::size_t in_features() const override { return in_; }
    std::size_t out_features() const override { return out_; }

    ad::Variable forward(ad::Tape& tape, const ad::Variable& h, NoiseStream& noise,
                         Sampling mode) override;
    ad::Variable kl(ad::Tape& tape) override { return mf_kl_to_prior(tape); }
    std::vector<ad::Parameter*> parameters() override { return {&mu, &log_sigma}; }

    // Pre-activation sample: mean h mu^T plus sqrt(h^2 (sigma^2)^T) * eps,
    // with eps [b x out].
    ad::Variable mf_forward_local_reparam(ad::Tape& tape, const ad::Variable& h, const Tensor& eps);
    // h W^T with one W = mu + sigma * eps shared by all rows; eps [out x in].
    ad::Variable mf_forward_reparam(ad::Tape& tape, const ad::Variable& h, const Tensor& eps);
    // Sum of per-weight KL(N(mu, sigma^2) || N(0, 1)).
    ad::Variable mf_kl_to_prior(ad::Tape& tape);

    ad::Parameter mu;         // [out x in]
    ad::Parameter log_sigma;  // [out x in]

private:
    std::size_t in_;
    std::size_t out_;
};

inline std::size_t mean_field_parameter_count(std::size_t in, std::size_t out) {
    return 2 * in * out;
}

// Size (width, feature count, ...) in [1, max_size] whose parameter count is
// nearest to `budget`; ties go to the smaller size.
std::size_t match_parameter_budget(std::size_t budget,
                                   const std::function<std::size_t(std::size_t)>& count,
                                   std::size_t max_size);

}  // namespace whvi::nn
