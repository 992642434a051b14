#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "whvi/autodiff.hpp"
#include "whvi/layer.hpp"
#include "whvi/mean_field.hpp"
#include "whvi/noise.hpp"
#include "whvi/whvi_layer.hpp"

namespace whvi::nn {

struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

struct ParameterGroup {
    std::string name;
    std::vector<ad::Parameter*> parameters;
};

// Surface shared by every trainable regression model: training, evaluation,
// checkpointing and the parameter report only talk to this.
class Regressor {
public:
    virtual ~Regressor() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;

    // sum_i log p(y_i | x_i, W) for one posterior draw, y in target units.
    virtual ad::Variable log_likelihood(ad::Tape& tape, const Tensor& x, const Tensor& y,
                                        NoiseStream& noise, Sampling mode) = 0;
    virtual ad::Variable kl(ad::Tape& tape) = 0;

    // Noise-free predictive samples in target units, [n_mc x b x T].
    virtual Tensor predict_samples(const Tensor& x, std::size_t n_mc, NoiseStream& noise) = 0;
    // Observation noise log-variance in target units, [T].
    virtual Tensor observation_log_variance() const = 0;

    virtual std::vector<ParameterGroup> parameter_groups() = 0;
    // Non-trainable state that a checkpoint must carry.
    virtual std::vector<NamedBuffer> buffers() = 0;

    std::vector<ad::Parameter*> parameters();
    std::size_t parameter_count();
};

enum class LayerFamily { whvi, meanfield };

struct BnnOptions {
    std::size_t input_dim = 1;
    std::size_t output_dim = 1;
    std::vector<std::size_t> hidden = {128, 128};
    LayerFamily hidden_family = LayerFamily::whvi;
    CovarianceMode covariance = CovarianceMode::diagonal;
    // Deterministic (point-estimate) bias added after every layer.
    bool bias = true;
    bool learn_noise = true;
    // Observation noise variance relative to the target variance at init.
    double initial_noise_fraction = 0.01;
    WhviInit whvi_init{};
    MeanFieldInit hidden_meanfield_init{};
    MeanFieldInit output_init{};
};

// Bayesian MLP: hidden layers (WHVI or mean-field) with ReLU, a mean-field
// output layer, and outputs rescaled as y = f(x) * sigma_y + mu_y.
class BnnRegressor final : public Regressor {
public:
    BnnRegressor(const BnnOptions& options, Tensor y_mean, Tensor y_std, NoiseStream& init);

    std::string kind() const override;
    std::size_t input_dim() const override { return options_.input_dim; }
    std::size_t output_dim() const override { return options_.output_dim; }

    // Rescaled network output for one posterior draw, [b x T].
    ad::Variable forward(ad::Tape& tape, const Tensor& x, NoiseStream& noise, Sampling mode);

    ad::Variable log_likelihood(ad::Tape& tape, const Tensor& x, const Tensor& y,
                                NoiseStream& noise, Sampling mode) override;
    ad::Variable kl(ad::Tape& tape) override;
    Tensor predict_samples(const Tensor& x, std::size_t n_mc, NoiseStream& noise) override;
    Tensor observation_log_variance() const override;

    std::vector<ParameterGroup> parameter_groups() override;
    std::vector<NamedBuffer> buffers() override;

    const BnnOptions& options() const noexcept { return options_; }
    BayesianLayer& layer(std::size_t i) { return *layers_.at(i); }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    ad::Parameter& noise_log_variance() { return noise_log_var_; }

private:
    ad::Variable noise_term(ad::Tape& tape);

    BnnOptions options_;
    std::vector<std::unique_ptr<BayesianLayer>> layers_;
    std::vector<ad::Parameter> biases_;
    // Stored relative to the target scale: log_var = value + 2 log sigma_y.
    ad::Parameter noise_log_var_;
    Tensor y_mean_;
    Tensor y_std_;
};

enum class GpPosterior { whvi, meanfield };

struct RffGpOptions {
    std::size_t input_dim = 1;
    GpPosterior posterior = GpPosterior::whvi;
    // WHVI: each block is a D x D matrix reshaped into D^2 feature weights.
    std::size_t hadamard_dim = 16;
    std::size_t blocks = 1;
    // Mean-field: number of random features. 0 means "match the WHVI
    // parameter count for hadamard_dim/blocks/covariance".
    std::size_t features = 0;
    CovarianceMode covariance = CovarianceMode::diagonal;
    double lengthscale = 1.0;
    double amplitude = 1.0;
    double initial_noise_fraction = 0.01;
    WhviInit whvi_init{};
    MeanFieldInit meanfield_init{1.0, 0.1};
};

// Mean-field feature count whose posterior parameter count matches a WHVI
// feature posterior with the given shape.
std::size_t matched_meanfield_features(std::size_t hadamard_dim, std::size_t blocks,
                                       CovarianceMode mode);

// GP regression with random Fourier features for the RBF kernel:
// phi(x) = sqrt(2 a / D_rf) cos(x Omega / l + b), f(x) = phi(x)^T w, and a
// variational posterior over w. Omega ~ N(0, I) and b ~ U[0, 2 pi) are fixed
// at construction; lengthscale l, amplitude a and the noise are learned.
//
// With the WHVI posterior, w stacks vect(W_k) (column-major) of one or more
// D x D matrices W_k = S1 H diag(g) H S2.
class RffGpRegressor final : public Regressor {
public:
    RffGpRegressor(const RffGpOptions& options, Tensor y_mean, Tensor y_std, NoiseStream& init);

    std::string kind() const override;
    std::size_t input_dim() const override { return options_.input_dim; }
    std::size_t output_dim() const override { return 1; }
    std::size_t feature_count() const noexcept { return omega_.cols(); }

    // Random features of x, [b x D_rf], with the current kernel hyperparameters.
    ad::Variable rff_features(ad::Tape& tape, const Tensor& x);
    Tensor rff_features(const Tensor& x);

    // Standardized latent f for one draw, [b]. `mode` chooses a shared weight
    // sample (reparam), per-row noise (local_reparam) or the posterior mean.
    ad::Variable latent(ad::Tape& tape, const Tensor& x, NoiseStream& noise, Sampling mode);
    // Same latent, computed by materializing each W_k densely and taking
    // phi(x)^T vect(W). Test oracle for the fast path; uses the given g per block.
    ad::Variable latent_dense(ad::Tape& tape, const Tensor& x, const std::vector<Tensor>& g);

    ad::Variable log_likelihood(ad::Tape& tape, const Tensor& x, const Tensor& y,
                                NoiseStream& noise, Sampling mode) override;
    ad::Variable kl(ad::Tape& tape) override;
    Tensor predict_samples(const Tensor& x, std::size_t n_mc, NoiseStream& noise) override;
    Tensor observation_log_variance() const override;

    std::vector<ParameterGroup> parameter_groups() override;
    std::vector<NamedBuffer> buffers() override;

    const RffGpOptions& options() const noexcept { return options_; }
    WhviLayer& whvi_block(std::size_t i) { return *whvi_blocks_.at(i); }
    MeanFieldLayer& meanfield() { return *meanfield_; }
    ad::Parameter& log_lengthscale() { return log_lengthscale_; }
    ad::Parameter& log_amplitude() { return log_amplitude_; }
    ad::Parameter& noise_log_variance() { return noise_log_var_; }

private:
    // Per-row coefficients c with f = sum_k c_k g_k for block `b`: [rows x D].
    ad::Variable block_coefficients(ad::Tape& tape, const ad::Variable& phi, std::size_t block);

    RffGpOptions options_;
    Tensor omega_;   // [D_in x D_rf]
    Tensor phases_;  // [D_rf]
    Tensor hadamard_;  // orthonormal H, [D x D] (WHVI only)
    ad::Parameter log_lengthscale_;
    ad::Parameter log_amplitude_;
    ad::Parameter noise_log_var_;
    std::vector<std::unique_ptr<WhviLayer>> whvi_blocks_;
    std::unique_ptr<MeanFieldLayer> meanfield_;
    Tensor y_mean_;
    Tensor y_std_;
};

struct ElboTerms {
    ad::Variable elbo;      // data_fit - kl_weight * kl
    ad::Variable data_fit;  // (N / b) * MC average of sum log-likelihood
    ad::Variable kl;
};

// Minibatch estimate of E_q[log p(Y | X, W)] - KL(q || p), rescaled by N / b
// so that it is unbiased for the full-data bound.
ElboTerms elbo(Regressor& model, ad::Tape& tape, const Tensor& x, const Tensor& y,
               std::size_t dataset_size, std::size_t n_mc, NoiseStream& noise,
               Sampling mode = Sampling::local_reparam, double kl_weight = 1.0);

}  // namespace whvi::nn
