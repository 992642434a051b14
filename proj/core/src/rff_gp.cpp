#include <cmath>
#include <numbers>

#include "whvi/error.hpp"
#include "whvi/fwht.hpp"
#include "whvi/models.hpp"

namespace whvi::nn {

std::size_t matched_meanfield_features(std::size_t hadamard_dim, std::size_t blocks,
                                       CovarianceMode mode) {
    const std::size_t d = hadamard_dim;
    const std::size_t per_block = mode == CovarianceMode::diagonal ? 4 * d : 3 * d + d * (d + 1) / 2;
    return match_parameter_budget(
        per_block * blocks, [](std::size_t f) { return mean_field_parameter_count(f, 1); },
        per_block * blocks);
}

RffGpRegressor::RffGpRegressor(const RffGpOptions& options, Tensor y_mean, Tensor y_std,
                               NoiseStream& init)
    : options_(options),
      log_lengthscale_("kernel.log_lengthscale", Tensor::scalar(std::log(options.lengthscale))),
      log_amplitude_("kernel.log_amplitude", Tensor::scalar(std::log(options.amplitude))),
      noise_log_var_("noise.log_var", Tensor(Shape{1}, std::log(options.initial_noise_fraction))),
      y_mean_(std::move(y_mean).reshaped(Shape{1})),
      y_std_(std::move(y_std).reshaped(Shape{1})) {
    if (!(y_std_[0] > 0.0)) throw Error("target standard deviation must be positive");
    if (options_.input_dim == 0) throw DimensionError("GP input dimension must be positive");

    std::size_t n_features = 0;
    if (options_.posterior == GpPosterior::whvi) {
        const HadamardDim d(options_.hadamard_dim);
        if (options_.blocks == 0) throw DimensionError("GP needs at least one WHVI block");
        n_features = options_.blocks * d.value() * d.value();
    } else {
        n_features = options_.features != 0
                         ? options_.features
                         : matched_meanfield_features(options_.hadamard_dim, options_.blocks,
                                                      options_.covariance);
    }

    omega_ = init.standard_normal(Shape{options_.input_dim, n_features});
    phases_ = Tensor(Shape{n_features});
    for (double& p : phases_.data()) p = init.uniform(0.0, 2.0 * std::numbers::pi);

    if (options_.posterior == GpPosterior::whvi) {
        const std::size_t d = options_.hadamard_dim;
        hadamard_ = naive_hadamard(HadamardDim(d));
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& v : hadamard_.data()) v *= s;
        for (std::size_t b = 0; b < options_.blocks; ++b) {
            const std::string name =
                options_.blocks == 1 ? "weights" : "weights.block" + std::to_string(b);
            whvi_blocks_.push_back(std::make_unique<WhviLayer>(HadamardDim(d), options_.covariance,
                                                               init, name, options_.whvi_init));
        }
    } else {
        meanfield_ = std::make_unique<MeanFieldLayer>(n_features, 1, init, "weights",
                                                      options_.meanfield_init);
    }
}

std::string RffGpRegressor::kind() const {
    return options_.posterior == GpPosterior::whvi ? "gp-whvi" : "gp-meanfield";
}

ad::Variable RffGpRegressor::rff_features(ad::Tape& tape, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != options_.input_dim) {
        throw ShapeError("GP input " + whvi::to_string(x.shape()) + ", expected [b x " +
                         std::to_string(options_.input_dim) + "]");
    }
    const double norm = std::sqrt(2.0 / static_cast<double>(feature_count()));
    ad::Variable proj = tape.constant(whvi::matmul(x, omega_));
    ad::Variable inv_l = ad::exp(ad::neg(tape.leaf(log_lengthscale_)));
    ad::Variable arg = ad::add(ad::mul(proj, inv_l), phases_);
    ad::Variable amp = ad::scale(ad::exp(ad::scale(tape.leaf(log_amplitude_), 0.5)), norm);
    return ad::mul(ad::cos(arg), amp);
}

Tensor RffGpRegressor::rff_features(const Tensor& x) {
    ad::Tape tape;
    return rff_features(tape, x).value();
}

ad::Variable RffGpRegressor::block_coefficients(ad::Tape& tape, const ad::Variable& phi,
                                                std::size_t block) {
    // f = phi^T vect(W) = sum_k g_k (H S1 F S2 H)_kk where F is phi reshaped
    // column-major into D x D. The row-major reshape M is F^T, and the
    // diagonal of H S2 M S1 H is the same, so c_k = sum_a H_ak (T H)_ak with
    // T = M * (s2 s1^T).
    WhviLayer& layer = *whvi_blocks_[block];
    const std::size_t d = layer.size();
    const std::size_t rows = phi.shape()[0];
    ad::Variable m = ad::reshape(ad::slice_last(phi, block * d * d, (block + 1) * d * d),
                                 Shape{rows, d, d});
    ad::Variable outer = ad::matmul(ad::reshape(tape.leaf(layer.s2), Shape{d, 1}),
                                    ad::reshape(tape.leaf(layer.s1), Shape{1, d}));
    ad::Variable th = fwht_batched(ad::mul(m, outer), Normalization::orthonormal);
    return ad::sum_last(ad::transpose_last2(ad::mul(th, hadamard_)));
}

ad::Variable RffGpRegressor::latent(ad::Tape& tape, const Tensor& x, NoiseStream& noise,
                                    Sampling mode) {
    ad::Variable phi = rff_features(tape, x);
    const std::size_t rows = x.rows();
    if (options_.posterior == GpPosterior::meanfield) {
        return ad::reshape(meanfield_->forward(tape, phi, noise, mode), Shape{rows});
    }
    ad::Variable total;
    for (std::size_t b = 0; b < whvi_blocks_.size(); ++b) {
        WhviLayer& layer = *whvi_blocks_[b];
        const std::size_t d = layer.size();
        ad::Variable c = block_coefficients(tape, phi, b);
        ad::Variable g;
        switch (mode) {
            case Sampling::reparam:
                g = layer.sample_g(tape, noise.standard_normal(Shape{d}));
                break;
            case Sampling::local_reparam:
                g = layer.q.sample(tape, noise.standard_normal(Shape{rows, d}));
                break;
            case Sampling::mean:
                g = tape.leaf(layer.q.mu);
                break;
        }
        ad::Variable f = ad::sum_last(ad::mul(c, g));
        total = b == 0 ? f : ad::add(total, f);
    }
    return total;
}

ad::Variable RffGpRegressor::latent_dense(ad::Tape& tape, const Tensor& x,
                                          const std::vector<Tensor>& g) {
    if (options_.posterior != GpPosterior::whvi || g.size() != whvi_blocks_.size()) {
        throw Error("latent_dense needs a WHVI posterior and one g per block");
    }
    ad::Variable phi = rff_features(tape, x);
    ad::Variable total;
    for (std::size_t b = 0; b < whvi_blocks_.size(); ++b) {
        const std::size_t d = whvi_blocks_[b]->size();
        ad::Variable w = whvi_blocks_[b]->materialize_w(tape, tape.constant(g[b]));
        // vect stacks columns: w[i + j d] = W_ij, i.e. the row-major flattening of W^T.
        ad::Variable vec = ad::reshape(ad::transpose(w), Shape{d * d});
        ad::Variable f = ad::sum_last(ad::mul(ad::slice_last(phi, b * d * d, (b + 1) * d * d), vec));
        total = b == 0 ? f : ad::add(total, f);
    }
    return total;
}

ad::Variable RffGpRegressor::log_likelihood(ad::Tape& tape, const Tensor& x, const Tensor& y,
                                            NoiseStream& noise, Sampling mode) {
    const std::size_t rows = x.rows();
    ad::Variable f = ad::reshape(latent(tape, x, noise, mode), Shape{rows, 1});
    ad::Variable mean = ad::add(ad::mul(f, y_std_), y_mean_);
    ad::Variable log_var =
        ad::add(tape.leaf(noise_log_var_), Tensor(Shape{1}, 2.0 * std::log(y_std_[0])));
    return ad::neg(ad::gaussian_nll(y.reshaped(Shape{rows, 1}), mean, log_var));
}

ad::Variable RffGpRegressor::kl(ad::Tape& tape) {
    if (options_.posterior == GpPosterior::meanfield) return meanfield_->kl(tape);
    ad::Variable total = whvi_blocks_.front()->kl_to_prior(tape);
    for (std::size_t b = 1; b < whvi_blocks_.size(); ++b)
        total = ad::add(total, whvi_blocks_[b]->kl_to_prior(tape));
    return total;
}

Tensor RffGpRegressor::predict_samples(const Tensor& x, std::size_t n_mc, NoiseStream& noise) {
    if (n_mc == 0) throw Error("predict_samples needs n_mc >= 1");
    const std::size_t rows = x.rows();
    // The latent is exactly Gaussian per point given phi(x): mean and
    // variance are computed once, then sampled.
    Tensor mean(Shape{rows}, 0.0);
    Tensor var(Shape{rows}, 0.0);
    ad::Tape tape;
    ad::Variable phi = rff_features(tape, x);
    if (options_.posterior == GpPosterior::meanfield) {
        const Tensor& p = phi.value();
        const Tensor& mu = meanfield_->mu.value;
        const Tensor& ls = meanfield_->log_sigma.value;
        const std::size_t f = p.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < f; ++j) {
                const double pj = p[r * f + j];
                mean[r] += pj * mu[j];
                var[r] += pj * pj * std::exp(2.0 * ls[j]);
            }
        }
    } else {
        for (std::size_t b = 0; b < whvi_blocks_.size(); ++b) {
            WhviLayer& layer = *whvi_blocks_[b];
            const std::size_t d = layer.size();
            const Tensor c = block_coefficients(tape, phi, b).value();
            const Tensor root = layer.q.sqrt_covariance();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t k = 0; k < d; ++k) mean[r] += c[r * d + k] * layer.q.mu.value[k];
                // c^T Sigma c = |L^T c|^2
                for (std::size_t j = 0; j < d; ++j) {
                    double v = 0.0;
                    for (std::size_t i = j; i < d; ++i) v += root.at(i, j) * c[r * d + i];
                    var[r] += v * v;
                }
            }
        }
    }
    Tensor out(Shape{n_mc, rows, 1});
    for (std::size_t s = 0; s < n_mc; ++s) {
        const Tensor eps = noise.standard_normal(Shape{rows});
        for (std::size_t r = 0; r < rows; ++r) {
            const double f = mean[r] + std::sqrt(var[r]) * eps[r];
            out[s * rows + r] = f * y_std_[0] + y_mean_[0];
        }
    }
    return out;
}

Tensor RffGpRegressor::observation_log_variance() const {
    Tensor out = noise_log_var_.value;
    out[0] += 2.0 * std::log(y_std_[0]);
    return out;
}

std::vector<ParameterGroup> RffGpRegressor::parameter_groups() {
    std::vector<ParameterGroup> groups;
    if (options_.posterior == GpPosterior::whvi) {
        for (std::size_t b = 0; b < whvi_blocks_.size(); ++b)
            groups.push_back({"weights block" + std::to_string(b) + " (whvi)",
                              whvi_blocks_[b]->parameters()});
    } else {
        groups.push_back({"weights (meanfield)", meanfield_->parameters()});
    }
    groups.push_back({"kernel", {&log_lengthscale_, &log_amplitude_}});
    groups.push_back({"noise", {&noise_log_var_}});
    return groups;
}

std::vector<NamedBuffer> RffGpRegressor::buffers() {
    return {{"omega", &omega_}, {"phases", &phases_}, {"y_mean", &y_mean_}, {"y_std", &y_std_}};
}

}  // namespace whvi::nn
