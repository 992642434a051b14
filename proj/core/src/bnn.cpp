#include <algorithm>
#include <cmath>
#include <cstddef>

#include "whvi/error.hpp"
#include "whvi/models.hpp"

namespace whvi::nn {

namespace {

void check_target_stats(const Tensor& y_mean, const Tensor& y_std, std::size_t t) {
    if (y_mean.size() != t || y_std.size() != t) {
        throw ShapeError("target statistics must have " + std::to_string(t) + " entries");
    }
    for (double s : y_std.data())
        if (!(s > 0.0)) throw Error("target standard deviation must be positive");
}

}  // namespace

BnnRegressor::BnnRegressor(const BnnOptions& options, Tensor y_mean, Tensor y_std,
                           NoiseStream& init)
    : options_(options),
      noise_log_var_("noise.log_var",
                     Tensor(Shape{options.output_dim}, std::log(options.initial_noise_fraction))),
      y_mean_(std::move(y_mean).reshaped(Shape{options.output_dim})),
      y_std_(std::move(y_std).reshaped(Shape{options.output_dim})) {
    check_target_stats(y_mean_, y_std_, options_.output_dim);
    std::size_t width = options_.input_dim;
    for (std::size_t i = 0; i < options_.hidden.size(); ++i) {
        const std::string name = "layer" + std::to_string(i);
        const std::size_t out = options_.hidden[i];
        if (options_.hidden_family == LayerFamily::whvi) {
            layers_.push_back(std::make_unique<WhviLinear>(width, out, options_.covariance, init,
                                                           name, options_.whvi_init));
        } else {
            layers_.push_back(std::make_unique<MeanFieldLayer>(width, out, init, name,
                                                               options_.hidden_meanfield_init));
        }
        if (options_.bias) biases_.emplace_back(name + ".bias", Tensor(Shape{out}, 0.0));
        width = out;
    }
    const std::string name = "layer" + std::to_string(options_.hidden.size());
    layers_.push_back(std::make_unique<MeanFieldLayer>(width, options_.output_dim, init, name,
                                                       options_.output_init));
    if (options_.bias) biases_.emplace_back(name + ".bias", Tensor(Shape{options_.output_dim}, 0.0));
}

std::string BnnRegressor::kind() const {
    return options_.hidden_family == LayerFamily::whvi ? "bnn-whvi" : "bnn-meanfield";
}

ad::Variable BnnRegressor::forward(ad::Tape& tape, const Tensor& x, NoiseStream& noise,
                                   Sampling mode) {
    if (x.rank() != 2 || x.cols() != options_.input_dim) {
        throw ShapeError("BNN input " + whvi::to_string(x.shape()) + ", expected [b x " +
                         std::to_string(options_.input_dim) + "]");
    }
    ad::Variable h = tape.constant(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i]->forward(tape, h, noise, mode);
        if (options_.bias) h = ad::add(h, tape.leaf(biases_[i]));
        if (i + 1 < layers_.size()) h = ad::relu(h);
    }
    return ad::add(ad::mul(h, y_std_), y_mean_);
}

ad::Variable BnnRegressor::noise_term(ad::Tape& tape) {
    Tensor shift(Shape{options_.output_dim});
    for (std::size_t t = 0; t < shift.size(); ++t) shift[t] = 2.0 * std::log(y_std_[t]);
    if (options_.learn_noise) return ad::add(tape.leaf(noise_log_var_), shift);
    Tensor fixed = noise_log_var_.value;
    for (std::size_t t = 0; t < shift.size(); ++t) fixed[t] += shift[t];
    return tape.constant(fixed);
}

ad::Variable BnnRegressor::log_likelihood(ad::Tape& tape, const Tensor& x, const Tensor& y,
                                          NoiseStream& noise, Sampling mode) {
    ad::Variable f = forward(tape, x, noise, mode);
    return ad::neg(ad::gaussian_nll(y.reshaped(f.shape()), f, noise_term(tape)));
}

ad::Variable BnnRegressor::kl(ad::Tape& tape) {
    ad::Variable total = layers_.front()->kl(tape);
    for (std::size_t i = 1; i < layers_.size(); ++i) total = ad::add(total, layers_[i]->kl(tape));
    return total;
}

Tensor BnnRegressor::predict_samples(const Tensor& x, std::size_t n_mc, NoiseStream& noise) {
    if (n_mc == 0) throw Error("predict_samples needs n_mc >= 1");
    const std::size_t b = x.rows();
    const std::size_t t = options_.output_dim;
    Tensor out(Shape{n_mc, b, t});
    for (std::size_t s = 0; s < n_mc; ++s) {
        ad::Tape tape;
        const ad::Variable f = forward(tape, x, noise, Sampling::local_reparam);
        std::copy(f.value().data().begin(), f.value().data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(s * b * t));
    }
    return out;
}

Tensor BnnRegressor::observation_log_variance() const {
    Tensor out = noise_log_var_.value;
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += 2.0 * std::log(y_std_[t]);
    return out;
}

std::vector<ParameterGroup> BnnRegressor::parameter_groups() {
    std::vector<ParameterGroup> groups;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        groups.push_back({"layer" + std::to_string(i) + " (" + layers_[i]->kind() + ")",
                          layers_[i]->parameters()});
        if (options_.bias) groups.push_back({biases_[i].name, {&biases_[i]}});
    }
    if (options_.learn_noise) groups.push_back({"noise", {&noise_log_var_}});
    return groups;
}

std::vector<NamedBuffer> BnnRegressor::buffers() {
    std::vector<NamedBuffer> out{{"y_mean", &y_mean_}, {"y_std", &y_std_}};
    if (!options_.learn_noise) out.push_back({noise_log_var_.name, &noise_log_var_.value});
    return out;
}

}  // namespace whvi::nn
