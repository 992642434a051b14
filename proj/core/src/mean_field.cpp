#include "whvi/mean_field.hpp"

#include <cmath>

#include "whvi/error.hpp"

namespace whvi::nn {

namespace {

// Keeps d sqrt(v)/dv finite where an input row is exactly zero.
constexpr double kVarianceFloor = 1e-16;

}  // namespace

MeanFieldLayer::MeanFieldLayer(std::size_t in, std::size_t out, NoiseStream& init_stream,
                               const std::string& prefix, const MeanFieldInit& init)
    : mu(prefix + ".mu", Tensor(Shape{out, in})),
      log_sigma(prefix + ".log_sigma", Tensor(Shape{out, in}, std::log(init.sigma))),
      in_(in),
      out_(out) {
    if (in == 0 || out == 0) throw DimensionError("MeanFieldLayer needs positive in/out features");
    const double std = std::sqrt(init.mu_variance / static_cast<double>(in));
    if (std > 0.0) {
        mu.value = init_stream.standard_normal(Shape{out, in});
        for (double& v : mu.value.data()) v *= std;
    }
}

ad::Variable MeanFieldLayer::forward(ad::Tape& tape, const ad::Variable& h, NoiseStream& noise,
                                     Sampling mode) {
    switch (mode) {
        case Sampling::reparam:
            return mf_forward_reparam(tape, h, noise.standard_normal(Shape{out_, in_}));
        case Sampling::local_reparam: {
            if (h.shape().size() != 2) {
                throw ShapeError("mean-field input must be [b x in], got " +
                                 whvi::to_string(h.shape()));
            }
            return mf_forward_local_reparam(tape, h, noise.standard_normal(Shape{h.shape()[0], out_}));
        }
        case Sampling::mean:
            return ad::matmul(h, ad::transpose(tape.leaf(mu)));
    }
    throw Error("unknown sampling mode");
}

ad::Variable MeanFieldLayer::mf_forward_local_reparam(ad::Tape& tape, const ad::Variable& h,
                                                      const Tensor& eps) {
    if (h.shape().size() != 2 || h.shape()[1] != in_) {
        throw ShapeError("mean-field input " + whvi::to_string(h.shape()) + ", expected [b x " +
                         std::to_string(in_) + "]");
    }
    if (eps.shape() != Shape{h.shape()[0], out_}) {
        throw ShapeError("mean-field noise " + whvi::to_string(eps.shape()) + ", expected [" +
                         std::to_string(h.shape()[0]) + " x " + std::to_string(out_) + "]");
    }
    ad::Variable m = ad::matmul(h, ad::transpose(tape.leaf(mu)));
    ad::Variable var_w = ad::exp(ad::scale(tape.leaf(log_sigma), 2.0));
    ad::Variable v = ad::matmul(ad::square(h), ad::transpose(var_w));
    ad::Variable sd = ad::sqrt(ad::add_scalar(v, kVarianceFloor));
    return ad::add(m, ad::mul(sd, tape.constant(eps)));
}

ad::Variable MeanFieldLayer::mf_forward_reparam(ad::Tape& tape, const ad::Variable& h,
                                                const Tensor& eps) {
    if (eps.shape() != mu.value.shape()) {
        throw ShapeError("mean-field weight noise " + whvi::to_string(eps.shape()) +
                         ", expected " + whvi::to_string(mu.value.shape()));
    }
    ad::Variable w =
        ad::add(tape.leaf(mu), ad::mul(ad::exp(tape.leaf(log_sigma)), tape.constant(eps)));
    return ad::matmul(h, ad::transpose(w));
}

ad::Variable MeanFieldLayer::mf_kl_to_prior(ad::Tape& tape) {
    ad::Variable ls = tape.leaf(log_sigma);
    ad::Variable m = tape.leaf(mu);
    // 0.5 * sum(sigma^2 + mu^2 - 1 - 2 log sigma)
    ad::Variable inner =
        ad::sub(ad::add(ad::exp(ad::scale(ls, 2.0)), ad::square(m)), ad::scale(ls, 2.0));
    return ad::scale(ad::add_scalar(ad::sum(inner), -static_cast<double>(mu.size())), 0.5);
}

std::size_t match_parameter_budget(std::size_t budget,
                                   const std::function<std::size_t(std::size_t)>& count,
                                   std::size_t max_size) {
    std::size_t best = 1;
    std::size_t best_gap = static_cast<std::size_t>(-1);
    for (std::size_t s = 1; s <= max_size; ++s) {
        const std::size_t c = count(s);
        const std::size_t gap = c > budget ? c - budget : budget - c;
        if (gap < best_gap) {
            best = s;
            best_gap = gap;
        }
        if (c > budget) break;
    }
    return best;
}

}  // namespace whvi::nn
