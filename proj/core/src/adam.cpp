#include "whvi/adam.hpp"

#include <cmath>

#include "whvi/error.hpp"

namespace whvi::optim {

Adam::Adam(std::vector<ad::Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate > 0.0)) throw Error("Adam learning rate must be positive");
    if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
        !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
        throw Error("Adam betas must lie in [0, 1)");
    }
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto* p : params_) {
        m_.emplace_back(p->value.shape(), 0.0);
        v_.emplace_back(p->value.shape(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double t = static_cast<double>(t_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        ad::Parameter& p = *params_[i];
        if (p.grad.shape() != p.value.shape()) {
            throw ShapeError("gradient of " + p.name + " has shape " + whvi::to_string(p.grad.shape()));
        }
        auto m = m_[i].data();
        auto v = v_[i].data();
        auto x = p.value.data();
        const auto g = std::as_const(p.grad).data();
        for (std::size_t k = 0; k < x.size(); ++k) {
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            x[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
        }
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

}  // namespace whvi::optim
