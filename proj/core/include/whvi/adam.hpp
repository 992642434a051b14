#pragma once

#include <cstddef>
#include <vector>

#include "whvi/autodiff.hpp"

namespace whvi::optim {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with the usual bias-corrected moment estimates. Reads Parameter::grad
// and updates Parameter::value in place.
class Adam {
public:
    Adam(std::vector<ad::Parameter*> params, AdamOptions options = {});

    void step();
    void zero_grad();

    std::size_t step_count() const noexcept { return t_; }
    const AdamOptions& options() const noexcept { return options_; }
    const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
    const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<ad::Parameter*> params_;
    AdamOptions options_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t t_ = 0;
};

}  // namespace whvi::optim
