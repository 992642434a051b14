#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "whvi/data.hpp"

namespace whvi::data {

// Closed-form test function from the computer-experiments literature,
// evaluated on an axis-aligned box.
struct SyntheticFunction {
    std::string name;
    std::vector<double> lower;
    std::vector<double> upper;
    std::function<double(std::span<const double>)> evaluate;
    double noise_std = 0.0;

    std::size_t dim() const noexcept { return lower.size(); }
};

// hartmann6, otl, piston, borehole, robot_arm.
const std::vector<SyntheticFunction>& synthetic_functions();
const SyntheticFunction& find_synthetic(const std::string& name);

// n points of a digitally shifted Sobol sequence mapped into the domain box,
// plus N(0, noise_std^2) on the response. Bit-identical for equal arguments.
Dataset synth_generate(const SyntheticFunction& fn, std::size_t n, std::uint64_t seed);

}  // namespace whvi::data
