#pragma once

#include <cstddef>
#include <span>

#include "whvi/autodiff.hpp"
#include "whvi/tensor.hpp"

namespace whvi {

// Size of a Walsh-Hadamard matrix: always a power of two.
class HadamardDim {
public:
    // Throws DimensionError unless d = 2^k, k >= 0.
    explicit HadamardDim(std::size_t d);

    // Smallest power of two >= n (n >= 1).
    static HadamardDim at_least(std::size_t n);

    std::size_t value() const noexcept { return d_; }
    std::size_t log2() const noexcept;

    friend bool operator==(HadamardDim a, HadamardDim b) { return a.d_ == b.d_; }

private:
    std::size_t d_;
};

bool is_power_of_two(std::size_t n) noexcept;

enum class Normalization { none, orthonormal };

// v <- H v by the iterative butterfly: O(d log d) time, O(1) extra space.
// With Normalization::orthonormal the result is additionally scaled by
// d^{-1/2}, making the transform an involution.
void fwht_inplace(std::span<double> v, Normalization norm = Normalization::none);

// Dense +-1 Hadamard matrix built by the block recursion
// H_{2d} = [[H_d, H_d], [H_d, -H_d]]. Test oracle; O(d^2) memory.
Tensor naive_hadamard(HadamardDim d);

// Transform every length-d row of `m` (any rank >= 1; the last axis is
// transformed). Differentiable: since H is symmetric the adjoint is the
// same transform applied to the upstream gradient.
ad::Variable fwht_batched(const ad::Variable& m, Normalization norm);

// Non-differentiable batched form on a plain tensor.
Tensor fwht_rows(Tensor m, Normalization norm);

// Wall-clock seconds per fwht_inplace call at length d: the transform is
// repeated until at least `min_seconds` have elapsed and the best of
// `rounds` such measurements is returned.
double time_fwht(HadamardDim d, double min_seconds = 0.05, int rounds = 5);

}  // namespace whvi
