#include "whvi/fwht.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "whvi/error.hpp"

namespace whvi {

bool is_power_of_two(std::size_t n) noexcept { return n > 0 && (n & (n - 1)) == 0; }

HadamardDim::HadamardDim(std::size_t d) : d_(d) {
    if (!is_power_of_two(d)) {
        throw DimensionError("Hadamard dimension must be a power of two, got " +
                             std::to_string(d));
    }
}

HadamardDim HadamardDim::at_least(std::size_t n) {
    if (n == 0) throw DimensionError("Hadamard dimension must be positive");
    return HadamardDim(std::bit_ceil(n));
}

std::size_t HadamardDim::log2() const noexcept {
    return static_cast<std::size_t>(std::countr_zero(d_));
}

void fwht_inplace(std::span<double> v, Normalization norm) {
    const std::size_t d = v.size();
    if (!is_power_of_two(d)) {
        throw DimensionError("fwht: length must be a power of two, got " + std::to_string(d));
    }
    for (std::size_t h = 1; h < d; h *= 2) {
        for (std::size_t i = 0; i < d; i += 2 * h) {
            for (std::size_t j = i; j < i + h; ++j) {
                const double x = v[j];
                const double y = v[j + h];
                v[j] = x + y;
                v[j + h] = x - y;
            }
        }
    }
    if (norm == Normalization::orthonormal && d > 1) {
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& x : v) x *= s;
    }
}

Tensor naive_hadamard(HadamardDim dim) {
    const std::size_t d = dim.value();
    Tensor h(Shape{d, d}, 0.0);
    h.at(0, 0) = 1.0;
    for (std::size_t n = 1; n < d; n *= 2) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double v = h.at(i, j);
                h.at(i, j + n) = v;
                h.at(i + n, j) = v;
                h.at(i + n, j + n) = -v;
            }
        }
    }
    return h;
}

Tensor fwht_rows(Tensor m, Normalization norm) {
    if (m.rank() == 0) throw ShapeError("fwht_rows needs rank >= 1");
    const std::size_t d = m.shape().back();
    if (!is_power_of_two(d)) {
        throw DimensionError("fwht: last axis must be a power of two, got " +
                             to_string(m.shape()));
    }
    auto data = m.data();
    for (std::size_t off = 0; off < data.size(); off += d) fwht_inplace(data.subspan(off, d), norm);
    return m;
}

ad::Variable fwht_batched(const ad::Variable& m, Normalization norm) {
    Tensor out = fwht_rows(m.value(), norm);
    const std::size_t im = m.id();
    return m.tape().record("fwht", std::move(out), {m},
                           [im, norm](ad::Tape& t, std::size_t self) {
                               t.accumulate(im, fwht_rows(t.grad(self), norm));
                           });
}

double time_fwht(HadamardDim d, double min_seconds, int rounds) {
    using clock = std::chrono::steady_clock;
    std::vector<double> v(d.value());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 7) - 3.0;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(rounds, 1); ++r) {
        std::size_t reps = 0;
        const auto start = clock::now();
        double elapsed = 0.0;
        do {
            // Orthonormal keeps the values bounded across repetitions.
            fwht_inplace(v, Normalization::orthonormal);
            ++reps;
            elapsed = std::chrono::duration<double>(clock::now() - start).count();
        } while (elapsed < min_seconds);
        best = std::min(best, elapsed / static_cast<double>(reps));
    }
    return best;
}

}  // namespace whvi
