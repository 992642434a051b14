#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "whvi/tensor.hpp"

namespace whvi {

// Seedable source of standard-normal noise.
//
// Every stochastic operation takes a NoiseStream explicitly; there is no
// hidden global generator. A stream can be frozen: draws made while
// recording are kept, and after replay() the same tensors are handed out
// again in the same order. Gradient checks use this to evaluate a stochastic
// objective at perturbed parameters under identical noise.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed = 0) : engine_(seed) {}

    Tensor standard_normal(const Shape& shape);
    double uniform(double lo, double hi);
    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() noexcept { return engine_; }

    // Start keeping every tensor drawn by standard_normal().
    void record();
    // Rewind to the first recorded draw; subsequent draws replay the record.
    void replay();
    // Forget the record and go back to fresh draws.
    void release();

    bool replaying() const noexcept { return replaying_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    bool recording_ = false;
    bool replaying_ = false;
    std::vector<Tensor> tape_;
    std::size_t cursor_ = 0;
};

// Derive an independent child seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace whvi
