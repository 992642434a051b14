#include "whvi/noise.hpp"

#include "whvi/error.hpp"

namespace whvi {

Tensor NoiseStream::standard_normal(const Shape& shape) {
    if (replaying_) {
        if (cursor_ >= tape_.size()) {
            throw Error("frozen noise exhausted: more draws than were recorded");
        }
        const Tensor& t = tape_[cursor_++];
        if (t.shape() != shape) {
            throw ShapeError("frozen noise replay expected " + to_string(t.shape()) +
                             ", requested " + to_string(shape));
        }
        return t;
    }
    Tensor t(shape);
    for (double& v : t.data()) v = normal_(engine_);
    if (recording_) tape_.push_back(t);
    return t;
}

double NoiseStream::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
}

void NoiseStream::record() {
    tape_.clear();
    cursor_ = 0;
    recording_ = true;
    replaying_ = false;
}

void NoiseStream::replay() {
    recording_ = false;
    replaying_ = true;
    cursor_ = 0;
}

void NoiseStream::release() {
    recording_ = false;
    replaying_ = false;
    tape_.clear();
    cursor_ = 0;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace whvi
