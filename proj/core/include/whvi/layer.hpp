#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "whvi/autodiff.hpp"
#include "whvi/noise.hpp"

namespace whvi::nn {

enum class Sampling {
    // One weight sample shared by every row of the minibatch.
    reparam,
    // Independent noise per row, sampled in pre-activation space.
    local_reparam,
    // Noise fixed at zero: the network evaluated at the posterior mean.
    mean,
};

// Variational layer mapping [b x in] to [b x out]. Whvi and mean-field
// layers implement the same surface so model code is agnostic to which
// posterior family sits underneath.
class BayesianLayer {
public:
    virtual ~BayesianLayer() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t in_features() const = 0;
    virtual std::size_t out_features() const = 0;

    virtual ad::Variable forward(ad::Tape& tape, const ad::Variable& h, NoiseStream& noise,
                                 Sampling mode) = 0;
    // KL(q || p) of this layer's weights. Data independent.
    virtual ad::Variable kl(ad::Tape& tape) = 0;

    virtual std::vector<ad::Parameter*> parameters() = 0;

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto* p : parameters()) n += p->size();
        return n;
    }
};

}  // namespace whvi::nn
