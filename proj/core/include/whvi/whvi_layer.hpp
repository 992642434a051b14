#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "whvi/autodiff.hpp"
#include "whvi/fwht.hpp"
#include "whvi/layer.hpp"
#include "whvi/noise.hpp"

namespace whvi::nn {

enum class CovarianceMode { diagonal, full };

std::string to_string(CovarianceMode mode);
CovarianceMode parse_covariance_mode(const std::string& s);

// q(g) = N(mu, Sigma) over the diagonal g of the WHVI factorization.
//
// Diagonal mode stores log sigma; Sigma = diag(exp(2 log sigma)).
// Full mode stores a Cholesky factor L (strict lower part packed row-major,
// diagonal through its log) and Sigma = L L^T. Both are positive definite by
// construction.
class GaussianVariational {
public:
    GaussianVariational(const std::string& prefix, std::size_t d, CovarianceMode mode,
                        double init_sigma);

    CovarianceMode mode() const noexcept { return mode_; }
    std::size_t dim() const noexcept { return d_; }

    // Rows of Sigma^{1/2} eps: eps is [..., D], result has the same shape.
    ad::Variable scale_noise(ad::Tape& tape, const Tensor& eps);
    // g = mu + Sigma^{1/2} eps.
    ad::Variable sample(ad::Tape& tape, const Tensor& eps);
    // Sigma^{1/2} as a dense D x D factor (diag(sigma) or L).
    Tensor sqrt_covariance() const;
    Tensor covariance() const;

    ad::Variable kl_to_standard_normal(ad::Tape& tape);

    std::vector<ad::Parameter*> parameters();

    ad::Parameter mu;
    ad::Parameter log_sigma;  // log of sigma (diagonal) or of diag(L) (full)
    ad::Parameter lower;      // strict lower part of L; empty in diagonal mode

private:
    std::size_t d_;
    CovarianceMode mode_;
};

// With orthonormal H, E||W||_F^2 = s_variance^2 * D * (mu_std^2 + sigma^2), so
// the defaults give entries of variance about 1/D, like a fan-in init.
struct WhviInit {
    // s1, s2 ~ N(0, s_variance)
    double s_variance = 1.0;
    // mu ~ N(0, mu_std^2)
    double mu_std = 1.0;
    double sigma = 0.1;
};

// Posterior over one D x D weight matrix, W = S1 H diag(g) H S2 with
// g ~ q(g) and H the orthonormal Walsh-Hadamard matrix. Holds 4D parameters
// in diagonal mode and 3D + D(D+1)/2 in full mode.
class WhviLayer {
public:
    WhviLayer(HadamardDim d, CovarianceMode mode, NoiseStream& init_stream,
              const std::string& prefix = "whvi", const WhviInit& init = {});

    HadamardDim dim() const noexcept { return d_; }
    std::size_t size() const noexcept { return d_.value(); }
    CovarianceMode mode() const noexcept { return q.mode(); }

    std::size_t parameter_count() const;
    std::vector<ad::Parameter*> parameters();

    ad::Variable sample_g(ad::Tape& tape, const Tensor& eps);

    // Dense S1 H diag(g) H S2. O(D^2 log D); for tests and inspection.
    ad::Variable materialize_w(ad::Tape& tape, const ad::Variable& g);

    // Rows of W(u) h for the linear map W(u) = S1 H diag(u) H S2, in
    // O(b D log D). `u` is [D] (shared) or [b x D] (one per row).
    ad::Variable apply(ad::Tape& tape, const ad::Variable& h, const ad::Variable& u);

    // One weight sample for the whole minibatch; eps is [D].
    ad::Variable forward_reparam(ad::Tape& tape, const ad::Variable& h, const Tensor& eps);
    // Per-row noise; eps is [b x D]. Each row is W(mu) h + W(Sigma^{1/2} eps_row) h.
    ad::Variable forward_local_reparam(ad::Tape& tape, const ad::Variable& h, const Tensor& eps);

    // KL(N(mu, Sigma) || N(0, I)) in g-space.
    ad::Variable kl_to_prior(ad::Tape& tape);

    // Mean m and factor A of W h ~ N(m, A A^T) for a single input vector.
    struct OutputMoments {
        Tensor mean;    // [D]
        Tensor factor;  // [D x D]
    };
    OutputMoments output_moments(const Tensor& h) const;

    // Covariance of vect(W) (column stacking): M Sigma M^T with vect(W) = M g.
    // D <= 16 only.
    Tensor cov_vect_w() const;
    // The D^2 x D map M itself.
    Tensor vect_map() const;

    ad::Parameter s1;
    ad::Parameter s2;
    GaussianVariational q;

private:
    HadamardDim d_;
};

// Rectangular WHVI layer: in -> out features through one or more square
// WhviLayer blocks of dimension d. Inputs are zero-padded to d, each block
// produces d outputs, block outputs are concatenated and truncated to `out`.
class WhviLinear final : public BayesianLayer {
public:
    // d defaults to the next power of two >= max(in, out).
    WhviLinear(std::size_t in, std::size_t out, CovarianceMode mode, NoiseStream& init_stream,
               const std::string& prefix, const WhviInit& init = {},
               std::optional<std::size_t> block_dim = std::nullopt);

    std::string kind() const override { return "whvi"; }
    std::size_t in_features() const override { return in_; }
    std::size_t out_features() const override { return out_; }

    ad::Variable forward(ad::Tape& tape, const ad::Variable& h, NoiseStream& noise,
                         Sampling mode) override;
    ad::Variable kl(ad::Tape& tape) override;
    std::vector<ad::Parameter*> parameters() override;

    std::size_t block_dim() const noexcept { return blocks_.front()->size(); }
    std::size_t block_count() const noexcept { return blocks_.size(); }
    WhviLayer& block(std::size_t i) { return *blocks_.at(i); }

private:
    std::size_t in_;
    std::size_t out_;
    std::vector<std::unique_ptr<WhviLayer>> blocks_;
};

}  // namespace whvi::nn
