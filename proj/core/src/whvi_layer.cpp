#include "whvi/whvi_layer.hpp"

#include <cmath>

#include "whvi/error.hpp"

namespace whvi::nn {

std::string to_string(CovarianceMode mode) {
    return mode == CovarianceMode::diagonal ? "diagonal" : "full";
}

CovarianceMode parse_covariance_mode(const std::string& s) {
    if (s == "diagonal") return CovarianceMode::diagonal;
    if (s == "full") return CovarianceMode::full;
    throw ConfigError("covariance", "covariance mode must be 'diagonal' or 'full', got '" + s + "'");
}

// ---- GaussianVariational ---------------------------------------------------

GaussianVariational::GaussianVariational(const std::string& prefix, std::size_t d,
                                         CovarianceMode mode, double init_sigma)
    : mu(prefix + ".mu", Tensor(Shape{d}, 0.0)),
      log_sigma(prefix + ".log_sigma", Tensor(Shape{d}, std::log(init_sigma))),
      lower(prefix + ".lower",
            Tensor(Shape{mode == CovarianceMode::full ? d * (d - 1) / 2 : 0}, 0.0)),
      d_(d),
      mode_(mode) {}

std::vector<ad::Parameter*> GaussianVariational::parameters() {
    if (mode_ == CovarianceMode::full) return {&mu, &log_sigma, &lower};
    return {&mu, &log_sigma};
}

ad::Variable GaussianVariational::scale_noise(ad::Tape& tape, const Tensor& eps) {
    if (eps.rank() == 0 || eps.shape().back() != d_) {
        throw ShapeError("noise " + whvi::to_string(eps.shape()) + " does not end in D=" +
                         std::to_string(d_));
    }
    ad::Variable e = tape.constant(eps);
    ad::Variable sigma = ad::exp(tape.leaf(log_sigma));
    if (mode_ == CovarianceMode::diagonal) return ad::mul(e, sigma);

    ad::Variable l = ad::lower_triangular(tape.leaf(lower), sigma);
    // Each row r becomes (L eps_r)^T = eps_r^T L^T.
    ad::Variable rows = ad::reshape(e, Shape{eps.size() / d_, d_});
    return ad::reshape(ad::matmul(rows, ad::transpose(l)), eps.shape());
}

ad::Variable GaussianVariational::sample(ad::Tape& tape, const Tensor& eps) {
    return ad::add(scale_noise(tape, eps), tape.leaf(mu));
}

Tensor GaussianVariational::sqrt_covariance() const {
    Tensor l(Shape{d_, d_}, 0.0);
    for (std::size_t i = 0; i < d_; ++i) {
        l.at(i, i) = std::exp(log_sigma.value[i]);
        if (mode_ == CovarianceMode::full)
            for (std::size_t j = 0; j < i; ++j) l.at(i, j) = lower.value[i * (i - 1) / 2 + j];
    }
    return l;
}

Tensor GaussianVariational::covariance() const {
    Tensor l = sqrt_covariance();
    return whvi::matmul(l, l.transposed());
}

ad::Variable GaussianVariational::kl_to_standard_normal(ad::Tape& tape) {
    ad::Variable ls = tape.leaf(log_sigma);
    ad::Variable m = tape.leaf(mu);
    ad::Variable trace;
    if (mode_ == CovarianceMode::diagonal) {
        trace = ad::sum(ad::exp(ad::scale(ls, 2.0)));
    } else {
        ad::Variable l = ad::lower_triangular(tape.leaf(lower), ad::exp(ls));
        trace = ad::sum(ad::square(l));
    }
    // log det Sigma = 2 sum log diag
    ad::Variable inner = ad::sub(ad::add(trace, ad::sum(ad::square(m))), ad::scale(ad::sum(ls), 2.0));
    return ad::scale(ad::add_scalar(inner, -static_cast<double>(d_)), 0.5);
}

// ---- WhviLayer -------------------------------------------------------------

namespace {

Tensor gaussian_vector(NoiseStream& stream, std::size_t d, double std) {
    Tensor t = stream.standard_normal(Shape{d});
    for (double& v : t.data()) v *= std;
    return t;
}

// Rows transform as A -> A H, so starting from diag(s1): diag(s1) H, then
// scale columns by g, then H again, then columns by s2.
ad::Variable dense_weight(ad::Tape& tape, const ad::Variable& s1, const ad::Variable& g,
                          const ad::Variable& s2) {
    const std::size_t d = s1.size();
    ad::Variable w = ad::mul(tape.constant(Tensor::identity(d)), s1);
    w = fwht_batched(w, Normalization::orthonormal);
    w = ad::mul(w, g);
    w = fwht_batched(w, Normalization::orthonormal);
    return ad::mul(w, s2);
}

}  // namespace

WhviLayer::WhviLayer(HadamardDim d, CovarianceMode mode, NoiseStream& init_stream,
                     const std::string& prefix, const WhviInit& init)
    : s1(prefix + ".s1", gaussian_vector(init_stream, d.value(), std::sqrt(init.s_variance))),
      s2(prefix + ".s2", gaussian_vector(init_stream, d.value(), std::sqrt(init.s_variance))),
      q(prefix + ".q", d.value(), mode, init.sigma),
      d_(d) {
    if (init.mu_std > 0.0) q.mu.value = gaussian_vector(init_stream, d.value(), init.mu_std);
}

std::size_t WhviLayer::parameter_count() const {
    const std::size_t d = d_.value();
    if (q.mode() == CovarianceMode::diagonal) return 4 * d;
    return 3 * d + d * (d + 1) / 2;
}

std::vector<ad::Parameter*> WhviLayer::parameters() {
    std::vector<ad::Parameter*> out{&s1, &s2};
    for (auto* p : q.parameters()) out.push_back(p);
    return out;
}

ad::Variable WhviLayer::sample_g(ad::Tape& tape, const Tensor& eps) {
    if (eps.shape() != Shape{size()}) {
        throw ShapeError("sample_g: eps " + whvi::to_string(eps.shape()) + ", expected [" +
                         std::to_string(size()) + "]");
    }
    return q.sample(tape, eps);
}

ad::Variable WhviLayer::materialize_w(ad::Tape& tape, const ad::Variable& g) {
    const std::size_t d = size();
    if (g.shape() != Shape{d}) {
        throw ShapeError("materialize_w: g " + whvi::to_string(g.shape()) + ", expected [" +
                         std::to_string(d) + "]");
    }
    return dense_weight(tape, tape.leaf(s1), g, tape.leaf(s2));
}

ad::Variable WhviLayer::apply(ad::Tape& tape, const ad::Variable& h, const ad::Variable& u) {
    if (h.shape().empty() || h.shape().back() != size()) {
        throw ShapeError("whvi apply: input " + whvi::to_string(h.shape()) + " needs last dim " +
                         std::to_string(size()));
    }
    ad::Variable t = ad::mul(h, tape.leaf(s2));
    t = fwht_batched(t, Normalization::orthonormal);
    t = ad::mul(t, u);
    t = fwht_batched(t, Normalization::orthonormal);
    return ad::mul(t, tape.leaf(s1));
}

ad::Variable WhviLayer::forward_reparam(ad::Tape& tape, const ad::Variable& h, const Tensor& eps) {
    return apply(tape, h, sample_g(tape, eps));
}

ad::Variable WhviLayer::forward_local_reparam(ad::Tape& tape, const ad::Variable& h,
                                              const Tensor& eps) {
    if (eps.shape() != h.shape()) {
        throw ShapeError("forward_local_reparam: eps " + whvi::to_string(eps.shape()) +
                         " must match input " + whvi::to_string(h.shape()));
    }
    // W(mu) h + W(Sigma^{1/2} eps_r) h = W(mu + Sigma^{1/2} eps_r) h by linearity.
    return apply(tape, h, q.sample(tape, eps));
}

ad::Variable WhviLayer::kl_to_prior(ad::Tape& tape) { return q.kl_to_standard_normal(tape); }

WhviLayer::OutputMoments WhviLayer::output_moments(const Tensor& h) const {
    const std::size_t d = size();
    if (h.size() != d) throw ShapeError("output_moments: h must have D entries");
    Tensor u(Shape{d});
    for (std::size_t i = 0; i < d; ++i) u[i] = s2.value[i] * h[i];
    fwht_inplace(u.data(), Normalization::orthonormal);

    Tensor m(Shape{d});
    for (std::size_t i = 0; i < d; ++i) m[i] = q.mu.value[i] * u[i];
    fwht_inplace(m.data(), Normalization::orthonormal);
    for (std::size_t i = 0; i < d; ++i) m[i] *= s1.value[i];

    // Column k of A is S1 H (u * Sigma^{1/2}[:, k]).
    const Tensor root = q.sqrt_covariance();
    Tensor a(Shape{d, d});
    Tensor col(Shape{d});
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < d; ++i) col[i] = u[i] * root.at(i, k);
        fwht_inplace(col.data(), Normalization::orthonormal);
        for (std::size_t i = 0; i < d; ++i) a.at(i, k) = s1.value[i] * col[i];
    }
    return {m, a};
}

Tensor WhviLayer::vect_map() const {
    const std::size_t d = size();
    if (d > 16) {
        throw DimensionError("vect(W) covariance is limited to D <= 16, got D=" +
                             std::to_string(d));
    }
    // Column k of M is vect(W(e_k)).
    Tensor m(Shape{d * d, d}, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        ad::Tape tape;
        Tensor e(Shape{d}, 0.0);
        e[k] = 1.0;
        const ad::Variable w = dense_weight(tape, tape.constant(s1.value), tape.constant(e),
                                            tape.constant(s2.value));
        const Tensor& wv = w.value();
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) m.at(i + j * d, k) = wv.at(i, j);
    }
    return m;
}

Tensor WhviLayer::cov_vect_w() const {
    const Tensor m = vect_map();
    return whvi::matmul(whvi::matmul(m, q.covariance()), m.transposed());
}

// ---- WhviLinear ------------------------------------------------------------

WhviLinear::WhviLinear(std::size_t in, std::size_t out, CovarianceMode mode,
                       NoiseStream& init_stream, const std::string& prefix, const WhviInit& init,
                       std::optional<std::size_t> block_dim)
    : in_(in), out_(out) {
    if (in == 0 || out == 0) throw DimensionError("WhviLinear needs positive in/out features");
    const HadamardDim d =
        block_dim ? HadamardDim(*block_dim) : HadamardDim::at_least(std::max(in, out));
    if (in > d.value()) {
        throw DimensionError("WhviLinear: input width " + std::to_string(in) +
                             " exceeds block dimension " + std::to_string(d.value()));
    }
    const std::size_t n_blocks = (out + d.value() - 1) / d.value();
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::string name = n_blocks == 1 ? prefix : prefix + ".block" + std::to_string(b);
        blocks_.push_back(std::make_unique<WhviLayer>(d, mode, init_stream, name, init));
    }
}

ad::Variable WhviLinear::forward(ad::Tape& tape, const ad::Variable& h, NoiseStream& noise,
                                 Sampling mode) {
    if (h.shape().size() != 2 || h.shape()[1] != in_) {
        throw ShapeError("WhviLinear: input " + whvi::to_string(h.shape()) + ", expected [b x " +
                         std::to_string(in_) + "]");
    }
    const std::size_t b = h.shape()[0];
    const std::size_t d = block_dim();
    ad::Variable padded = ad::pad_last(h, d);
    std::vector<ad::Variable> outs;
    for (auto& block : blocks_) {
        switch (mode) {
            case Sampling::reparam:
                outs.push_back(block->forward_reparam(tape, padded, noise.standard_normal(Shape{d})));
                break;
            case Sampling::local_reparam:
                outs.push_back(
                    block->forward_local_reparam(tape, padded, noise.standard_normal(Shape{b, d})));
                break;
            case Sampling::mean:
                outs.push_back(block->apply(tape, padded, tape.leaf(block->q.mu)));
                break;
        }
    }
    return ad::slice_last(ad::concat_last(outs), 0, out_);
}

ad::Variable WhviLinear::kl(ad::Tape& tape) {
    ad::Variable total = blocks_.front()->kl_to_prior(tape);
    for (std::size_t i = 1; i < blocks_.size(); ++i)
        total = ad::add(total, blocks_[i]->kl_to_prior(tape));
    return total;
}

std::vector<ad::Parameter*> WhviLinear::parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& block : blocks_)
        for (auto* p : block->parameters()) out.push_back(p);
    return out;
}

}  // namespace whvi::nn
