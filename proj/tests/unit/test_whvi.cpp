#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "whvi/error.hpp"
#include "whvi/mean_field.hpp"
#include "whvi/whvi_layer.hpp"

using namespace whvi;
using nn::CovarianceMode;
using nn::WhviLayer;

namespace {

WhviLayer make_layer(std::size_t d, CovarianceMode mode, std::uint64_t seed) {
    NoiseStream init(seed);
    return WhviLayer(HadamardDim(d), mode, init);
}

// Random mu, sigma and (in full mode) off-diagonal Cholesky entries.
void randomize_posterior(WhviLayer& layer, std::uint64_t seed) {
    NoiseStream ns(seed);
    layer.q.mu.value = ns.standard_normal({layer.size()});
    for (double& v : layer.q.log_sigma.value.data()) v = ns.uniform(-1.0, 0.0);
    for (double& v : layer.q.lower.value.data()) v = ns.uniform(-0.4, 0.4);
}

double largest_eigenvalue(const Tensor& sym) {
    const std::size_t n = sym.rows();
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = sym.at(i, j);
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

Tensor row_matrix(const Tensor& v, std::size_t rows) {
    Tensor out(Shape{rows, v.size()});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < v.size(); ++i) out[r * v.size() + i] = v[i];
    return out;
}

std::vector<std::vector<double>> split_rows(const Tensor& m) {
    std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m.at(r, c);
    return out;
}

// A = S1 H diag(H S2 h) Sigma^{1/2} from dense products.
Tensor dense_output_factor(WhviLayer& layer, const Tensor& h) {
    const std::size_t d = layer.size();
    const Tensor hd = oracle::sylvester_hadamard(d, true);
    const Tensor u = oracle::matvec(matmul(hd, oracle::diag(layer.s2.value)), h);
    return matmul(matmul(matmul(oracle::diag(layer.s1.value), hd), oracle::diag(u)),
                  layer.q.sqrt_covariance());
}

}  // namespace

TEST(GaussianVariational, SampleAtZeroNoiseIsMean) {
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(8, mode, 1);
        randomize_posterior(layer, 2);
        ad::Tape t;
        EXPECT_EQ(layer.sample_g(t, Tensor(Shape{8}, 0.0)).value(), layer.q.mu.value);
    }
}

TEST(GaussianVariational, VanishingScale) {
    WhviLayer layer = make_layer(4, CovarianceMode::diagonal, 3);
    layer.q.log_sigma.value.fill(-20.0);
    NoiseStream ns(4);
    const Tensor eps = ns.standard_normal({4});
    ad::Tape t;
    EXPECT_LT(max_abs_diff(layer.sample_g(t, eps).value(), layer.q.mu.value), 1e-8);
}

TEST(GaussianVariational, MonteCarloMean) {
    WhviLayer layer = make_layer(4, CovarianceMode::diagonal, 5);
    randomize_posterior(layer, 6);
    const std::size_t n = 100000;
    NoiseStream ns(7);
    ad::Tape t;
    const Tensor g = layer.q.sample(t, ns.standard_normal({n, 4})).value();
    for (std::size_t k = 0; k < 4; ++k) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += g[r * 4 + k];
        mean /= static_cast<double>(n);
        const double sigma = std::exp(layer.q.log_sigma.value[k]);
        EXPECT_LT(std::abs(mean - layer.q.mu.value[k]), 3.0 * sigma / std::sqrt(double(n))) << k;
    }
}

TEST(GaussianVariational, FullCovarianceIsPositiveDefinite) {
    WhviLayer layer = make_layer(8, CovarianceMode::full, 8);
    randomize_posterior(layer, 9);
    const Tensor l = layer.q.sqrt_covariance();
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_GT(l.at(i, i), 0.0);
        for (std::size_t j = i + 1; j < 8; ++j) EXPECT_EQ(l.at(i, j), 0.0);
    }
    const Tensor sigma = layer.q.covariance();
    EXPECT_LT(max_abs_diff(sigma, matmul(l, l.transposed())), 1e-14);
    EXPECT_EQ(sigma, sigma.transposed());
}

TEST(MaterializeW, TwoByTwoHandForm) {
    WhviLayer layer = make_layer(2, CovarianceMode::diagonal, 10);
    layer.s1.value.fill(1.0);
    layer.s2.value.fill(1.0);
    const double a = 0.8, b = -1.7;
    ad::Tape t;
    const Tensor w = layer.materialize_w(t, t.constant(Tensor::vector({a, b}))).value();
    const Tensor hand = Tensor::matrix({{(a + b) / 2, (a - b) / 2}, {(a - b) / 2, (a + b) / 2}});
    EXPECT_LT(max_abs_diff(w, hand), 1e-15);
    EXPECT_LT(max_abs_diff(w, oracle::dense_whvi(layer.s1.value, Tensor::vector({a, b}),
                                                 layer.s2.value)),
              1e-15);
}

TEST(MaterializeW, Annihilation) {
    WhviLayer layer = make_layer(8, CovarianceMode::diagonal, 11);
    ad::Tape t;
    EXPECT_EQ(layer.materialize_w(t, t.constant(Tensor(Shape{8}, 0.0))).value(),
              Tensor(Shape{8, 8}, 0.0));
    layer.s1.value.fill(0.0);
    NoiseStream ns(12);
    EXPECT_LT(max_abs_diff(layer.materialize_w(t, t.constant(ns.standard_normal({8}))).value(),
                           Tensor(Shape{8, 8}, 0.0)),
              1e-300);
}

TEST(MaterializeW, MatchesDenseOracle) {
    NoiseStream ns(13);
    for (std::size_t d : {2u, 4u, 8u, 16u, 64u}) {
        WhviLayer layer = make_layer(d, CovarianceMode::diagonal, d);
        const Tensor g = ns.standard_normal({d});
        ad::Tape t;
        EXPECT_LT(max_abs_diff(layer.materialize_w(t, t.constant(g)).value(),
                               oracle::dense_whvi(layer.s1.value, g, layer.s2.value)),
                  1e-12)
            << d;
    }
}

TEST(ForwardReparam, MatchesDenseProduct) {
    NoiseStream ns(14);
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        for (std::size_t d : {2u, 4u, 8u, 16u}) {
            WhviLayer layer = make_layer(d, mode, 100 + d);
            randomize_posterior(layer, 200 + d);
            const Tensor h = ns.standard_normal({5, d});
            const Tensor eps = ns.standard_normal({d});
            ad::Tape t;
            const Tensor fast = layer.forward_reparam(t, t.constant(h), eps).value();
            const Tensor g = layer.sample_g(t, eps).value();
            const Tensor dense = matmul(h, oracle::dense_whvi(layer.s1.value, g, layer.s2.value).transposed());
            EXPECT_LT(max_abs_diff(fast, dense), 1e-10) << "d=" << d;
        }
    }
}

TEST(ForwardReparam, ZeroInputAndZeroNoise) {
    WhviLayer layer = make_layer(8, CovarianceMode::diagonal, 15);
    randomize_posterior(layer, 16);
    NoiseStream ns(17);
    ad::Tape t;
    EXPECT_EQ(layer.forward_reparam(t, t.constant(Tensor(Shape{3, 8}, 0.0)), ns.standard_normal({8})).value(),
              Tensor(Shape{3, 8}, 0.0));

    const Tensor h = ns.standard_normal({3, 8});
    const Tensor mean_path = layer.apply(t, t.constant(h), t.leaf(layer.q.mu)).value();
    EXPECT_EQ(layer.forward_reparam(t, t.constant(h), Tensor(Shape{8}, 0.0)).value(), mean_path);
    EXPECT_EQ(layer.forward_local_reparam(t, t.constant(h), Tensor(Shape{3, 8}, 0.0)).value(), mean_path);
}

TEST(WhviLinearMap, Linearity) {
    WhviLayer layer = make_layer(16, CovarianceMode::diagonal, 18);
    NoiseStream ns(19);
    const Tensor h = ns.standard_normal({4, 16});
    const Tensor u = ns.standard_normal({16});
    const Tensor v = ns.standard_normal({16});
    const double alpha = 1.9, beta = -0.35;
    Tensor mix(Shape{16});
    for (std::size_t i = 0; i < 16; ++i) mix[i] = alpha * u[i] + beta * v[i];
    ad::Tape t;
    const Tensor wu = layer.apply(t, t.constant(h), t.constant(u)).value();
    const Tensor wv = layer.apply(t, t.constant(h), t.constant(v)).value();
    const Tensor wm = layer.apply(t, t.constant(h), t.constant(mix)).value();
    for (std::size_t i = 0; i < wm.size(); ++i) EXPECT_NEAR(wm[i], alpha * wu[i] + beta * wv[i], 1e-10);
}

TEST(LocalReparam, AnalyticMomentsMatchDenseFactor) {
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(8, mode, 20);
        randomize_posterior(layer, 21);
        NoiseStream ns(22);
        const Tensor h = ns.standard_normal({8});
        const auto moments = layer.output_moments(h);
        const Tensor a = dense_output_factor(layer, h);
        EXPECT_LT(max_abs_diff(moments.factor, a), 1e-12);
        const Tensor m = oracle::matvec(oracle::dense_whvi(layer.s1.value, layer.q.mu.value, layer.s2.value), h);
        EXPECT_LT(max_abs_diff(moments.mean, m), 1e-12);
    }
}

TEST(LocalReparam, EmpiricalMomentsMatchBothPaths) {
    const std::size_t d = 4, n = 100000;
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(d, mode, 23);
        randomize_posterior(layer, 24);
        NoiseStream ns(25);
        const Tensor h = ns.standard_normal({d});
        const Tensor a = dense_output_factor(layer, h);
        const Tensor cov = matmul(a, a.transposed());
        const Tensor m = oracle::matvec(oracle::dense_whvi(layer.s1.value, layer.q.mu.value, layer.s2.value), h);
        const double tol = 0.05 * largest_eigenvalue(cov);

        ad::Tape t;
        const Tensor local =
            layer.forward_local_reparam(t, t.constant(row_matrix(h, n)), ns.standard_normal({n, d})).value();
        const auto lm = oracle::empirical_moments(split_rows(local));

        std::vector<std::vector<double>> shared(n);
        const Tensor hrow = h.reshaped({1, d});
        for (std::size_t s = 0; s < n; ++s) {
            ad::Tape ts;
            const Tensor out = layer.forward_reparam(ts, ts.constant(hrow), ns.standard_normal({d})).value();
            shared[s].assign(out.data().begin(), out.data().end());
        }
        const auto sm = oracle::empirical_moments(shared);

        EXPECT_LT(max_abs_diff(lm.cov, cov), tol);
        EXPECT_LT(max_abs_diff(lm.mean, m), tol);
        EXPECT_LT(max_abs_diff(sm.cov, cov), tol);
        EXPECT_LT(max_abs_diff(sm.mean, m), tol);
        EXPECT_LT(max_abs_diff(sm.cov, lm.cov), tol);
    }
}

TEST(Kl, ExactZeroAtPrior) {
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(16, mode, 26);
        layer.q.mu.value.fill(0.0);
        layer.q.log_sigma.value.fill(0.0);
        layer.q.lower.value.fill(0.0);
        ad::Tape t;
        EXPECT_EQ(layer.kl_to_prior(t).value().item(), 0.0);
    }
}

TEST(Kl, OneDimensionalClosedForm) {
    WhviLayer layer = make_layer(1, CovarianceMode::diagonal, 27);
    layer.q.mu.value.fill(1.0);
    layer.q.log_sigma.value.fill(0.0);
    ad::Tape t;
    EXPECT_NEAR(layer.kl_to_prior(t).value().item(), 0.5, 1e-15);
}

TEST(Kl, MonteCarloEstimate) {
    const std::size_t d = 4, n = 1000000;
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(d, mode, 28);
        randomize_posterior(layer, 29);
        // E_q[log q(g) - log p(g)] with g = mu + L eps:
        // log q - log p = -eps^T eps / 2 - sum log L_ii + g^T g / 2.
        const Tensor l = layer.q.sqrt_covariance();
        double log_det_half = 0.0;
        for (std::size_t i = 0; i < d; ++i) log_det_half += std::log(l.at(i, i));
        NoiseStream ns(30);
        const Tensor eps = ns.standard_normal({n, d});
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double ee = 0.0, gg = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                double g = layer.q.mu.value[i];
                for (std::size_t j = 0; j <= i; ++j) g += l.at(i, j) * eps[r * d + j];
                ee += eps[r * d + i] * eps[r * d + i];
                gg += g * g;
            }
            acc += -0.5 * ee - log_det_half + 0.5 * gg;
        }
        const double mc = acc / static_cast<double>(n);
        ad::Tape t;
        const double kl = layer.kl_to_prior(t).value().item();
        EXPECT_LT(std::abs(kl - mc) / kl, 0.01) << "kl=" << kl << " mc=" << mc;
    }
}

TEST(Kl, NonNegativeUnderPerturbation) {
    NoiseStream ns(31);
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(8, mode, 32);
        for (int rep = 0; rep < 50; ++rep) {
            layer.q.mu.value.fill(0.0);
            layer.q.log_sigma.value.fill(0.0);
            layer.q.lower.value.fill(0.0);
            const double scale = rep < 25 ? 1e-3 : 1.0;
            for (double& v : layer.q.mu.value.data()) v = scale * ns.uniform(-1, 1);
            for (double& v : layer.q.log_sigma.value.data()) v = scale * ns.uniform(-1, 1);
            for (double& v : layer.q.lower.value.data()) v = scale * ns.uniform(-1, 1);
            ad::Tape t;
            EXPECT_GT(layer.kl_to_prior(t).value().item(), 0.0);
        }
    }
}

TEST(CovVectW, TwoByTwoHandForm) {
    WhviLayer layer = make_layer(2, CovarianceMode::diagonal, 33);
    layer.s1.value.fill(1.0);
    layer.s2.value.fill(1.0);
    layer.q.log_sigma.value.fill(0.0);
    // vect(W) = M g with columns vect(W(e1)) = [1,1,1,1]/2 and vect(W(e2)) = [1,-1,-1,1]/2.
    const Tensor m = Tensor::matrix({{0.5, 0.5}, {0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}});
    EXPECT_LT(max_abs_diff(layer.vect_map(), m), 1e-15);
    const Tensor expected = Tensor::matrix(
        {{0.5, 0, 0, 0.5}, {0, 0.5, 0.5, 0}, {0, 0.5, 0.5, 0}, {0.5, 0, 0, 0.5}});
    EXPECT_LT(max_abs_diff(layer.cov_vect_w(), expected), 1e-15);
}

TEST(CovVectW, VanishingCovariance) {
    WhviLayer layer = make_layer(4, CovarianceMode::diagonal, 34);
    layer.q.log_sigma.value.fill(-20.0);
    EXPECT_LT(max_abs_diff(layer.cov_vect_w(), Tensor(Shape{16, 16}, 0.0)), 1e-15);
}

TEST(CovVectW, RefusesLargeD) {
    WhviLayer layer = make_layer(32, CovarianceMode::diagonal, 35);
    EXPECT_THROW(layer.cov_vect_w(), DimensionError);
}

TEST(CovVectW, MonteCarloAndCorrelatedEntries) {
    const std::size_t d = 4, n = 100000;
    WhviLayer layer = make_layer(d, CovarianceMode::diagonal, 36);
    layer.q.log_sigma.value.fill(0.0);
    const Tensor analytic = layer.cov_vect_w();

    NoiseStream ns(37);
    std::vector<std::vector<double>> samples(n, std::vector<double>(d * d));
    for (std::size_t s = 0; s < n; ++s) {
        ad::Tape t;
        const Tensor w = layer.materialize_w(t, layer.sample_g(t, ns.standard_normal({d}))).value();
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) samples[s][i + j * d] = w.at(i, j);
    }
    const auto em = oracle::empirical_moments(samples);
    EXPECT_LT(max_abs_diff(em.cov, analytic), 0.05 * largest_eigenvalue(analytic));

    double max_diag = 0.0, max_off = 0.0;
    for (std::size_t i = 0; i < d * d; ++i)
        for (std::size_t j = 0; j < d * d; ++j) {
            const double v = std::abs(analytic.at(i, j));
            if (i == j) max_diag = std::max(max_diag, v);
            else max_off = std::max(max_off, v);
        }
    EXPECT_GT(max_off, 0.1 * max_diag);
}

TEST(ParameterBudget, CountsPerMode) {
    for (std::size_t d : {1u, 4u, 64u}) {
        EXPECT_EQ(make_layer(d, CovarianceMode::diagonal, 38).parameter_count(), 4 * d);
        EXPECT_EQ(make_layer(d, CovarianceMode::full, 39).parameter_count(), 3 * d + d * (d + 1) / 2);
    }
}

TEST(ParameterBudget, D128AgainstMeanField) {
    WhviLayer whvi = make_layer(128, CovarianceMode::diagonal, 40);
    NoiseStream init(41);
    nn::MeanFieldLayer mf(128, 128, init, "mf");
    EXPECT_EQ(whvi.parameter_count(), 512u);
    EXPECT_EQ(mf.parameter_count(), 32768u);
    EXPECT_EQ(mf.parameter_count() / whvi.parameter_count(), 64u);
}

TEST(Gradients, BothForwardPathsAgainstFiniteDifferences) {
    const std::size_t d = 8;
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
        WhviLayer layer = make_layer(d, mode, 42);
        randomize_posterior(layer, 43);
        NoiseStream ns(44);
        const Tensor h = ns.standard_normal({3, d});
        const Tensor weights = ns.standard_normal({3, d});
        const Tensor eps_shared = ns.standard_normal({d});
        const Tensor eps_rows = ns.standard_normal({3, d});
        const auto params = layer.parameters();

        const double reparam = oracle::gradient_check(params, [&](ad::Tape& t) {
            ad::Variable out = layer.forward_reparam(t, t.constant(h), eps_shared);
            return ad::add(ad::sum(ad::mul(ad::square(out), weights)), layer.kl_to_prior(t));
        });
        const double local = oracle::gradient_check(params, [&](ad::Tape& t) {
            ad::Variable out = layer.forward_local_reparam(t, t.constant(h), eps_rows);
            return ad::add(ad::sum(ad::mul(ad::square(out), weights)), layer.kl_to_prior(t));
        });
        EXPECT_LT(reparam, 1e-5);
        EXPECT_LT(local, 1e-5);
    }
}

TEST(WhviLinear, PaddingAndBlocks) {
    NoiseStream init(45);
    nn::WhviLinear narrow(5, 3, CovarianceMode::diagonal, init, "narrow");
    EXPECT_EQ(narrow.block_dim(), 8u);
    EXPECT_EQ(narrow.block_count(), 1u);

    nn::WhviLinear wide(6, 20, CovarianceMode::diagonal, init, "wide", {}, 8);
    EXPECT_EQ(wide.block_count(), 3u);
    EXPECT_EQ(wide.parameter_count(), 3u * 32u);
    EXPECT_THROW(nn::WhviLinear(9, 2, CovarianceMode::diagonal, init, "bad", {}, 8), DimensionError);

    // Posterior-mean output is the truncated stack of padded dense blocks.
    NoiseStream ns(46);
    const Tensor h = ns.standard_normal({4, 6});
    ad::Tape t;
    const Tensor out = wide.forward(t, t.constant(h), ns, nn::Sampling::mean).value();
    ASSERT_EQ(out.shape(), (Shape{4, 20}));
    Tensor padded(Shape{4, 8}, 0.0);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 6; ++c) padded.at(r, c) = h.at(r, c);
    for (std::size_t b = 0; b < 3; ++b) {
        nn::WhviLayer& blk = wide.block(b);
        const Tensor ref = matmul(padded, oracle::dense_whvi(blk.s1.value, blk.q.mu.value, blk.s2.value).transposed());
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 8 && b * 8 + c < 20; ++c)
                EXPECT_NEAR(out.at(r, b * 8 + c), ref.at(r, c), 1e-12);
    }
}

TEST(WhviLinear, RejectsWrongInputWidth) {
    NoiseStream init(47);
    nn::WhviLinear layer(5, 3, CovarianceMode::diagonal, init, "l");
    ad::Tape t;
    EXPECT_THROW(layer.forward(t, t.constant(Tensor(Shape{2, 4})), init, nn::Sampling::mean), ShapeError);
}
