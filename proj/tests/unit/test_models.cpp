#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "whvi/adam.hpp"
#include "whvi/error.hpp"
#include "whvi/models.hpp"

using namespace whvi;
using nn::BnnRegressor;
using nn::RffGpRegressor;
using nn::Sampling;

namespace {

BnnRegressor make_bnn(nn::LayerFamily family, std::size_t in, std::vector<std::size_t> hidden,
                      std::uint64_t seed, Tensor y_mean = Tensor::vector({0.0}),
                      Tensor y_std = Tensor::vector({1.0})) {
    nn::BnnOptions opt;
    opt.input_dim = in;
    opt.hidden = std::move(hidden);
    opt.hidden_family = family;
    NoiseStream init(seed);
    return BnnRegressor(opt, std::move(y_mean), std::move(y_std), init);
}

RffGpRegressor make_gp(nn::RffGpOptions opt, std::uint64_t seed, double y_mean = 0.0,
                       double y_std = 1.0) {
    NoiseStream init(seed);
    return RffGpRegressor(opt, Tensor::vector({y_mean}), Tensor::vector({y_std}), init);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Put every Gaussian posterior at the N(0, I) prior.
void set_to_prior(nn::Regressor& model) {
    for (auto* p : model.parameters()) {
        if (ends_with(p->name, ".mu") || ends_with(p->name, ".log_sigma") || ends_with(p->name, ".lower"))
            p->value.fill(0.0);
    }
}

void set_log_sigma(nn::Regressor& model, double v) {
    for (auto* p : model.parameters())
        if (ends_with(p->name, ".log_sigma")) p->value.fill(v);
}

double rbf(const Tensor& x, const Tensor& y, double lengthscale, double amplitude) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    return amplitude * std::exp(-0.5 * d2 / (lengthscale * lengthscale));
}

double dot_rows(const Tensor& m, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m.at(a, j) * m.at(b, j);
    return s;
}

double elbo_value(nn::Regressor& model, const Tensor& x, const Tensor& y, std::size_t n,
                  NoiseStream& ns, Sampling mode) {
    ad::Tape t;
    return nn::elbo(model, t, x, y, n, 1, ns, mode).elbo.value().item();
}

Tensor rows_of(const Tensor& m, std::size_t begin, std::size_t end) {
    const std::size_t c = m.cols();
    Tensor out(Shape{end - begin, c});
    for (std::size_t r = begin; r < end; ++r)
        for (std::size_t j = 0; j < c; ++j) out.at(r - begin, j) = m.at(r, j);
    return out;
}

}  // namespace

// ---- BNN -------------------------------------------------------------------

TEST(Bnn, OutputRescaling) {
    NoiseStream ns(1);
    const Tensor x = ns.standard_normal({6, 3});
    BnnRegressor unit = make_bnn(nn::LayerFamily::whvi, 3, {8, 8}, 2);
    BnnRegressor scaled = make_bnn(nn::LayerFamily::whvi, 3, {8, 8}, 2, Tensor::vector({3.0}), Tensor::vector({2.0}));
    ad::Tape t;
    const Tensor f = unit.forward(t, x, ns, Sampling::mean).value();
    const Tensor y = scaled.forward(t, x, ns, Sampling::mean).value();
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(y[i], 2.0 * f[i] + 3.0, 1e-12);
    EXPECT_NEAR(scaled.observation_log_variance()[0], unit.observation_log_variance()[0] + 2 * std::log(2.0), 1e-15);
}

TEST(Bnn, CollapsedPosteriorGivesIdenticalSamples) {
    for (auto family : {nn::LayerFamily::whvi, nn::LayerFamily::meanfield}) {
        BnnRegressor model = make_bnn(family, 3, {8, 8}, 3);
        set_log_sigma(model, -30.0);
        NoiseStream ns(4);
        const Tensor x = ns.standard_normal({5, 3});
        const Tensor s = model.predict_samples(x, 6, ns);
        ASSERT_EQ(s.shape(), (Shape{6, 5, 1}));
        for (std::size_t k = 1; k < 6; ++k)
            for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(s[k * 5 + i], s[i], 1e-6);
    }
}

TEST(Bnn, SingleSampleIsOneLocalPass) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 3, {8, 8}, 5);
    NoiseStream data(6);
    const Tensor x = data.standard_normal({4, 3});
    NoiseStream a(7), b(7);
    const Tensor s = model.predict_samples(x, 1, a);
    ad::Tape t;
    EXPECT_EQ(s.reshaped({4, 1}), model.forward(t, x, b, Sampling::local_reparam).value());
}

TEST(Bnn, PredictiveMeanSelfConsistency) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 3, {16, 16}, 8);
    set_log_sigma(model, std::log(0.5));
    NoiseStream ns(9);
    const Tensor x = ns.standard_normal({4, 3});
    const std::size_t n = 1000;
    const Tensor s1 = model.predict_samples(x, n, ns);
    const Tensor s2 = model.predict_samples(x, n, ns);
    for (std::size_t i = 0; i < 4; ++i) {
        double m1 = 0, m2 = 0, v = 0;
        for (std::size_t k = 0; k < n; ++k) {
            m1 += s1[k * 4 + i];
            m2 += s2[k * 4 + i];
        }
        m1 /= n;
        m2 /= n;
        for (std::size_t k = 0; k < n; ++k) v += (s1[k * 4 + i] - m1) * (s1[k * 4 + i] - m1);
        v /= (n - 1);
        const double se_diff = std::sqrt(2.0 * v / n);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(std::abs(m1 - m2), 3.0 * se_diff) << i;
    }
}

TEST(Bnn, RejectsWrongInputWidth) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 3, {8}, 10);
    NoiseStream ns(11);
    EXPECT_THROW(model.predict_samples(Tensor(Shape{2, 4}), 1, ns), ShapeError);
}

// ---- RFF GP ----------------------------------------------------------------

TEST(RffFeatures, MatchesFormula) {
    nn::RffGpOptions opt;
    opt.input_dim = 3;
    opt.hadamard_dim = 4;
    opt.lengthscale = 0.7;
    opt.amplitude = 1.6;
    RffGpRegressor gp = make_gp(opt, 12);
    NoiseStream ns(13);
    const Tensor x = ns.standard_normal({5, 3});
    const Tensor phi = gp.rff_features(x);
    const auto buffers = gp.buffers();
    const Tensor& omega = *buffers[0].tensor;
    const Tensor& phases = *buffers[1].tensor;
    ASSERT_EQ(buffers[0].name, "omega");
    ASSERT_EQ(phi.shape(), (Shape{5, 16}));
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t j = 0; j < 16; ++j) {
            double proj = 0.0;
            for (std::size_t i = 0; i < 3; ++i) proj += x.at(r, i) * omega.at(i, j);
            const double expected = std::sqrt(2.0 * 1.6 / 16.0) * std::cos(proj / 0.7 + phases[j]);
            EXPECT_NEAR(phi.at(r, j), expected, 1e-14);
        }
}

TEST(RffFeatures, ApproximatesRbfKernel) {
    nn::RffGpOptions opt;
    opt.input_dim = 5;
    opt.posterior = nn::GpPosterior::meanfield;
    opt.features = 4096;
    opt.lengthscale = 1.5;
    opt.amplitude = 2.0;
    RffGpRegressor gp = make_gp(opt, 14);
    NoiseStream ns(15);
    const std::size_t pairs = 20;
    const Tensor base = ns.standard_normal({pairs, 5});
    const Tensor step = ns.standard_normal({pairs, 5});
    Tensor x(Shape{2 * pairs, 5});
    for (std::size_t p = 0; p < pairs; ++p)
        for (std::size_t i = 0; i < 5; ++i) {
            x.at(2 * p, i) = base.at(p, i);
            x.at(2 * p + 1, i) = base.at(p, i) + 0.4 * step.at(p, i);
        }
    const Tensor phi = gp.rff_features(x);
    for (std::size_t p = 0; p < pairs; ++p) {
        const double exact = rbf(x.row(2 * p), x.row(2 * p + 1), 1.5, 2.0);
        const double approx = dot_rows(phi, 2 * p, 2 * p + 1);
        EXPECT_LT(std::abs(approx - exact) / exact, 0.05) << "pair " << p;
        EXPECT_LT(std::abs(dot_rows(phi, 2 * p, 2 * p) - 2.0) / 2.0, 0.05);
    }
}

TEST(RffFeatures, InfiniteLengthscaleGivesConstantKernel) {
    nn::RffGpOptions opt;
    opt.input_dim = 2;
    opt.hadamard_dim = 8;
    RffGpRegressor gp = make_gp(opt, 16);
    gp.log_lengthscale().value = Tensor::scalar(40.0);
    NoiseStream ns(17);
    const Tensor phi = gp.rff_features(ns.standard_normal({4, 2}));
    const double k00 = dot_rows(phi, 0, 0);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) EXPECT_NEAR(dot_rows(phi, a, b), k00, 1e-12);
}

TEST(RffGp, FastPathMatchesDenseWeights) {
    for (auto mode : {nn::CovarianceMode::diagonal, nn::CovarianceMode::full}) {
        for (std::size_t blocks : {1u, 2u}) {
            nn::RffGpOptions opt;
            opt.input_dim = 3;
            opt.hadamard_dim = 8;
            opt.blocks = blocks;
            opt.covariance = mode;
            RffGpRegressor gp = make_gp(opt, 18);
            NoiseStream ns(19);
            std::vector<Tensor> g;
            for (std::size_t b = 0; b < blocks; ++b) {
                g.push_back(ns.standard_normal({8}));
                gp.whvi_block(b).q.mu.value = g.back();
            }
            const Tensor x = ns.standard_normal({7, 3});
            ad::Tape t;
            const Tensor fast = gp.latent(t, x, ns, Sampling::mean).value();
            const Tensor dense = gp.latent_dense(t, x, g).value();
            EXPECT_LT(max_abs_diff(fast, dense), 1e-10);

            // Independent oracle: phi^T vect(S1 H diag(g) H S2), column stacking.
            const Tensor phi = gp.rff_features(x);
            for (std::size_t r = 0; r < 7; ++r) {
                double f = 0.0;
                for (std::size_t b = 0; b < blocks; ++b) {
                    nn::WhviLayer& layer = gp.whvi_block(b);
                    const Tensor w = oracle::dense_whvi(layer.s1.value, g[b], layer.s2.value);
                    for (std::size_t i = 0; i < 8; ++i)
                        for (std::size_t j = 0; j < 8; ++j) f += phi.at(r, b * 64 + i + j * 8) * w.at(i, j);
                }
                EXPECT_NEAR(fast[r], f, 1e-10);
            }
        }
    }
}

TEST(RffGp, ZeroVariancePredictionIsDeterministic) {
    for (auto posterior : {nn::GpPosterior::whvi, nn::GpPosterior::meanfield}) {
        nn::RffGpOptions opt;
        opt.input_dim = 2;
        opt.hadamard_dim = 4;
        opt.posterior = posterior;
        RffGpRegressor gp = make_gp(opt, 20, 1.5, 3.0);
        set_log_sigma(gp, -30.0);
        NoiseStream ns(21);
        const Tensor x = ns.standard_normal({5, 2});
        const Tensor s = gp.predict_samples(x, 4, ns);
        ad::Tape t;
        const Tensor f = gp.latent(t, x, ns, Sampling::mean).value();
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(s[k * 5 + r], 3.0 * f[r] + 1.5, 1e-10);
    }
}

TEST(RffGp, PredictiveMomentsMatchSampledWeights) {
    nn::RffGpOptions opt;
    opt.input_dim = 2;
    opt.hadamard_dim = 4;
    opt.covariance = nn::CovarianceMode::full;
    RffGpRegressor gp = make_gp(opt, 22);
    NoiseStream ns(23);
    for (double& v : gp.whvi_block(0).q.lower.value.data()) v = ns.uniform(-0.3, 0.3);
    set_log_sigma(gp, std::log(0.5));
    const Tensor x = ns.standard_normal({1, 2});
    const std::size_t n = 100000;
    const Tensor pred = gp.predict_samples(x, n, ns);
    double pm = 0, pv = 0, sm = 0, sv = 0;
    std::vector<double> shared(n);
    for (std::size_t k = 0; k < n; ++k) {
        ad::Tape t;
        shared[k] = gp.latent(t, x, ns, Sampling::reparam).value()[0];
        pm += pred[k];
        sm += shared[k];
    }
    pm /= n;
    sm /= n;
    for (std::size_t k = 0; k < n; ++k) {
        pv += (pred[k] - pm) * (pred[k] - pm);
        sv += (shared[k] - sm) * (shared[k] - sm);
    }
    pv /= n - 1;
    sv /= n - 1;
    EXPECT_LT(std::abs(pv - sv), 0.05 * sv);
    EXPECT_LT(std::abs(pm - sm), 0.05 * std::sqrt(sv));
}

namespace {

// Full-batch Adam on the ELBO; returns the train RMSE of the posterior mean.
double fit_linear_in_features(RffGpRegressor& gp, const Tensor& x, const Tensor& y, int steps) {
    optim::Adam adam(gp.parameters(), {0.02});
    NoiseStream ns(99);
    for (int s = 0; s < steps; ++s) {
        adam.zero_grad();
        ad::Tape t;
        const auto terms = nn::elbo(gp, t, x, y, x.rows(), 1, ns, Sampling::local_reparam);
        t.backward(ad::scale(terms.elbo, -1.0 / static_cast<double>(x.rows())));
        adam.step();
    }
    ad::Tape t;
    const Tensor f = gp.latent(t, x, ns, Sampling::mean).value();
    double se = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) se += (f[r] - y[r]) * (f[r] - y[r]);
    return std::sqrt(se / static_cast<double>(x.rows()));
}

}  // namespace

TEST(RffGp, RecoversLinearInFeaturesTruth) {
    const double noise = 0.1;
    const std::size_t n = 400;
    for (auto posterior : {nn::GpPosterior::meanfield, nn::GpPosterior::whvi}) {
        nn::RffGpOptions opt;
        opt.input_dim = 2;
        opt.posterior = posterior;
        opt.hadamard_dim = 4;
        opt.features = 16;
        RffGpRegressor gp = make_gp(opt, 24);
        NoiseStream ns(25);
        const Tensor x = ns.standard_normal({n, 2});
        // Ground truth lives in the model family: a weight vector (or a g for
        // the structured posterior) pushed through the same features.
        if (posterior == nn::GpPosterior::meanfield) {
            gp.meanfield().mu.value = ns.standard_normal({1, 16});
        } else {
            gp.whvi_block(0).q.mu.value = ns.standard_normal({4});
        }
        ad::Tape t;
        const Tensor f = gp.latent(t, x, ns, Sampling::mean).value();
        Tensor y(Shape{n, 1});
        const Tensor e = ns.standard_normal({n});
        for (std::size_t r = 0; r < n; ++r) y[r] = f[r] + noise * e[r];
        // Restart from a fresh posterior.
        if (posterior == nn::GpPosterior::meanfield) {
            gp.meanfield().mu.value.fill(0.0);
        } else {
            gp.whvi_block(0).q.mu.value.fill(0.0);
        }
        const double rmse = fit_linear_in_features(gp, x, y, 1500);
        EXPECT_LT(rmse, 1.2 * noise) << gp.kind();
    }
}

TEST(RffGp, MatchedBaselineParameterCount) {
    for (auto mode : {nn::CovarianceMode::diagonal, nn::CovarianceMode::full}) {
        for (std::size_t d : {4u, 8u, 16u}) {
            nn::RffGpOptions opt;
            opt.input_dim = 6;
            opt.hadamard_dim = d;
            opt.covariance = mode;
            RffGpRegressor whvi = make_gp(opt, 26);
            opt.posterior = nn::GpPosterior::meanfield;
            RffGpRegressor mf = make_gp(opt, 27);
            const double a = static_cast<double>(whvi.parameter_count());
            const double b = static_cast<double>(mf.parameter_count());
            EXPECT_LE(std::abs(a - b) / a, 0.02) << "d=" << d << " " << a << " vs " << b;
            EXPECT_EQ(whvi.feature_count(), d * d);
        }
    }
}

// ---- ELBO ------------------------------------------------------------------

TEST(Elbo, PriorPosteriorHasZeroKl) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 3, {8, 8}, 28);
    set_to_prior(model);
    NoiseStream ns(29);
    const Tensor x = ns.standard_normal({6, 3});
    const Tensor y = ns.standard_normal({6, 1});
    ad::Tape t;
    const auto terms = nn::elbo(model, t, x, y, 60, 1, ns);
    EXPECT_EQ(terms.kl.value().item(), 0.0);
    EXPECT_EQ(terms.elbo.value().item(), terms.data_fit.value().item());
}

TEST(Elbo, MinibatchAverageEqualsFullBatch) {
    for (auto family : {nn::LayerFamily::whvi, nn::LayerFamily::meanfield}) {
        BnnRegressor model = make_bnn(family, 3, {8, 8}, 30);
        NoiseStream data(31);
        const std::size_t n = 12, b = 4;
        const Tensor x = data.standard_normal({n, 3});
        const Tensor y = data.standard_normal({n, 1});
        // One weight sample shared by every row, replayed for each minibatch.
        NoiseStream ns(32);
        ns.record();
        const double full = elbo_value(model, x, y, n, ns, Sampling::reparam);
        double avg = 0.0;
        for (std::size_t k = 0; k < n / b; ++k) {
            ns.replay();
            avg += elbo_value(model, rows_of(x, k * b, (k + 1) * b), rows_of(y, k * b, (k + 1) * b), n, ns,
                              Sampling::reparam);
        }
        avg /= static_cast<double>(n / b);
        EXPECT_NEAR(avg, full, 1e-10 * std::abs(full));
    }
}

TEST(Elbo, GradientAgainstFiniteDifferences) {
    for (auto mode : {Sampling::local_reparam, Sampling::reparam}) {
        BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 4, {4, 4}, 33);
        NoiseStream data(34);
        const Tensor x = data.standard_normal({5, 4});
        const Tensor y = data.standard_normal({5, 1});
        NoiseStream ns(35);
        ns.record();
        {
            ad::Tape t;
            nn::elbo(model, t, x, y, 20, 2, ns, mode);
        }
        const double err = oracle::gradient_check(model.parameters(), [&](ad::Tape& t) {
            ns.replay();
            return nn::elbo(model, t, x, y, 20, 2, ns, mode).elbo;
        });
        EXPECT_LT(err, 1e-4);
    }
}

TEST(Elbo, MonotoneUnderSmallFullBatchSteps) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 2, {4, 4}, 36);
    NoiseStream data(37);
    const Tensor x = data.standard_normal({10, 2});
    const Tensor y = data.standard_normal({10, 1});
    NoiseStream ns(38);
    ns.record();
    double previous = elbo_value(model, x, y, 10, ns, Sampling::local_reparam);
    const auto params = model.parameters();
    for (int step = 0; step < 100; ++step) {
        for (auto* p : params) p->zero_grad();
        ns.replay();
        ad::Tape t;
        t.backward(nn::elbo(model, t, x, y, 10, 1, ns).elbo);
        for (auto* p : params)
            for (std::size_t i = 0; i < p->size(); ++i) p->value[i] += 1e-4 * p->grad[i];
        ns.replay();
        const double current = elbo_value(model, x, y, 10, ns, Sampling::local_reparam);
        ASSERT_GE(current, previous) << "step " << step;
        previous = current;
    }
}

TEST(Elbo, KlIgnoresDataAndDataFitIgnoresCollapsedScales) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 3, {8, 8}, 39);
    NoiseStream ns(40);
    const Tensor x1 = ns.standard_normal({4, 3}), y1 = ns.standard_normal({4, 1});
    const Tensor x2 = ns.standard_normal({9, 3}), y2 = ns.standard_normal({9, 1});
    ad::Tape t;
    const double kl1 = nn::elbo(model, t, x1, y1, 100, 1, ns).kl.value().item();
    const double kl2 = nn::elbo(model, t, x2, y2, 100, 1, ns).kl.value().item();
    EXPECT_EQ(kl1, kl2);

    set_log_sigma(model, -30.0);
    const double fit_a = nn::elbo(model, t, x1, y1, 100, 1, ns).data_fit.value().item();
    set_log_sigma(model, -40.0);
    const double fit_b = nn::elbo(model, t, x1, y1, 100, 1, ns).data_fit.value().item();
    EXPECT_NEAR(fit_a, fit_b, 1e-6 * std::abs(fit_a));
}

TEST(Elbo, RejectsOversizedBatch) {
    BnnRegressor model = make_bnn(nn::LayerFamily::whvi, 3, {8}, 41);
    NoiseStream ns(42);
    ad::Tape t;
    EXPECT_THROW(nn::elbo(model, t, Tensor(Shape{5, 3}), Tensor(Shape{5, 1}), 4, 1, ns), Error);
}
