#include "whvi/synthetic.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/random/sobol.hpp>

#include "whvi/noise.hpp"

namespace whvi::data {

namespace {

double hartmann6(std::span<const double> x) {
    static constexpr std::array<double, 4> alpha{1.0, 1.2, 3.0, 3.2};
    static constexpr double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                       {0.05, 10, 17, 0.1, 8, 14},
                                       {3, 3.5, 1.7, 10, 17, 8},
                                       {17, 8, 0.05, 10, 0.1, 14}};
    static constexpr double p[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                       {2329, 4135, 8307, 3736, 1004, 9991},
                                       {2348, 1451, 3522, 2883, 3047, 6650},
                                       {4047, 8828, 8732, 5743, 1091, 381}};
    double f = 0.0;
    for (int i = 0; i < 4; ++i) {
        double inner = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double d = x[j] - 1e-4 * p[i][j];
            inner += a[i][j] * d * d;
        }
        f -= alpha[i] * std::exp(-inner);
    }
    return f;
}

// Midpoint voltage of an output transformerless push-pull circuit.
double otl(std::span<const double> x) {
    const double rb1 = x[0], rb2 = x[1], rf = x[2], rc1 = x[3], rc2 = x[4], beta = x[5];
    const double vb1 = 12.0 * rb2 / (rb1 + rb2);
    const double b = beta * (rc2 + 9.0);
    return (vb1 + 0.74) * b / (b + rf) + 11.35 * rf / (b + rf) + 0.74 * rf * b / ((b + rf) * rc1);
}

// Cycle time of a piston.
double piston(std::span<const double> x) {
    const double m = x[0], s = x[1], v0 = x[2], k = x[3], p0 = x[4], ta = x[5], t0 = x[6];
    const double a = p0 * s + 19.62 * m - k * v0 / s;
    const double v = s / (2.0 * k) * (std::sqrt(a * a + 4.0 * k * p0 * v0 * ta / t0) - a);
    return 2.0 * std::numbers::pi * std::sqrt(m / (k + s * s * p0 * v0 * ta / (t0 * v * v)));
}

// Water flow through a borehole.
double borehole(std::span<const double> x) {
    const double rw = x[0], r = x[1], tu = x[2], hu = x[3], tl = x[4], hl = x[5], l = x[6],
                 kw = x[7];
    const double lr = std::log(r / rw);
    return 2.0 * std::numbers::pi * tu * (hu - hl) /
           (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl));
}

// Distance of a 4-segment planar arm's end point from the origin.
double robot_arm(std::span<const double> x) {
    double u = 0.0, v = 0.0, angle = 0.0;
    for (int i = 0; i < 4; ++i) {
        angle += x[i];
        u += x[4 + i] * std::cos(angle);
        v += x[4 + i] * std::sin(angle);
    }
    return std::sqrt(u * u + v * v);
}

std::vector<SyntheticFunction> make_functions() {
    const double tau = 2.0 * std::numbers::pi;
    return {
        {"hartmann6", std::vector<double>(6, 0.0), std::vector<double>(6, 1.0), hartmann6, 0.05},
        {"otl", {50, 25, 0.5, 1.2, 0.25, 50}, {150, 70, 3, 2.5, 1.2, 300}, otl, 0.05},
        {"piston",
         {30, 0.005, 0.002, 1000, 90000, 290, 340},
         {60, 0.020, 0.010, 5000, 110000, 296, 360},
         piston,
         0.005},
        {"borehole",
         {0.05, 100, 63070, 990, 63.1, 700, 1120, 9855},
         {0.15, 50000, 115600, 1110, 116, 820, 1680, 12045},
         borehole,
         1.0},
        {"robot_arm", {0, 0, 0, 0, 0, 0, 0, 0}, {tau, tau, tau, tau, 1, 1, 1, 1}, robot_arm, 0.02},
    };
}

}  // namespace

const std::vector<SyntheticFunction>& synthetic_functions() {
    static const std::vector<SyntheticFunction> fns = make_functions();
    return fns;
}

const SyntheticFunction& find_synthetic(const std::string& name) {
    std::string known;
    for (const auto& fn : synthetic_functions()) {
        if (fn.name == name) return fn;
        known += (known.empty() ? "" : ", ") + fn.name;
    }
    throw Error("unknown synthetic function '" + name + "' (known: " + known + ")");
}

Dataset synth_generate(const SyntheticFunction& fn, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error("synth_generate needs n >= 1");
    const std::size_t d = fn.dim();
    boost::random::sobol sobol(d);
    std::mt19937_64 shift_rng(derive_seed(seed, 0));
    std::vector<std::uint64_t> shift(d);
    for (auto& s : shift) s = shift_rng();
    NoiseStream noise(derive_seed(seed, 1));

    Dataset ds;
    ds.name = fn.name;
    ds.x = Tensor(Shape{n, d});
    ds.y = Tensor(Shape{n, 1});
    std::vector<double> point(d);
    constexpr double two_pow_53 = 9007199254740992.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::uint64_t bits = static_cast<std::uint64_t>(sobol()) ^ shift[j];
            // Top 53 bits, centred in their cell so u is strictly inside (0, 1).
            const double u = (static_cast<double>(bits >> 11) + 0.5) / two_pow_53;
            point[j] = fn.lower[j] + u * (fn.upper[j] - fn.lower[j]);
            ds.x.at(i, j) = point[j];
        }
        ds.y[i] = fn.evaluate(point);
    }
    if (fn.noise_std > 0.0) {
        const Tensor eps = noise.standard_normal(Shape{n});
        for (std::size_t i = 0; i < n; ++i) ds.y[i] += fn.noise_std * eps[i];
    }
    return ds;
}

}  // namespace whvi::data
