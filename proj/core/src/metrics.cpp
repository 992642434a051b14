#include "whvi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "whvi/error.hpp"

namespace whvi::metrics {

namespace {

void check_shapes(const Tensor& samples, const Tensor& y) {
    if (samples.rank() != 3 || y.rank() != 2 || samples.dim(1) != y.rows() ||
        samples.dim(2) != y.cols() || samples.dim(0) == 0 || y.rows() == 0) {
        throw ShapeError("predictive samples " + whvi::to_string(samples.shape()) +
                         " do not match targets " + whvi::to_string(y.shape()));
    }
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

double rmse(const Tensor& samples, const Tensor& y) {
    check_shapes(samples, y);
    const std::size_t n_mc = samples.dim(0);
    const std::size_t m = y.size();
    double sse = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n_mc; ++s) mean += samples[s * m + i];
        mean /= static_cast<double>(n_mc);
        const double e = mean - y[i];
        sse += e * e;
    }
    return std::sqrt(sse / static_cast<double>(m));
}

double mnll(const Tensor& samples, const Tensor& y, const Tensor& log_var) {
    check_shapes(samples, y);
    const std::size_t n_mc = samples.dim(0);
    const std::size_t b = y.rows();
    const std::size_t t = y.cols();
    if (log_var.size() != t) {
        throw ShapeError("observation log-variance has " + std::to_string(log_var.size()) +
                         " entries for " + std::to_string(t) + " targets");
    }
    const double log_n = std::log(static_cast<double>(n_mc));
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    std::vector<double> lp(n_mc);
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t s = 0; s < n_mc; ++s) {
            double l = 0.0;
            for (std::size_t k = 0; k < t; ++k) {
                const double r = y[i * t + k] - samples[(s * b + i) * t + k];
                l -= 0.5 * (log_2pi + log_var[k] + r * r * std::exp(-log_var[k]));
            }
            lp[s] = l;
        }
        const double top = *std::max_element(lp.begin(), lp.end());
        double acc = 0.0;
        for (double l : lp) acc += std::exp(l - top);
        total -= top + std::log(acc) - log_n;
    }
    return total / static_cast<double>(b);
}

nlohmann::ordered_json to_json(const MetricsRecord& r) {
    return {{"dataset", r.dataset},
            {"model", r.model},
            {"seed", r.seed},
            {"epoch", r.epoch},
            {"elbo", r.elbo},
            {"data_fit", r.data_fit},
            {"kl", r.kl},
            {"kl_weight", r.kl_weight},
            {"test_rmse", r.test_rmse},
            {"test_mnll", r.test_mnll},
            {"wall_clock_s", r.wall_clock_s},
            {"parameter_count", r.parameter_count}};
}

MetricsRecord record_from_json(const nlohmann::json& j) {
    MetricsRecord r;
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.epoch = j.at("epoch").get<std::size_t>();
    r.elbo = j.at("elbo").get<double>();
    r.data_fit = j.at("data_fit").get<double>();
    r.kl = j.at("kl").get<double>();
    r.kl_weight = j.at("kl_weight").get<double>();
    r.test_rmse = j.at("test_rmse").get<double>();
    r.test_mnll = j.at("test_mnll").get<double>();
    r.wall_clock_s = j.at("wall_clock_s").get<double>();
    r.parameter_count = j.at("parameter_count").get<std::size_t>();
    return r;
}

void write_jsonl(std::ostream& out, const MetricsRecord& r) { out << to_json(r).dump() << '\n'; }

std::string csv_header() {
    return "dataset,model,seed,epoch,elbo,data_fit,kl,kl_weight,test_rmse,test_mnll,wall_clock_s,"
           "parameter_count";
}

void write_csv_row(std::ostream& out, const MetricsRecord& r) {
    out << r.dataset << ',' << r.model << ',' << r.seed << ',' << r.epoch << ',' << fmt(r.elbo)
        << ',' << fmt(r.data_fit) << ',' << fmt(r.kl) << ',' << fmt(r.kl_weight) << ','
        << fmt(r.test_rmse) << ',' << fmt(r.test_mnll) << ',' << fmt(r.wall_clock_s) << ','
        << r.parameter_count << '\n';
}

Summary summarize(const std::string& metric, const std::vector<double>& values) {
    Summary s{metric, std::numeric_limits<double>::quiet_NaN(), 0.0, values.size()};
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

}  // namespace whvi::metrics
