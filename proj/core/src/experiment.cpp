#include "whvi/experiment.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "whvi/checkpoint.hpp"
#include "whvi/error.hpp"
#include "whvi/synthetic.hpp"

namespace whvi::experiment {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

double field(const metrics::MetricsRecord& r, const std::string& name) {
    if (name == "test_rmse") return r.test_rmse;
    if (name == "test_mnll") return r.test_mnll;
    if (name == "elbo") return r.elbo;
    if (name == "data_fit") return r.data_fit;
    if (name == "kl") return r.kl;
    throw Error("unknown summary metric " + name);
}

SeedResult run_seed(const config::ExperimentConfig& c, std::uint64_t seed, const fs::path& dir,
                    std::ostream* log, std::mutex& log_mutex) {
    const data::Dataset ds = prepare_split(c, seed);
    auto model = build_model(c, ds.n_features(), ds.y_stats, seed);

    const fs::path seed_dir = dir / ("seed-" + std::to_string(seed));
    fs::create_directories(seed_dir);
    std::ofstream jsonl = open_out(seed_dir / "metrics.jsonl");
    std::ofstream csv = open_out(seed_dir / "metrics.csv");
    csv << metrics::csv_header() << '\n';

    const std::size_t epochs = c.training.epochs;
    auto on_epoch = [&](const metrics::MetricsRecord& r) {
        metrics::write_jsonl(jsonl, r);
        metrics::write_csv_row(csv, r);
        jsonl.flush();
        csv.flush();
        if (log != nullptr && (r.epoch == epochs || r.epoch % 50 == 0 || r.epoch == 1)) {
            std::lock_guard lock(log_mutex);
            *log << "[seed " << seed << "] epoch " << r.epoch << "/" << epochs
                 << "  elbo " << r.elbo << "  kl " << r.kl << "  test rmse " << r.test_rmse
                 << "  mnll " << r.test_mnll << '\n';
        }
    };
    SeedResult result{seed, train::train_loop(*model, ds, c.training, seed, on_epoch)};

    nlohmann::json meta;
    meta["config"] = config::to_json(c);
    meta["seed"] = seed;
    checkpoint::save_model(*model, seed_dir / "checkpoint.json", meta,
                           {{"x_mean", ds.x_stats.mean}, {"x_std", ds.x_stats.std}});
    return result;
}

}  // namespace

data::Dataset load_dataset(const config::ExperimentConfig& c) {
    if (c.dataset.is_synthetic()) {
        data::SyntheticFunction fn = data::find_synthetic(c.dataset.synthetic);
        if (c.dataset.noise_std) fn.noise_std = *c.dataset.noise_std;
        return data::synth_generate(fn, c.dataset.n, c.dataset.seed);
    }
    return data::load_from_manifest(c.dataset.manifest, c.dataset.name);
}

data::Dataset prepare_split(const config::ExperimentConfig& c, std::uint64_t seed) {
    return data::split(load_dataset(c), c.dataset.train_fraction, derive_seed(seed, 20));
}

std::unique_ptr<nn::Regressor> build_model(const config::ExperimentConfig& c,
                                           std::size_t input_dim, const data::ColumnStats& y_stats,
                                           std::uint64_t seed) {
    const config::Architecture& a = c.architecture;
    NoiseStream init(derive_seed(seed, 10));
    const nn::WhviInit whvi_init{a.whvi_s_variance, a.whvi_mu_std, a.whvi_sigma};
    switch (c.model) {
        case config::ModelKind::bnn_whvi:
        case config::ModelKind::bnn_meanfield: {
            nn::BnnOptions o;
            o.input_dim = input_dim;
            o.output_dim = y_stats.mean.size();
            o.hidden = a.hidden;
            o.hidden_family = c.model == config::ModelKind::bnn_whvi ? nn::LayerFamily::whvi
                                                                     : nn::LayerFamily::meanfield;
            o.covariance = c.covariance;
            o.initial_noise_fraction = a.initial_noise_fraction;
            o.whvi_init = whvi_init;
            o.hidden_meanfield_init = {1.0, a.meanfield_sigma};
            o.output_init = {1.0, a.meanfield_sigma};
            return std::make_unique<nn::BnnRegressor>(o, y_stats.mean, y_stats.std, init);
        }
        case config::ModelKind::gp_whvi:
        case config::ModelKind::gp_meanfield_matched: {
            if (y_stats.mean.size() != 1) throw ConfigError("model", "GP models need exactly one target");
            nn::RffGpOptions o;
            o.input_dim = input_dim;
            o.posterior = c.model == config::ModelKind::gp_whvi ? nn::GpPosterior::whvi
                                                                : nn::GpPosterior::meanfield;
            o.hadamard_dim = a.hadamard_dim;
            o.blocks = a.blocks;
            o.features = a.features;
            o.covariance = c.covariance;
            o.lengthscale = a.lengthscale;
            o.amplitude = a.amplitude;
            o.initial_noise_fraction = a.initial_noise_fraction;
            o.whvi_init = whvi_init;
            o.meanfield_init = {1.0, a.whvi_sigma};
            return std::make_unique<nn::RffGpRegressor>(o, y_stats.mean, y_stats.std, init);
        }
    }
    throw ConfigError("model", "unsupported model kind");
}

std::vector<metrics::Summary> summarize_finals(const std::vector<SeedResult>& seeds) {
    std::vector<metrics::Summary> out;
    for (const auto& name : kSummaryMetrics) {
        std::vector<double> values;
        for (const auto& s : seeds)
            if (!s.records.empty()) values.push_back(field(s.records.back(), name));
        out.push_back(metrics::summarize(name, values));
    }
    return out;
}

RunResult run(const config::ExperimentConfig& c, const RunOptions& options) {
    config::validate(c);
    RunResult result;
    result.dir = c.output_dir;
    try {
        fs::create_directories(result.dir);
    } catch (const fs::filesystem_error& e) {
        throw IoError(std::string("cannot create output directory: ") + e.what());
    }
    open_out(result.dir / "config.json") << config::to_json(c).dump(2) << '\n';
    open_out(result.dir / "seeds.json") << nlohmann::json(c.seeds).dump() << '\n';

    // Fail on a missing fixture before any seed starts.
    load_dataset(c);

    result.seeds.resize(c.seeds.size());
    std::mutex log_mutex;
    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, c.seeds.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < c.seeds.size(); ++i)
            result.seeds[i] = run_seed(c, c.seeds[i], result.dir, options.log, log_mutex);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(c.seeds.size());
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < c.seeds.size(); i = next++) {
                    try {
                        result.seeds[i] = run_seed(c, c.seeds[i], result.dir, options.log, log_mutex);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : workers) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    result.summary = summarize_finals(result.seeds);
    std::ofstream csv = open_out(result.dir / "summary.csv");
    csv << "metric,mean,std,n\n";
    nlohmann::ordered_json js = nlohmann::ordered_json::object();
    for (const auto& s : result.summary) {
        csv << s.metric << ',' << fmt(s.mean) << ',' << fmt(s.std) << ',' << s.n << '\n';
        js[s.metric] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    }
    open_out(result.dir / "summary.json") << js.dump(2) << '\n';
    if (options.log != nullptr) {
        for (const auto& s : result.summary)
            *options.log << s.metric << ": " << s.mean << " +- " << s.std << " (n=" << s.n << ")\n";
    }
    return result;
}

train::EvalResult evaluate_checkpoint(const fs::path& checkpoint_path, std::size_t n_mc) {
    const checkpoint::Checkpoint ckpt = checkpoint::read(checkpoint_path);
    if (!ckpt.metadata.contains("config") || !ckpt.metadata.contains("seed")) {
        throw CheckpointError("checkpoint " + checkpoint_path.string() +
                              " does not record the config and seed of its run");
    }
    const config::ExperimentConfig c = config::parse_config(ckpt.metadata.at("config"));
    const auto seed = ckpt.metadata.at("seed").get<std::uint64_t>();
    const data::Dataset ds = prepare_split(c, seed);
    auto model = build_model(c, ds.n_features(), ds.y_stats, seed);
    checkpoint::restore(*model, ckpt);
    NoiseStream noise(derive_seed(seed, 2000));
    return train::evaluate(*model, ds.test_x(), ds.test_y(),
                           n_mc != 0 ? n_mc : c.training.n_mc_eval, noise);
}

std::vector<ParamRow> param_report(nn::Regressor& model) {
    std::vector<ParamRow> rows;
    for (const auto& g : model.parameter_groups())
        for (const auto* p : g.parameters) rows.push_back({g.name, p->name, p->value.shape(), p->size()});
    return rows;
}

std::string format_param_report(const std::vector<ParamRow>& rows) {
    std::size_t w_group = 5, w_tensor = 6;
    for (const auto& r : rows) {
        w_group = std::max(w_group, r.group.size());
        w_tensor = std::max(w_tensor, r.tensor.size());
    }
    std::ostringstream out;
    auto line = [&](const std::string& g, const std::string& t, const std::string& s,
                    const std::string& n) {
        out << std::left << std::setw(static_cast<int>(w_group) + 2) << g
            << std::setw(static_cast<int>(w_tensor) + 2) << t << std::setw(16) << s << std::right
            << std::setw(10) << n << '\n';
    };
    line("group", "tensor", "shape", "count");
    std::map<std::string, std::size_t> per_group;
    std::vector<std::string> order;
    std::size_t total = 0;
    for (const auto& r : rows) {
        line(r.group, r.tensor, whvi::to_string(r.shape), std::to_string(r.count));
        if (!per_group.contains(r.group)) order.push_back(r.group);
        per_group[r.group] += r.count;
        total += r.count;
    }
    out << '\n';
    for (const auto& g : order) line(g, "(subtotal)", "", std::to_string(per_group[g]));
    line("total", "", "", std::to_string(total));
    return out.str();
}

}  // namespace whvi::experiment
