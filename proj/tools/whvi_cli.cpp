// whvi: train, evaluate and inspect WHVI / mean-field regressors.
//
//   whvi run --config configs/energy_whvi.json [--output DIR] [--seed-override 0,1,2]
//   whvi evaluate --checkpoint runs/x/seed-0/checkpoint.json
//   whvi params --config configs/energy_whvi.json
//   whvi fwht-bench
//
// Exit codes: 0 success, 1 config error, 2 runtime error or NaN abort, 3 I/O error.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "whvi/checkpoint.hpp"
#include "whvi/config.hpp"
#include "whvi/error.hpp"
#include "whvi/experiment.hpp"
#include "whvi/fwht.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kIo = 3 };

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) {
            throw whvi::ConfigError("--seed-override", "bad seed '" + item + "' in --seed-override");
        }
        seeds.push_back(v);
    }
    if (seeds.empty()) throw whvi::ConfigError("--seed-override", "--seed-override needs at least one seed");
    return seeds;
}

whvi::config::ExperimentConfig resolve(const std::string& config_path, const std::string& output,
                                       const std::string& seeds) {
    auto c = whvi::config::load_config(config_path);
    if (!output.empty()) c.output_dir = output;
    if (!seeds.empty()) c.seeds = parse_seed_list(seeds);
    whvi::config::validate(c);
    return c;
}

int cmd_run(const std::string& config_path, const std::string& output, const std::string& seeds,
            bool quiet, std::size_t jobs) {
    const auto c = resolve(config_path, output, seeds);
    whvi::experiment::RunOptions options;
    options.log = quiet ? nullptr : &std::cerr;
    options.jobs = jobs;
    const auto result = whvi::experiment::run(c, options);
    if (!quiet) std::cerr << "wrote " << result.dir.string() << '\n';
    return kOk;
}

int cmd_evaluate(const std::string& checkpoint, std::size_t n_mc) {
    const auto r = whvi::experiment::evaluate_checkpoint(checkpoint, n_mc);
    std::cout << nlohmann::json{{"test_rmse", r.rmse}, {"test_mnll", r.mnll}}.dump() << '\n';
    return kOk;
}

int cmd_params(const std::string& config_path, std::optional<std::size_t> input_dim) {
    const auto c = resolve(config_path, "", "");
    std::size_t d_in = 0;
    whvi::data::ColumnStats y_stats{whvi::Tensor(whvi::Shape{1}, 0.0),
                                    whvi::Tensor(whvi::Shape{1}, 1.0)};
    if (input_dim) {
        d_in = *input_dim;
    } else {
        const auto ds = whvi::experiment::load_dataset(c);
        d_in = ds.n_features();
        y_stats = {whvi::Tensor(whvi::Shape{ds.n_targets()}, 0.0),
                   whvi::Tensor(whvi::Shape{ds.n_targets()}, 1.0)};
    }
    auto model = whvi::experiment::build_model(c, d_in, y_stats, c.seeds.front());
    std::cout << model->kind() << " (input dim " << d_in << ")\n\n"
              << whvi::experiment::format_param_report(whvi::experiment::param_report(*model));
    return kOk;
}

int cmd_fwht_bench(int min_log, int max_log, double min_seconds) {
    if (min_log < 1 || max_log > 24 || min_log > max_log) {
        throw whvi::ConfigError("--min-log/--max-log", "need 1 <= min-log <= max-log <= 24");
    }
    std::cout << std::setw(10) << "d" << std::setw(16) << "ns/transform" << std::setw(16)
              << "ns/(d log2 d)" << '\n';
    double first = 0.0, last = 0.0;
    for (int k = min_log; k <= max_log; ++k) {
        const std::size_t d = std::size_t{1} << k;
        const double t = whvi::time_fwht(whvi::HadamardDim(d), min_seconds);
        if (k == min_log) first = t;
        last = t;
        std::cout << std::setw(10) << d << std::setw(16) << std::fixed << std::setprecision(1)
                  << t * 1e9 << std::setw(16) << std::setprecision(3)
                  << t * 1e9 / (static_cast<double>(d) * k) << '\n';
    }
    const double dl = std::ldexp(1.0, max_log - min_log);
    std::cout << "\ntime ratio d=2^" << max_log << " / d=2^" << min_log << ": " << std::setprecision(2)
              << last / first << "  (d log d predicts " << dl * max_log / min_log << ", d^2 predicts "
              << dl * dl << ")\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Walsh-Hadamard variational inference for BNN and random-feature GP regression"};
    app.require_subcommand(1);

    std::string config_path, output, seeds, checkpoint;
    bool quiet = false;
    std::size_t jobs = 1;
    std::size_t n_mc = 0;
    std::optional<std::size_t> input_dim;
    int min_log = 10, max_log = 14;
    double min_seconds = 0.05;

    auto* run = app.add_subcommand("run", "train every seed of a config and write a run directory");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--output", output, "run directory (overrides output_dir)");
    run->add_option("--seed-override", seeds, "comma-separated seeds replacing the config's list");
    run->add_flag("--quiet", quiet, "no progress output");
    run->add_option("--jobs", jobs, "seeds trained concurrently")->check(CLI::PositiveNumber);

    auto* evaluate = app.add_subcommand("evaluate", "score a run checkpoint on its test split");
    evaluate->add_option("--checkpoint", checkpoint, "seed-<s>/checkpoint.json")->required();
    evaluate->add_option("--n-mc", n_mc, "predictive samples (default: config n_mc_eval)");

    auto* params = app.add_subcommand("params", "list trainable tensors and parameter totals");
    params->add_option("--config", config_path, "experiment config (JSON)")->required();
    params->add_option("--input-dim", input_dim, "input dimension (skips loading the dataset)");

    auto* bench = app.add_subcommand("fwht-bench", "time the fast Walsh-Hadamard transform");
    bench->add_option("--min-log", min_log, "smallest log2 d");
    bench->add_option("--max-log", max_log, "largest log2 d");
    bench->add_option("--min-seconds", min_seconds, "timing budget per measurement");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*run) return cmd_run(config_path, output, seeds, quiet, jobs);
        if (*evaluate) return cmd_evaluate(checkpoint, n_mc);
        if (*params) return cmd_params(config_path, input_dim);
        if (*bench) return cmd_fwht_bench(min_log, max_log, min_seconds);
    } catch (const whvi::ConfigError& e) {
        std::cerr << "config error [" << e.field() << "]: " << e.what() << '\n';
        return kConfig;
    } catch (const whvi::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const whvi::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kIo;
    } catch (const whvi::TrainingDiverged& e) {
        std::cerr << "aborted: " << e.what() << '\n';
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kRuntime;
}
