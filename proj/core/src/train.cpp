#include "whvi/train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "whvi/error.hpp"

namespace whvi::train {

EvalResult evaluate(nn::Regressor& model, const Tensor& x, const Tensor& y, std::size_t n_mc,
                    NoiseStream& noise) {
    const Tensor samples = model.predict_samples(x, n_mc, noise);
    const Tensor yy = y.reshaped(Shape{y.rows(), model.output_dim()});
    return {metrics::rmse(samples, yy),
            metrics::mnll(samples, yy, model.observation_log_variance())};
}

double kl_weight_at(const TrainConfig& config, std::size_t epoch) {
    if (config.kl_warmup_epochs == 0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch + 1) /
                             static_cast<double>(config.kl_warmup_epochs));
}

std::vector<metrics::MetricsRecord> train_loop(nn::Regressor& model, const data::Dataset& ds,
                                               const TrainConfig& config, std::uint64_t seed,
                                               const EpochCallback& on_epoch) {
    if (!ds.is_split()) throw Error("train_loop needs a dataset with a train/test split");
    if (config.batch_size == 0) throw Error("batch size must be positive");
    if (config.n_mc_train == 0 || config.n_mc_eval == 0) throw Error("n_mc must be positive");
    std::vector<metrics::MetricsRecord> records;
    if (config.epochs == 0) return records;

    const Tensor x_train = ds.train_x();
    const Tensor y_train = ds.train_y();
    const Tensor x_test = ds.test_x();
    const Tensor y_test = ds.test_y();
    const std::size_t n = x_train.rows();
    const std::size_t parameter_count = model.parameter_count();

    optim::Adam adam(model.parameters(), config.adam);
    NoiseStream noise(derive_seed(seed, 11));
    std::mt19937_64 shuffle_rng(derive_seed(seed, 12));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    const auto start = std::chrono::steady_clock::now();
    EvalResult last_eval{};
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double kl_weight = kl_weight_at(config, epoch);
        double sum_elbo = 0.0, sum_fit = 0.0, sum_kl = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batches) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            const Tensor xb = data::gather_rows(x_train, rows);
            const Tensor yb = data::gather_rows(y_train, rows);
            adam.zero_grad();
            ad::Tape tape;
            try {
                const nn::ElboTerms terms = nn::elbo(model, tape, xb, yb, n, config.n_mc_train,
                                                     noise, config.sampling, kl_weight);
                std::string term = "loss";
                try {
                    const ad::Variable loss =
                        ad::scale(terms.elbo, -1.0 / static_cast<double>(n));
                    term = "gradient";
                    tape.backward(loss);
                } catch (const NonFiniteError& e) {
                    throw NonFiniteError(term, e.what());
                }
                sum_elbo += terms.elbo.value().item();
                sum_fit += terms.data_fit.value().item();
                sum_kl += terms.kl.value().item();
            } catch (const NonFiniteError& e) {
                throw TrainingDiverged(epoch + 1, batches + 1, e.op(),
                                       "training diverged at epoch " + std::to_string(epoch + 1) +
                                           ", batch " + std::to_string(batches + 1) + " in " +
                                           e.op() + ": " + e.what());
            }
            adam.step();
        }

        const bool last = epoch + 1 == config.epochs;
        if (last || (config.eval_every != 0 && epoch % config.eval_every == 0)) {
            NoiseStream eval_noise(derive_seed(seed, 1000 + epoch));
            last_eval = evaluate(model, x_test, y_test, config.n_mc_eval, eval_noise);
        }

        metrics::MetricsRecord r;
        r.dataset = ds.name;
        r.model = model.kind();
        r.seed = seed;
        r.epoch = epoch + 1;
        const double nb = static_cast<double>(batches);
        r.elbo = sum_elbo / nb;
        r.data_fit = sum_fit / nb;
        r.kl = sum_kl / nb;
        r.kl_weight = kl_weight;
        r.test_rmse = last_eval.rmse;
        r.test_mnll = last_eval.mnll;
        r.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        r.parameter_count = parameter_count;
        records.push_back(r);
        if (on_epoch) on_epoch(r);
    }
    return records;
}

}  // namespace whvi::train
