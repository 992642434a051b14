#include "whvi/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>

#include "whvi/error.hpp"
#include "whvi/fwht.hpp"
#include "whvi/synthetic.hpp"

namespace whvi::config {

namespace {

using nlohmann::json;

std::string fold(const std::string& s) {
    std::string out;
    for (char c : s)
        if (c != '_' && c != '-') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// Reads the members of one JSON object and rejects anything it was not asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, where() + "must be an object");
    }

    const json* find(const std::string& key) {
        known_.push_back(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (const json* v = find(key)) out = convert<T>(*v, field(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (std::find(known_.begin(), known_.end(), key) != known_.end()) continue;
            std::string msg = "unknown field '" + field(key) + "'";
            const std::string hint = suggest(key, known_);
            if (!hint.empty()) msg += "; did you mean '" + field(hint) + "'?";
            throw ConfigError(field(key), msg);
        }
    }

    template <typename T>
    static T convert(const json& v, const std::string& field) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw type_error(field, "a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw type_error(field, "a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw type_error(field, "a number");
            return v.get<double>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
                throw type_error(field, "a non-negative integer");
            return v.get<T>();
        } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
            if (!v.is_string()) throw type_error(field, "a path string");
            return std::filesystem::path(v.get<std::string>());
        } else {
            if (!v.is_array()) throw type_error(field, "an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], field + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

private:
    std::string where() const { return path_.empty() ? "" : "'" + path_ + "' "; }

    static ConfigError type_error(const std::string& field, const std::string& expected) {
        return ConfigError(field, "field '" + field + "' must be " + expected);
    }

    const json& j_;
    std::string path_;
    std::vector<std::string> known_;
};

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(field, "field '" + field + "' " + what);
}

nn::Sampling parse_sampling(const std::string& s) {
    if (s == "local_reparam") return nn::Sampling::local_reparam;
    if (s == "reparam") return nn::Sampling::reparam;
    throw ConfigError("training.sampling",
                      "field 'training.sampling' must be 'local_reparam' or 'reparam', got '" + s + "'");
}

std::string sampling_name(nn::Sampling s) {
    switch (s) {
        case nn::Sampling::reparam: return "reparam";
        case nn::Sampling::local_reparam: return "local_reparam";
        case nn::Sampling::mean: return "mean";
    }
    return "?";
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::bnn_whvi: return "bnn-whvi";
        case ModelKind::bnn_meanfield: return "bnn-meanfield";
        case ModelKind::gp_whvi: return "gp-whvi";
        case ModelKind::gp_meanfield_matched: return "gp-meanfield-matched";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& s) {
    for (auto k : {ModelKind::bnn_whvi, ModelKind::bnn_meanfield, ModelKind::gp_whvi,
                   ModelKind::gp_meanfield_matched})
        if (to_string(k) == s) return k;
    throw ConfigError("model", "field 'model' must be one of bnn-whvi, bnn-meanfield, gp-whvi, "
                               "gp-meanfield-matched; got '" + s + "'");
}

std::string suggest(const std::string& key, const std::vector<std::string>& candidates) {
    const std::string k = fold(key);
    std::string best;
    std::size_t best_d = static_cast<std::size_t>(-1);
    for (const auto& c : candidates) {
        const std::size_t d = levenshtein(k, fold(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    const std::size_t limit = std::max<std::size_t>(2, k.size() / 3);
    return best_d <= limit ? best : std::string();
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    ObjectReader root(j, "");

    std::string model = to_string(c.model);
    root.read("model", model);
    c.model = parse_model_kind(model);

    std::string cov = nn::to_string(c.covariance);
    root.read("covariance", cov);
    try {
        c.covariance = nn::parse_covariance_mode(cov);
    } catch (const ConfigError&) {
        throw ConfigError("covariance", "field 'covariance' must be 'diagonal' or 'full', got '" + cov + "'");
    }

    bool fraction_given = false;
    if (const json* d = root.find("dataset")) {
        ObjectReader r(*d, "dataset");
        r.read("name", c.dataset.name);
        r.read("manifest", c.dataset.manifest);
        r.read("synthetic", c.dataset.synthetic);
        r.read("n", c.dataset.n);
        if (const json* v = r.find("noise_std")) c.dataset.noise_std = ObjectReader::convert<double>(*v, "dataset.noise_std");
        r.read("seed", c.dataset.seed);
        if (const json* v = r.find("train_fraction")) {
            c.dataset.train_fraction = ObjectReader::convert<double>(*v, "dataset.train_fraction");
            fraction_given = true;
        }
        r.finish();
    }
    if (c.dataset.is_synthetic() && !fraction_given) c.dataset.train_fraction = 0.8;
    if (c.dataset.manifest.is_relative())
        c.dataset.manifest = std::filesystem::absolute(base_dir / c.dataset.manifest).lexically_normal();

    if (const json* a = root.find("architecture")) {
        ObjectReader r(*a, "architecture");
        Architecture& arch = c.architecture;
        r.read("hidden", arch.hidden);
        r.read("hadamard_dim", arch.hadamard_dim);
        r.read("blocks", arch.blocks);
        r.read("features", arch.features);
        r.read("lengthscale", arch.lengthscale);
        r.read("amplitude", arch.amplitude);
        r.read("initial_noise_fraction", arch.initial_noise_fraction);
        r.read("whvi_s_variance", arch.whvi_s_variance);
        r.read("whvi_mu_std", arch.whvi_mu_std);
        r.read("whvi_sigma", arch.whvi_sigma);
        r.read("meanfield_sigma", arch.meanfield_sigma);
        r.finish();
    }

    if (const json* t = root.find("training")) {
        ObjectReader r(*t, "training");
        train::TrainConfig& tc = c.training;
        r.read("epochs", tc.epochs);
        r.read("batch_size", tc.batch_size);
        r.read("learning_rate", tc.adam.learning_rate);
        r.read("beta1", tc.adam.beta1);
        r.read("beta2", tc.adam.beta2);
        r.read("epsilon", tc.adam.epsilon);
        r.read("n_mc_train", tc.n_mc_train);
        r.read("n_mc_eval", tc.n_mc_eval);
        r.read("kl_warmup_epochs", tc.kl_warmup_epochs);
        r.read("eval_every", tc.eval_every);
        std::string sampling = sampling_name(tc.sampling);
        r.read("sampling", sampling);
        tc.sampling = parse_sampling(sampling);
        r.finish();
    }

    root.read("seeds", c.seeds);
    root.read("output_dir", c.output_dir);
    root.finish();
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<document>", path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

void validate(const ExperimentConfig& c) {
    const DatasetSpec& d = c.dataset;
    require(d.name.empty() != d.synthetic.empty(), "dataset",
            "needs exactly one of 'name' (manifest dataset) or 'synthetic'");
    if (d.is_synthetic()) {
        try {
            data::find_synthetic(d.synthetic);
        } catch (const Error& e) {
            throw ConfigError("dataset.synthetic", e.what());
        }
        require(d.n >= 2, "dataset.n", "must be at least 2");
        if (d.noise_std) require(*d.noise_std >= 0.0, "dataset.noise_std", "must be >= 0");
    }
    require(d.train_fraction > 0.0 && d.train_fraction < 1.0, "dataset.train_fraction",
            "must lie in (0, 1)");

    const Architecture& a = c.architecture;
    require(!a.hidden.empty(), "architecture.hidden", "needs at least one hidden layer");
    for (std::size_t w : a.hidden) require(w >= 1, "architecture.hidden", "widths must be >= 1");
    require(a.hadamard_dim >= 2 && is_power_of_two(a.hadamard_dim), "architecture.hadamard_dim",
            "must be a power of two >= 2");
    require(a.blocks >= 1, "architecture.blocks", "must be >= 1");
    require(a.lengthscale > 0.0, "architecture.lengthscale", "must be > 0");
    require(a.amplitude > 0.0, "architecture.amplitude", "must be > 0");
    require(a.initial_noise_fraction > 0.0 && a.initial_noise_fraction <= 10.0,
            "architecture.initial_noise_fraction", "must lie in (0, 10]");
    require(a.whvi_s_variance >= 0.0, "architecture.whvi_s_variance", "must be >= 0");
    require(a.whvi_mu_std >= 0.0, "architecture.whvi_mu_std", "must be >= 0");
    require(a.whvi_sigma > 0.0, "architecture.whvi_sigma", "must be > 0");
    require(a.meanfield_sigma > 0.0, "architecture.meanfield_sigma", "must be > 0");

    const train::TrainConfig& t = c.training;
    require(t.batch_size >= 1, "training.batch_size", "must be >= 1");
    require(t.adam.learning_rate > 0.0 && t.adam.learning_rate <= 1.0, "training.learning_rate",
            "must lie in (0, 1]");
    require(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0, "training.beta1", "must lie in [0, 1)");
    require(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0, "training.beta2", "must lie in [0, 1)");
    require(t.adam.epsilon > 0.0, "training.epsilon", "must be > 0");
    require(t.n_mc_train >= 1, "training.n_mc_train", "must be >= 1");
    require(t.n_mc_eval >= 1, "training.n_mc_eval", "must be >= 1");

    require(!c.seeds.empty(), "seeds", "needs at least one seed");
    const std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
    require(unique.size() == c.seeds.size(), "seeds", "must not repeat");
    require(!c.output_dir.empty(), "output_dir", "must not be empty");
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json dataset;
    if (c.dataset.is_synthetic()) {
        dataset["synthetic"] = c.dataset.synthetic;
        dataset["n"] = c.dataset.n;
        dataset["noise_std"] = c.dataset.noise_std
                                   ? *c.dataset.noise_std
                                   : data::find_synthetic(c.dataset.synthetic).noise_std;
        dataset["seed"] = c.dataset.seed;
    } else {
        dataset["name"] = c.dataset.name;
        dataset["manifest"] = c.dataset.manifest.generic_string();
    }
    dataset["train_fraction"] = c.dataset.train_fraction;

    const Architecture& a = c.architecture;
    const train::TrainConfig& t = c.training;
    return {{"model", to_string(c.model)},
            {"covariance", nn::to_string(c.covariance)},
            {"dataset", dataset},
            {"architecture",
             {{"hidden", a.hidden},
              {"hadamard_dim", a.hadamard_dim},
              {"blocks", a.blocks},
              {"features", a.features},
              {"lengthscale", a.lengthscale},
              {"amplitude", a.amplitude},
              {"initial_noise_fraction", a.initial_noise_fraction},
              {"whvi_s_variance", a.whvi_s_variance},
              {"whvi_mu_std", a.whvi_mu_std},
              {"whvi_sigma", a.whvi_sigma},
              {"meanfield_sigma", a.meanfield_sigma}}},
            {"training",
             {{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.adam.learning_rate},
              {"beta1", t.adam.beta1},
              {"beta2", t.adam.beta2},
              {"epsilon", t.adam.epsilon},
              {"n_mc_train", t.n_mc_train},
              {"n_mc_eval", t.n_mc_eval},
              {"kl_warmup_epochs", t.kl_warmup_epochs},
              {"eval_every", t.eval_every},
              {"sampling", sampling_name(t.sampling)}}},
            {"seeds", c.seeds},
            {"output_dir", c.output_dir.generic_string()}};
}

}  // namespace whvi::config
