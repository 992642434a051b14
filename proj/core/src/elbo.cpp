#include "whvi/error.hpp"
#include "whvi/models.hpp"

namespace whvi::nn {

std::vector<ad::Parameter*> Regressor::parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& group : parameter_groups())
        out.insert(out.end(), group.parameters.begin(), group.parameters.end());
    return out;
}

std::size_t Regressor::parameter_count() {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
}

ElboTerms elbo(Regressor& model, ad::Tape& tape, const Tensor& x, const Tensor& y,
               std::size_t dataset_size, std::size_t n_mc, NoiseStream& noise, Sampling mode,
               double kl_weight) {
    const std::size_t b = x.rows();
    if (b == 0 || b > dataset_size) {
        throw Error("minibatch of " + std::to_string(b) + " rows for a dataset of " +
                    std::to_string(dataset_size));
    }
    if (n_mc == 0) throw Error("elbo needs n_mc >= 1");
    // Non-finite values are re-tagged with the ELBO term they came from.
    ad::Variable data_fit;
    try {
        ad::Variable ll = model.log_likelihood(tape, x, y, noise, mode);
        for (std::size_t s = 1; s < n_mc; ++s)
            ll = ad::add(ll, model.log_likelihood(tape, x, y, noise, mode));
        const double rescale = static_cast<double>(dataset_size) /
                               (static_cast<double>(b) * static_cast<double>(n_mc));
        data_fit = ad::scale(ll, rescale);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError("data_fit", e.what());
    }
    ad::Variable kl;
    try {
        kl = model.kl(tape);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError("kl", e.what());
    }
    try {
        return {ad::sub(data_fit, ad::scale(kl, kl_weight)), data_fit, kl};
    } catch (const NonFiniteError& e) {
        throw NonFiniteError("elbo", e.what());
    }
}

}  // namespace whvi::nn
