#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irt/types.hpp"

namespace irt {

struct FitMeta {
    std::uint64_t seed = 0;
    int epochs = 0;  // steps actually run
    double learning_rate = 0.0;
    int mc_samples = 0;
    double final_elbo = 0.0;
    // All-correct models / never-correct items; fitted anyway, flagged here.
    std::vector<std::string> degenerate_models;
    std::vector<std::string> degenerate_items;
};

// Mean-field variational posterior. Every block is a Gaussian in
// unconstrained space: theta/difficulty as-is, gamma in log space,
// lambda in logit space, precisions in log space.
struct FittedPosterior {
    ModelKind kind = ModelKind::OnePL;
    int dim = 1;
    std::vector<std::string> model_ids;
    std::vector<std::string> item_ids;

    std::vector<Gaussian> theta;            // n*dim
    std::vector<Gaussian> difficulty;       // m*dim
    std::vector<Gaussian> log_gamma;        // m*dim (2PL/3PL/MD2PL)
    std::vector<Gaussian> logit_lambda;     // m (3PL)
    std::vector<Gaussian> log_gamma_model;  // n (joint confidence)

    struct HyperBlock {
        Gaussian mu;
        Gaussian log_tau;
    };
    std::optional<HyperBlock> hyper_theta, hyper_difficulty, hyper_gamma;

    FitMeta fit;

    std::size_t n_models() const { return model_ids.size(); }
    std::size_t n_items() const { return item_ids.size(); }

    // Posterior means in natural space. Log-normal blocks use
    // exp(loc + scale^2/2); the logit-normal mean is integrated numerically.
    double theta_mean(std::size_t i, int d = 0) const;
    double difficulty_mean(std::size_t j, int d = 0) const;
    double gamma_mean(std::size_t j, int d = 0) const;
    double lambda_mean(std::size_t j) const;
    double gamma_model_mean(std::size_t i) const;
    double tau_mean(const HyperBlock& h) const;

    // ICC at the posterior means; the Beta/joint kinds use the response curve.
    double response_probability(std::size_t i, std::size_t j) const;

    std::size_t model_index(const std::string& id) const;  // throws if unknown
    std::size_t item_index(const std::string& id) const;

    // Parameter blocks present must match the kind; all scales positive.
    void validate() const;
};

// Single JSON document; see README for the schema. Round-trips are lossless.
void save_posterior(const FittedPosterior& p, const std::string& path);
FittedPosterior load_posterior(const std::string& path);

}  // namespace irt
