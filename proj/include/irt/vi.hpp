#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "irt/matrix.hpp"
#include "irt/posterior.hpp"
#include "irt/types.hpp"

namespace irt::vi {

struct Convergence {
    int window = 50;
    double rel_tol = 1e-5;
};

struct FitConfig {
    std::uint64_t seed = 42;
    int epochs = 1500;
    double learning_rate = 0.1;
    int mc_samples = 1;
    std::optional<Convergence> convergence;  // fixed-epoch when absent
    int dim = 1;                             // MultiDim2PL only

    void validate() const;
};

struct GaussianPrior {
    double loc = 0.0;
    double scale = 1.0;
};

struct GammaPrior {
    double shape = 1.0;
    double rate = 1.0;
};

// Hyperpriors per parameter family: mu ~ Normal, tau ~ Gamma. The guessing
// parameter has a fixed Uniform[0,1] prior and no hyperparameters.
struct FamilyPrior {
    GaussianPrior mean;
    GammaPrior precision;
};

struct HyperPriors {
    FamilyPrior theta;
    FamilyPrior difficulty;
    FamilyPrior log_gamma;

    void validate() const;
};

class FitError : public std::runtime_error {
  public:
    FitError(const std::string& msg, int step)
        : std::runtime_error(msg), step_(step) {}
    int step() const { return step_; }

  private:
    int step_;
};

// Mean-field SVI fit of a discrete-response kind (1PL/2PL/3PL/MD2PL).
// Deterministic given (matrix, kind, config, priors). Refuses all-zero or
// all-one matrices. `elbo_trace`, when given, receives one entry per step.
FittedPosterior fit(const ResponseMatrix& matrix, ModelKind kind,
                    const FitConfig& config, const HyperPriors& priors = {},
                    std::vector<double>* elbo_trace = nullptr);

// Joint confidence-response model: Bernoulli(icc_1pl(theta_i, b_j)) for the
// responses times Beta(m,n) for the confidences, with a per-model gamma
// scaling the confidence shapes: m = exp(gamma_i (theta_i - b_j)/2), n = 1/m.
FittedPosterior fit_joint(const ResponseMatrix& matrix,
                          const ConfidenceMatrix& conf, const FitConfig& config,
                          const HyperPriors& priors = {},
                          std::vector<double>* elbo_trace = nullptr);

// Continuous Beta model fitted on confidences alone (gamma fixed at 1).
FittedPosterior fit_beta(const ConfidenceMatrix& conf, const FitConfig& config,
                         const HyperPriors& priors = {},
                         std::vector<double>* elbo_trace = nullptr);

// Freeze-then-fit: theta and gamma_model held at the frozen posterior's
// means; only the new items' difficulties are optimized against the
// confidence likelihood. Every model in conf_new must exist in `frozen`.
std::vector<Gaussian> fit_difficulty_from_confidences(
    const FittedPosterior& frozen, const ConfidenceMatrix& conf_new,
    const FitConfig& config, std::vector<double>* elbo_trace = nullptr);

// Monte-Carlo ELBO estimate at a given posterior via reparameterized samples.
// `conf` is required for the Beta/joint kinds, `matrix` for all others.
double elbo_estimate(const FittedPosterior& posterior,
                     const ResponseMatrix* matrix, const ConfidenceMatrix* conf,
                     const HyperPriors& priors, int mc_samples,
                     std::uint64_t seed);

// Compares the analytic reparameterized ELBO gradient against central finite
// differences under common random numbers; returns the worst deviation
// |g_a - g_fd| / max(1, |g_a|, |g_fd|) over all variational parameters.
double gradient_check(const FittedPosterior& posterior,
                      const ResponseMatrix* matrix, const ConfidenceMatrix* conf,
                      const HyperPriors& priors, std::uint64_t seed,
                      double fd_step = 1e-5);

}  // namespace irt::vi
