#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irt/icc.hpp"
#include "irt/matrix.hpp"
#include "irt/posterior.hpp"
#include "irt/types.hpp"

namespace irt::synth {

// Ground-truth generator configuration. Default sampling distributions mirror
// the fitting priors: theta,b ~ N(0,1), gamma ~ LogNormal(0,0.5),
// lambda ~ U(0,0.3).
struct GeneratorSpec {
    int n_models = 0;
    int n_items = 0;
    ModelKind kind = ModelKind::OnePL;
    int dim = 1;

    double theta_loc = 0.0, theta_scale = 1.0;
    double b_loc = 0.0, b_scale = 1.0;
    double log_gamma_loc = 0.0, log_gamma_scale = 0.5;
    double lambda_lo = 0.0, lambda_hi = 0.3;
    double log_gamma_model_loc = 0.0, log_gamma_model_scale = 0.5;

    // Deliberately mismatched mode for robustness tests: Student-t(3) theta.
    bool heavy_tailed_theta = false;

    // Confidence distortion c <- c^t; empty = calibrated (t = 1), one entry =
    // shared across models, n entries = per-model.
    std::vector<double> miscalibration;

    // Fraction of items whose response column is inverted (annotation errors).
    double label_noise = 0.0;

    // When set, items are stratified over n_classes x severity_levels cells:
    // difficulty shifts up and the guessing range shrinks with severity.
    std::optional<int> severity_levels;
    int n_classes = 10;

    void validate() const;

    double miscalibration_of(std::size_t model_index) const;
};

// Item metadata implied by a stratified spec (class label + severity).
std::vector<ItemMeta> stratified_item_meta(const GeneratorSpec& spec);

ParameterSet generate_parameters(const GeneratorSpec& spec, std::uint64_t seed);

// Pure Bernoulli draws from the ICC; no label noise.
ResponseMatrix generate_responses(const ParameterSet& params, std::uint64_t seed);

struct SyntheticResponses {
    ResponseMatrix matrix;
    std::vector<std::uint8_t> annotation_error;  // per item; inverted columns
};

// Bernoulli draws plus the spec's label noise: a random fraction of items has
// every cell inverted and is flagged as an annotation error.
SyntheticResponses generate_responses(const ParameterSet& params,
                                      const GeneratorSpec& spec,
                                      std::uint64_t seed);

// Beta(m,n) draws from beta_shape(theta, b), scaled by gamma_model when the
// parameter set carries one, then distorted per the miscalibration exponents.
ConfidenceMatrix generate_confidences(const ParameterSet& params,
                                      const GeneratorSpec& spec,
                                      std::uint64_t seed);

// Class-label predictions consistent with the ICC: correct with probability
// ICC(i,j), otherwise a uniformly random wrong label out of n_classes.
PredictionMatrix generate_predictions(const ParameterSet& params, int n_classes,
                                      std::uint64_t seed);

struct FamilyRecovery {
    double kendall_tau = 0.0;
    double pearson_r = 0.0;
};

struct RecoveryReport {
    // Keyed by family: "theta", "difficulty", "gamma", "lambda", "gamma_model".
    std::map<std::string, FamilyRecovery> families;
};

// Rank and linear correlation between true values and posterior means.
RecoveryReport recovery_report(const ParameterSet& truth,
                               const FittedPosterior& fitted);

// Truth persistence in the posterior JSON schema with zero scales.
void save_truth(const ParameterSet& truth,
                const std::vector<std::string>& model_ids,
                const std::vector<std::string>& item_ids,
                const std::string& path);

struct LoadedTruth {
    ParameterSet params;
    std::vector<std::string> model_ids;
    std::vector<std::string> item_ids;
};

LoadedTruth load_truth(const std::string& path);

// Default identifier scheme for generated data: model_000, item_00000, ...
std::vector<std::string> default_model_ids(int n);
std::vector<std::string> default_item_ids(int m);

}  // namespace irt::synth
