#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irt/matrix.hpp"
#include "irt/posterior.hpp"

namespace irt::ensemble {

enum class VotingScheme {
    MajorityVote,
    StrongestModel,
    AbilitySoftmax,
    ProbabilityWeighted,
};

const char* scheme_name(VotingScheme s);

// w_i = e^{theta_i} / sum_k e^{theta_k}; shift-invariant in theta.
std::vector<double> ability_softmax_weights(const std::vector<double>& theta);

struct VoteInputs {
    // Per-model weights; required by StrongestModel (argmax picks the model)
    // and AbilitySoftmax.
    std::vector<double> model_weights;
    // Per-cell success probabilities (n*m row-major); ProbabilityWeighted only.
    std::vector<double> probabilities;
};

struct VoteResult {
    std::vector<std::string> fused_labels;  // per item
    double accuracy = 0.0;
};

// Plurality voting under the scheme's weights; ties break by lexicographically
// smallest label. ProbabilityWeighted uses per-cell weight -log(1 - p) with
// p clamped to <= 1 - 1e-12.
VoteResult vote(const PredictionMatrix& pred, VotingScheme scheme,
                const VoteInputs& inputs);

struct EnsembleReport {
    std::map<std::string, double> accuracies;      // scheme name -> accuracy
    std::map<std::string, std::string> omitted;    // scheme name -> reason
    std::map<std::string, VoteResult> results;
};

// Runs every applicable scheme. Abilities come from the fitted posterior;
// ProbabilityWeighted probabilities default to the fitted ICCs and may be
// overridden by `probs` (n*m row-major, aligned with `pred`).
EnsembleReport ensemble_report(const PredictionMatrix& pred,
                               const FittedPosterior& fitted,
                               const std::optional<std::vector<double>>& probs =
                                   std::nullopt);

}  // namespace irt::ensemble
