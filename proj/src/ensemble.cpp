#include "irt/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace irt::ensemble {

const char* scheme_name(VotingScheme s) {
    switch (s) {
        case VotingScheme::MajorityVote: return "majority_vote";
        case VotingScheme::StrongestModel: return "strongest_model";
        case VotingScheme::AbilitySoftmax: return "ability_softmax";
        case VotingScheme::ProbabilityWeighted: return "probability_weighted";
    }
    throw std::logic_error("scheme_name: bad enum value");
}

std::vector<double> ability_softmax_weights(const std::vector<double>& theta) {
    if (theta.empty())
        throw std::invalid_argument("ability_softmax_weights: empty ability list");
    double max_theta = theta[0];
    for (double t : theta) {
        if (!std::isfinite(t))
            throw std::invalid_argument("ability_softmax_weights: non-finite ability");
        max_theta = std::max(max_theta, t);
    }
    std::vector<double> w(theta.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        w[i] = std::exp(theta[i] - max_theta);
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

namespace {

double row_accuracy(const PredictionMatrix& pred, std::size_t i) {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < pred.n_items(); ++j)
        if (pred.predicted(i, j) == pred.truth()[j]) ++hits;
    return double(hits) / double(pred.n_items());
}

// Plurality with per-(model,item) weights; ties go to the smallest label.
VoteResult weighted_plurality(const PredictionMatrix& pred,
                              const std::function<double(std::size_t, std::size_t)>& weight) {
    VoteResult res;
    res.fused_labels.resize(pred.n_items());
    std::size_t hits = 0;
    std::map<std::string, double> tally;
    for (std::size_t j = 0; j < pred.n_items(); ++j) {
        tally.clear();
        for (std::size_t i = 0; i < pred.n_models(); ++i)
            tally[pred.predicted(i, j)] += weight(i, j);
        const std::string* best = nullptr;
        double best_w = -1.0;
        for (const auto& [label, w] : tally) {
            if (w > best_w) {  // map order makes the first maximum the smallest label
                best_w = w;
                best = &label;
            }
        }
        res.fused_labels[j] = *best;
        if (*best == pred.truth()[j]) ++hits;
    }
    res.accuracy = double(hits) / double(pred.n_items());
    return res;
}

}  // namespace

VoteResult vote(const PredictionMatrix& pred, VotingScheme scheme, const VoteInputs& inputs) {
    const std::size_t n = pred.n_models(), m = pred.n_items();
    switch (scheme) {
        case VotingScheme::MajorityVote:
            return weighted_plurality(pred, [](std::size_t, std::size_t) { return 1.0; });
        case VotingScheme::StrongestModel: {
            if (inputs.model_weights.size() != n)
                throw std::invalid_argument("vote: StrongestModel needs one weight per model");
            std::size_t best = 0;
            for (std::size_t i = 1; i < n; ++i) {
                if (inputs.model_weights[i] > inputs.model_weights[best] ||
                    (inputs.model_weights[i] == inputs.model_weights[best] &&
                     pred.model_ids()[i] < pred.model_ids()[best]))
                    best = i;
            }
            VoteResult res;
            res.fused_labels.resize(m);
            for (std::size_t j = 0; j < m; ++j) res.fused_labels[j] = pred.predicted(best, j);
            res.accuracy = row_accuracy(pred, best);
            return res;
        }
        case VotingScheme::AbilitySoftmax: {
            if (inputs.model_weights.size() != n)
                throw std::invalid_argument("vote: AbilitySoftmax needs one weight per model");
            const auto& w = inputs.model_weights;
            return weighted_plurality(pred,
                                      [&w](std::size_t i, std::size_t) { return w[i]; });
        }
        case VotingScheme::ProbabilityWeighted: {
            if (inputs.probabilities.size() != n * m)
                throw std::invalid_argument(
                    "vote: ProbabilityWeighted needs an n*m probability matrix");
            for (double p : inputs.probabilities)
                if (!(p >= 0.0 && p <= 1.0))
                    throw std::invalid_argument("vote: probability outside [0,1]");
            const auto& probs = inputs.probabilities;
            return weighted_plurality(pred, [&probs, m](std::size_t i, std::size_t j) {
                const double p = std::min(probs[i * m + j], 1.0 - 1e-12);
                return -std::log1p(-p);
            });
        }
    }
    throw std::logic_error("vote: bad scheme");
}

EnsembleReport ensemble_report(const PredictionMatrix& pred, const FittedPosterior& fitted,
                               const std::optional<std::vector<double>>& probs) {
    fitted.validate();
    const std::size_t n = pred.n_models(), m = pred.n_items();
    std::vector<double> abilities(n);
    std::vector<std::size_t> model_idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        model_idx[i] = fitted.model_index(pred.model_ids()[i]);  // throws on mismatch
        abilities[i] = fitted.theta_mean(model_idx[i]);
    }

    EnsembleReport report;
    VoteInputs inputs;
    inputs.model_weights = ability_softmax_weights(abilities);

    auto run = [&](VotingScheme s) {
        VoteResult r = vote(pred, s, inputs);
        report.accuracies[scheme_name(s)] = r.accuracy;
        report.results[scheme_name(s)] = std::move(r);
    };
    run(VotingScheme::MajorityVote);
    run(VotingScheme::StrongestModel);
    run(VotingScheme::AbilitySoftmax);

    if (probs) {
        if (probs->size() != n * m)
            throw std::invalid_argument("ensemble_report: probability matrix must be n*m");
        inputs.probabilities = *probs;
        run(VotingScheme::ProbabilityWeighted);
        return report;
    }
    // Default probabilities from the fitted ICCs; requires every item in the fit.
    bool all_items_known = true;
    std::vector<std::size_t> item_idx(m);
    for (std::size_t j = 0; j < m; ++j) {
        bool found = false;
        for (std::size_t q = 0; q < fitted.item_ids.size(); ++q)
            if (fitted.item_ids[q] == pred.item_ids()[j]) {
                item_idx[j] = q;
                found = true;
                break;
            }
        if (!found) {
            all_items_known = false;
            break;
        }
    }
    if (!all_items_known) {
        report.omitted[scheme_name(VotingScheme::ProbabilityWeighted)] =
            "prediction items missing from the fitted posterior; supply probabilities "
            "explicitly";
        return report;
    }
    inputs.probabilities.resize(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            inputs.probabilities[i * m + j] =
                fitted.response_probability(model_idx[i], item_idx[j]);
    run(VotingScheme::ProbabilityWeighted);
    return report;
}

}  // namespace irt::ensemble
