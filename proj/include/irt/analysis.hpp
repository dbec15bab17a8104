#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "irt/matrix.hpp"
#include "irt/posterior.hpp"

namespace irt::analysis {

// Tie-corrected Kendall tau-b; O(n log n) via merge-sort inversion counting.
// Throws on length mismatch and when either input is entirely tied.
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

struct ReliabilityReport {
    double ability_accuracy_tau = 0.0;
    double difficulty_score_tau = 0.0;
    double expected_correct_rmse = 0.0;
    std::vector<double> abilities, accuracies;          // per model
    std::vector<double> difficulties, mean_scores;      // per item
    std::vector<double> expected_correct, actual_correct;  // per model
};

// Ability-vs-accuracy and difficulty-vs-score rank agreement, plus the RMSE
// between expected and actual correct counts per model.
ReliabilityReport reliability_report(const ResponseMatrix& matrix,
                                     const FittedPosterior& fitted);

// cell(i,j) = 2PL probability at posterior means minus the confidence.
struct OverconfidenceMatrix {
    std::vector<std::string> model_ids;
    std::vector<std::string> item_ids;
    std::vector<double> cells;  // n*m, in [-1, 1]

    double cell(std::size_t i, std::size_t j) const {
        return cells[i * item_ids.size() + j];
    }
};

OverconfidenceMatrix overconfidence(const FittedPosterior& fitted,
                                    const ConfidenceMatrix& conf);

struct ErrorFlags {
    std::vector<std::uint8_t> annotation_error;  // per item
    std::vector<std::uint8_t> class_overlap;     // per item
};

struct OverconfidenceBin {
    double lo = 0.0, hi = 0.0;  // bin covers [lo, hi)
    std::size_t count = 0;
    double pct_annotation_error = 0.0;
    double pct_class_overlap = 0.0;
};

// Bins one model's overconfidence values over [-1, 1]; empty bins are absent.
std::vector<OverconfidenceBin> error_rate_by_overconfidence(
    const OverconfidenceMatrix& o, std::size_t model_index,
    const ErrorFlags& flags, double bin_width = 0.1);

enum class ItemParameter { Guessing, Difficulty, Discriminability };

struct ClassSeverityKey {
    std::string class_label;
    int severity = 0;  // 0 when the item has no severity
    bool operator<(const ClassSeverityKey& o) const {
        return class_label != o.class_label ? class_label < o.class_label
                                            : severity < o.severity;
    }
};

// Median posterior mean of the chosen parameter per (class, severity) group.
// Requires a 3PL fit and item metadata on the matrix.
std::map<ClassSeverityKey, double> classwise_median(
    const FittedPosterior& fitted, const std::vector<ItemMeta>& item_meta,
    ItemParameter parameter);

// Top-k item ids by posterior-mean discriminability (descending), optionally
// pre-filtered to difficulty in [window.first, window.second]. Ties break by
// item id.
std::vector<std::string> select_discriminable_subset(
    const FittedPosterior& fitted, std::size_t k,
    std::optional<std::pair<double, double>> difficulty_window = std::nullopt);

// Kendall tau between per-model accuracy on the subset and on the full matrix.
double subset_ranking_fidelity(const ResponseMatrix& matrix,
                               const std::vector<std::string>& subset);

// Expected calibration error over equal-width confidence bins. Samples at bin
// edges go to the higher bin; 1.0 goes to the last bin.
double ece(const std::vector<double>& confidences,
           const std::vector<std::uint8_t>& correct, int n_bins = 15);

struct CalibratedConfidences {
    std::vector<std::string> model_ids;
    std::vector<std::string> item_ids;
    std::vector<double> cells;              // calibrated p-hat, n*m
    std::vector<double> expected_correct;   // per model: sum_j p-hat
};

// Calibrated probability icc_1pl(theta_i, b_j) from a joint-confidence fit's
// abilities and externally supplied (freeze-then-fit) item difficulties.
CalibratedConfidences calibrate_confidences(
    const FittedPosterior& fitted, const ConfidenceMatrix& conf,
    const std::vector<Gaussian>& item_difficulties);

}  // namespace irt::analysis
