#include "irt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "irt/icc.hpp"
#include "irt/numerics.hpp"

namespace irt::analysis {

namespace {

// Counts strict inversions by merge sort; ties are not inversions.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf) {
    const std::size_t n = v.size();
    std::uint64_t count = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
            const std::size_t mid = lo + width;
            const std::size_t hi = std::min(lo + 2 * width, n);
            std::size_t a = lo, b = mid, out = lo;
            while (a < mid && b < hi) {
                if (v[b] < v[a]) {
                    count += mid - a;
                    buf[out++] = v[b++];
                } else {
                    buf[out++] = v[a++];
                }
            }
            while (a < mid) buf[out++] = v[a++];
            while (b < hi) buf[out++] = v[b++];
            std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
        }
    }
    return count;
}

std::uint64_t tie_pairs(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::uint64_t pairs = 0;
    std::size_t run = 1;
    for (std::size_t k = 1; k <= v.size(); ++k) {
        if (k < v.size() && v[k] == v[k - 1]) {
            ++run;
        } else {
            pairs += std::uint64_t(run) * (run - 1) / 2;
            run = 1;
        }
    }
    return pairs;
}

}  // namespace

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("kendall_tau: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 observations");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("kendall_tau: non-finite input");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("kendall_tau: non-finite input");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });

    const std::uint64_t n0 = std::uint64_t(n) * (n - 1) / 2;
    std::uint64_t n1 = 0, n3 = 0;
    {
        std::size_t xrun = 1, xyrun = 1;
        for (std::size_t k = 1; k <= n; ++k) {
            const bool same_x = k < n && x[order[k]] == x[order[k - 1]];
            const bool same_xy = same_x && y[order[k]] == y[order[k - 1]];
            if (same_x) ++xrun;
            if (same_xy) {
                ++xyrun;
            } else {
                n3 += std::uint64_t(xyrun) * (xyrun - 1) / 2;
                xyrun = 1;
            }
            if (!same_x) {
                n1 += std::uint64_t(xrun) * (xrun - 1) / 2;
                xrun = 1;
            }
        }
    }
    const std::uint64_t n2 = tie_pairs(y);
    if (n0 == n1 || n0 == n2)
        throw std::invalid_argument("kendall_tau: an input is entirely tied; tau-b undefined");

    std::vector<double> ysorted(n), buf(n);
    for (std::size_t k = 0; k < n; ++k) ysorted[k] = y[order[k]];
    const std::uint64_t swaps = count_inversions(ysorted, buf);

    // concordant minus discordant
    const double num = double(n0) - double(n1) - double(n2) + double(n3) - 2.0 * double(swaps);
    return num / std::sqrt(double(n0 - n1) * double(n0 - n2));
}

ReliabilityReport reliability_report(const ResponseMatrix& matrix,
                                     const FittedPosterior& fitted) {
    fitted.validate();
    if (fitted.kind == ModelKind::MultiDim2PL)
        throw std::invalid_argument(
            "reliability_report: defined for unidimensional kinds only");
    if (matrix.model_ids() != fitted.model_ids || matrix.item_ids() != fitted.item_ids)
        throw std::invalid_argument(
            "reliability_report: matrix and posterior identifiers do not align");

    const std::size_t n = matrix.n_models(), m = matrix.n_items();
    ReliabilityReport r;
    r.abilities.resize(n);
    r.accuracies.resize(n);
    r.expected_correct.resize(n);
    r.actual_correct.resize(n);
    r.difficulties.resize(m);
    r.mean_scores.resize(m);

    for (std::size_t j = 0; j < m; ++j) {
        r.difficulties[j] = fitted.difficulty_mean(j);
        r.mean_scores[j] = matrix.mean_item_score(j);
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r.abilities[i] = fitted.theta_mean(i);
        r.accuracies[i] = matrix.accuracy(i);
        double expected = 0.0;
        for (std::size_t j = 0; j < m; ++j) expected += fitted.response_probability(i, j);
        r.expected_correct[i] = expected;
        r.actual_correct[i] = r.accuracies[i] * double(m);
        const double d = expected - r.actual_correct[i];
        sq += d * d;
    }
    r.expected_correct_rmse = std::sqrt(sq / double(n));
    r.ability_accuracy_tau = kendall_tau(r.abilities, r.accuracies);
    r.difficulty_score_tau = kendall_tau(r.difficulties, r.mean_scores);
    return r;
}

OverconfidenceMatrix overconfidence(const FittedPosterior& fitted,
                                    const ConfidenceMatrix& conf) {
    fitted.validate();
    if (fitted.kind != ModelKind::TwoPL)
        throw std::invalid_argument("overconfidence: requires a 2pl fit, got " +
                                    std::string(kind_name(fitted.kind)));
    if (conf.model_ids() != fitted.model_ids || conf.item_ids() != fitted.item_ids)
        throw std::invalid_argument(
            "overconfidence: confidence matrix and posterior identifiers do not align");

    const std::size_t n = conf.n_models(), m = conf.n_items();
    OverconfidenceMatrix o;
    o.model_ids = conf.model_ids();
    o.item_ids = conf.item_ids();
    o.cells.resize(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double th = fitted.theta_mean(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double p =
                icc_2pl(th, fitted.difficulty_mean(j), fitted.gamma_mean(j));
            o.cells[i * m + j] = p - conf.cell(i, j);
        }
    }
    return o;
}

std::vector<OverconfidenceBin> error_rate_by_overconfidence(
    const OverconfidenceMatrix& o, std::size_t model_index, const ErrorFlags& flags,
    double bin_width) {
    if (!(bin_width > 0.0 && bin_width <= 2.0))
        throw std::invalid_argument("error_rate_by_overconfidence: bin_width must lie in (0,2]");
    if (model_index >= o.model_ids.size())
        throw std::out_of_range("error_rate_by_overconfidence: model index out of range");
    const std::size_t m = o.item_ids.size();
    if (flags.annotation_error.size() != m || flags.class_overlap.size() != m)
        throw std::invalid_argument(
            "error_rate_by_overconfidence: flags must cover every item");

    const int n_bins = static_cast<int>(std::ceil(2.0 / bin_width));
    std::vector<std::size_t> count(n_bins, 0), err(n_bins, 0), overlap(n_bins, 0);
    for (std::size_t j = 0; j < m; ++j) {
        const double v = o.cell(model_index, j);
        int idx = static_cast<int>(std::floor((v + 1.0) / bin_width));
        idx = std::clamp(idx, 0, n_bins - 1);
        ++count[idx];
        if (flags.annotation_error[j]) ++err[idx];
        if (flags.class_overlap[j]) ++overlap[idx];
    }
    std::vector<OverconfidenceBin> bins;
    for (int k = 0; k < n_bins; ++k) {
        if (count[k] == 0) continue;  // empty bins are absent, not zero
        OverconfidenceBin b;
        b.lo = -1.0 + k * bin_width;
        b.hi = std::min(1.0, b.lo + bin_width);
        b.count = count[k];
        b.pct_annotation_error = 100.0 * double(err[k]) / double(count[k]);
        b.pct_class_overlap = 100.0 * double(overlap[k]) / double(count[k]);
        bins.push_back(b);
    }
    return bins;
}

std::map<ClassSeverityKey, double> classwise_median(const FittedPosterior& fitted,
                                                    const std::vector<ItemMeta>& item_meta,
                                                    ItemParameter parameter) {
    fitted.validate();
    if (fitted.kind != ModelKind::ThreePL)
        throw std::invalid_argument("classwise_median: requires a 3pl fit, got " +
                                    std::string(kind_name(fitted.kind)));
    if (item_meta.size() != fitted.n_items())
        throw std::invalid_argument("classwise_median: metadata must cover every item");

    std::map<ClassSeverityKey, std::vector<double>> groups;
    for (std::size_t j = 0; j < fitted.n_items(); ++j) {
        double v = 0.0;
        switch (parameter) {
            case ItemParameter::Guessing: v = fitted.lambda_mean(j); break;
            case ItemParameter::Difficulty: v = fitted.difficulty_mean(j); break;
            case ItemParameter::Discriminability: v = fitted.gamma_mean(j); break;
        }
        groups[{item_meta[j].class_label, item_meta[j].severity.value_or(0)}].push_back(v);
    }
    std::map<ClassSeverityKey, double> out;
    for (auto& [key, values] : groups) out[key] = median(std::move(values));
    return out;
}

std::vector<std::string> select_discriminable_subset(
    const FittedPosterior& fitted, std::size_t k,
    std::optional<std::pair<double, double>> difficulty_window) {
    fitted.validate();
    if (!has_item_gamma(fitted.kind))
        throw std::invalid_argument("select_discriminable_subset: kind " +
                                    std::string(kind_name(fitted.kind)) +
                                    " has no discriminability parameter");
    if (difficulty_window && fitted.dim != 1)
        throw std::invalid_argument(
            "select_discriminable_subset: difficulty window requires a unidimensional kind");

    struct Scored {
        double score;
        std::string id;
    };
    std::vector<Scored> pool;
    for (std::size_t j = 0; j < fitted.n_items(); ++j) {
        if (difficulty_window) {
            const double b = fitted.difficulty_mean(j);
            if (b < difficulty_window->first || b > difficulty_window->second) continue;
        }
        double score;
        if (fitted.dim == 1) {
            score = fitted.gamma_mean(j);
        } else {
            double s2 = 0.0;
            for (int d = 0; d < fitted.dim; ++d) {
                const double g = fitted.gamma_mean(j, d);
                s2 += g * g;
            }
            score = std::sqrt(s2);
        }
        pool.push_back({score, fitted.item_ids[j]});
    }
    if (k > pool.size())
        throw std::invalid_argument("select_discriminable_subset: k = " + std::to_string(k) +
                                    " exceeds the " + std::to_string(pool.size()) +
                                    " items after filtering");
    std::sort(pool.begin(), pool.end(), [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[i].id);
    return out;
}

double subset_ranking_fidelity(const ResponseMatrix& matrix,
                               const std::vector<std::string>& subset) {
    if (subset.empty())
        throw std::invalid_argument("subset_ranking_fidelity: subset must be non-empty");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < matrix.n_items(); ++j) index[matrix.item_ids()[j]] = j;
    std::vector<std::size_t> cols;
    std::unordered_set<std::string> seen;
    for (const auto& id : subset) {
        const auto it = index.find(id);
        if (it == index.end())
            throw std::invalid_argument("subset_ranking_fidelity: unknown item id '" + id + "'");
        if (!seen.insert(id).second)
            throw std::invalid_argument("subset_ranking_fidelity: duplicate item id '" + id +
                                        "'");
        cols.push_back(it->second);
    }
    const std::size_t n = matrix.n_models();
    std::vector<double> sub_acc(n), full_acc(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t ones = 0;
        for (std::size_t c : cols) ones += matrix.cell(i, c);
        sub_acc[i] = double(ones) / double(cols.size());
        full_acc[i] = matrix.accuracy(i);
    }
    return kendall_tau(sub_acc, full_acc);
}

double ece(const std::vector<double>& confidences, const std::vector<std::uint8_t>& correct,
           int n_bins) {
    if (confidences.size() != correct.size())
        throw std::invalid_argument("ece: confidence and correctness lengths differ");
    if (confidences.empty()) throw std::invalid_argument("ece: empty input");
    if (n_bins < 1) throw std::invalid_argument("ece: n_bins must be >= 1");
    for (double c : confidences)
        if (!(c >= 0.0 && c <= 1.0))
            throw std::invalid_argument("ece: confidence outside [0,1]");

    std::vector<double> sum_conf(n_bins, 0.0), sum_acc(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t k = 0; k < confidences.size(); ++k) {
        int idx = static_cast<int>(std::floor(confidences[k] * n_bins));
        idx = std::min(idx, n_bins - 1);  // 1.0 falls into the last bin
        ++count[idx];
        sum_conf[idx] += confidences[k];
        sum_acc[idx] += correct[k] ? 1.0 : 0.0;
    }
    const double total = double(confidences.size());
    double e = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        if (count[b] == 0) continue;
        const double avg_conf = sum_conf[b] / double(count[b]);
        const double avg_acc = sum_acc[b] / double(count[b]);
        e += (double(count[b]) / total) * std::abs(avg_acc - avg_conf);
    }
    return e;
}

CalibratedConfidences calibrate_confidences(const FittedPosterior& fitted,
                                            const ConfidenceMatrix& conf,
                                            const std::vector<Gaussian>& item_difficulties) {
    fitted.validate();
    if (fitted.kind != ModelKind::JointConfidence)
        throw std::invalid_argument("calibrate_confidences: requires a joint_confidence fit");
    if (item_difficulties.size() != conf.n_items())
        throw std::invalid_argument(
            "calibrate_confidences: a difficulty is required for every item (" +
            std::to_string(item_difficulties.size()) + " given, " +
            std::to_string(conf.n_items()) + " items)");

    const std::size_t n = conf.n_models(), m = conf.n_items();
    CalibratedConfidences out;
    out.model_ids = conf.model_ids();
    out.item_ids = conf.item_ids();
    out.cells.resize(n * m);
    out.expected_correct.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double th = fitted.theta_mean(fitted.model_index(conf.model_ids()[i]));
        double expected = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double p = icc_1pl(th, item_difficulties[j].loc);
            out.cells[i * m + j] = p;
            expected += p;
        }
        out.expected_correct[i] = expected;
    }
    return out;
}

}  // namespace irt::analysis
