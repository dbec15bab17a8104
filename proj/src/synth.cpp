#include "irt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "irt/analysis.hpp"
#include "irt/numerics.hpp"
#include "irt/rng.hpp"

namespace irt::synth {

using nlohmann::json;

void GeneratorSpec::validate() const {
    if (n_models < 1 || n_items < 1)
        throw std::invalid_argument("GeneratorSpec: n_models and n_items must be >= 1");
    if (dim < 1) throw std::invalid_argument("GeneratorSpec: dim must be >= 1");
    if (kind != ModelKind::MultiDim2PL && dim != 1)
        throw std::invalid_argument("GeneratorSpec: only MultiDim2PL may have dim > 1");
    if (!(theta_scale > 0.0) || !(b_scale > 0.0) || !(log_gamma_scale > 0.0) ||
        !(log_gamma_model_scale > 0.0))
        throw std::invalid_argument("GeneratorSpec: scales must be positive");
    if (!(lambda_lo >= 0.0 && lambda_lo <= lambda_hi && lambda_hi <= 1.0))
        throw std::invalid_argument("GeneratorSpec: lambda range must satisfy 0 <= lo <= hi <= 1");
    if (!miscalibration.empty() && miscalibration.size() != 1 &&
        miscalibration.size() != static_cast<std::size_t>(n_models))
        throw std::invalid_argument(
            "GeneratorSpec: miscalibration must have 1 or n_models entries");
    for (double t : miscalibration)
        if (!(t > 0.0)) throw std::invalid_argument("GeneratorSpec: miscalibration t must be > 0");
    if (!(label_noise >= 0.0 && label_noise < 1.0))
        throw std::invalid_argument("GeneratorSpec: label_noise must lie in [0,1)");
    if (severity_levels && *severity_levels < 1)
        throw std::invalid_argument("GeneratorSpec: severity_levels must be >= 1");
    if (severity_levels && *severity_levels > 5)
        throw std::invalid_argument("GeneratorSpec: severity_levels must be <= 5");
    if (n_classes < 1) throw std::invalid_argument("GeneratorSpec: n_classes must be >= 1");
}

double GeneratorSpec::miscalibration_of(std::size_t model_index) const {
    if (miscalibration.empty()) return 1.0;
    if (miscalibration.size() == 1) return miscalibration[0];
    return miscalibration[model_index];
}

std::vector<std::string> default_model_ids(int n) {
    std::vector<std::string> ids(n);
    char buf[32];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "model_%03d", i);
        ids[i] = buf;
    }
    return ids;
}

std::vector<std::string> default_item_ids(int m) {
    std::vector<std::string> ids(m);
    char buf[32];
    for (int j = 0; j < m; ++j) {
        std::snprintf(buf, sizeof(buf), "item_%05d", j);
        ids[j] = buf;
    }
    return ids;
}

std::vector<ItemMeta> stratified_item_meta(const GeneratorSpec& spec) {
    spec.validate();
    if (!spec.severity_levels)
        throw std::invalid_argument("stratified_item_meta: spec has no severity_levels");
    const int levels = *spec.severity_levels;
    std::vector<ItemMeta> meta(spec.n_items);
    char buf[32];
    for (int j = 0; j < spec.n_items; ++j) {
        const int cell = j % (spec.n_classes * levels);
        std::snprintf(buf, sizeof(buf), "class_%02d", cell % spec.n_classes);
        meta[j].class_label = buf;
        meta[j].severity = 1 + cell / spec.n_classes;
    }
    return meta;
}

ParameterSet generate_parameters(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ParameterSet p;
    p.kind = spec.kind;
    p.dim = spec.dim;

    const std::size_t nd = std::size_t(spec.n_models) * spec.dim;
    p.theta.resize(nd);
    for (auto& t : p.theta) {
        if (spec.heavy_tailed_theta) {
            // Student-t with 3 dof: N / sqrt(chi2_3 / 3)
            const double z = rng.normal();
            const double chi2 = 2.0 * rng.gamma(1.5);
            t = spec.theta_loc + spec.theta_scale * z / std::sqrt(chi2 / 3.0);
        } else {
            t = rng.normal(spec.theta_loc, spec.theta_scale);
        }
    }

    std::vector<double> class_shrink;  // stratified mode only
    std::vector<ItemMeta> meta;
    if (spec.severity_levels) {
        class_shrink.resize(spec.n_classes);
        for (auto& s : class_shrink) s = rng.uniform(0.85, 1.0);
        meta = stratified_item_meta(spec);
    }

    const std::size_t md = std::size_t(spec.n_items) * spec.dim;
    p.b.resize(md);
    for (std::size_t k = 0; k < md; ++k) {
        double shift = 0.0;
        if (spec.severity_levels) shift = 0.4 * (*meta[k / spec.dim].severity - 1);
        p.b[k] = rng.normal(spec.b_loc + shift, spec.b_scale);
    }

    if (has_item_gamma(spec.kind)) {
        p.gamma.resize(md);
        for (auto& g : p.gamma) g = rng.lognormal(spec.log_gamma_loc, spec.log_gamma_scale);
    }
    if (has_guessing(spec.kind)) {
        p.lambda.resize(spec.n_items);
        for (int j = 0; j < spec.n_items; ++j) {
            if (spec.severity_levels) {
                // well-separated per-severity guessing bands so the class-wise
                // median is strictly decreasing in severity in truth
                const int levels = *spec.severity_levels;
                const int sev = *meta[j].severity;
                const int cls = (j % (spec.n_classes * levels)) % spec.n_classes;
                const double center =
                    0.10 + 0.55 * double(levels - sev) / std::max(1, levels - 1);
                p.lambda[j] =
                    class_shrink[cls] * center * rng.uniform(0.85, 1.15);
            } else {
                p.lambda[j] = rng.uniform(spec.lambda_lo, spec.lambda_hi);
            }
        }
    }
    if (has_model_gamma(spec.kind)) {
        p.gamma_model.resize(spec.n_models);
        for (auto& g : p.gamma_model)
            g = rng.lognormal(spec.log_gamma_model_loc, spec.log_gamma_model_scale);
    }
    p.validate();
    return p;
}

ResponseMatrix generate_responses(const ParameterSet& params, std::uint64_t seed) {
    params.validate();
    Rng rng(seed);
    const std::size_t n = params.n_models(), m = params.n_items();
    std::vector<std::uint8_t> cells(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            cells[i * m + j] = rng.bernoulli(params.probability(i, j)) ? 1 : 0;
    return ResponseMatrix(default_model_ids(int(n)), default_item_ids(int(m)),
                          std::move(cells));
}

SyntheticResponses generate_responses(const ParameterSet& params, const GeneratorSpec& spec,
                                      std::uint64_t seed) {
    spec.validate();
    ResponseMatrix base = generate_responses(params, seed);
    const std::size_t n = base.n_models(), m = base.n_items();
    std::vector<std::uint8_t> cells = base.cells();
    std::vector<std::uint8_t> flags(m, 0);

    const std::size_t n_noise =
        static_cast<std::size_t>(std::llround(spec.label_noise * double(m)));
    if (n_noise > 0) {
        // partial Fisher-Yates over item indices, same RNG stream
        Rng rng(seed + 0x9e3779b97f4a7c15ULL);
        std::vector<std::size_t> idx(m);
        for (std::size_t j = 0; j < m; ++j) idx[j] = j;
        for (std::size_t k = 0; k < n_noise; ++k) {
            const std::size_t pick = k + rng.uniform_index(m - k);
            std::swap(idx[k], idx[pick]);
        }
        for (std::size_t k = 0; k < n_noise; ++k) {
            const std::size_t j = idx[k];
            flags[j] = 1;
            for (std::size_t i = 0; i < n; ++i) cells[i * m + j] ^= 1;
        }
    }

    std::optional<std::vector<ItemMeta>> meta;
    if (spec.severity_levels) meta = stratified_item_meta(spec);
    return {ResponseMatrix(base.model_ids(), base.item_ids(), std::move(cells),
                           std::move(meta)),
            std::move(flags)};
}

ConfidenceMatrix generate_confidences(const ParameterSet& params, const GeneratorSpec& spec,
                                      std::uint64_t seed) {
    spec.validate();
    params.validate();
    if (params.dim != 1)
        throw std::invalid_argument("generate_confidences: requires a unidimensional kind");
    Rng rng(seed);
    const std::size_t n = params.n_models(), m = params.n_items();
    std::vector<double> cells(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double gam = params.gamma_model.empty() ? 1.0 : params.gamma_model[i];
        const double t = spec.miscalibration_of(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double h = 0.5 * gam * (params.theta[i] - params.b[j]);
            double c = rng.beta(std::exp(h), std::exp(-h));
            if (t != 1.0) c = std::pow(c, t);
            cells[i * m + j] = std::clamp(c, 0.0, 1.0);
        }
    }
    return ConfidenceMatrix(default_model_ids(int(n)), default_item_ids(int(m)),
                            std::move(cells));
}

PredictionMatrix generate_predictions(const ParameterSet& params, int n_classes,
                                      std::uint64_t seed) {
    params.validate();
    if (n_classes < 2)
        throw std::invalid_argument("generate_predictions: need at least 2 classes");
    Rng rng(seed);
    const std::size_t n = params.n_models(), m = params.n_items();
    char buf[32];
    auto label = [&](std::uint64_t c) {
        std::snprintf(buf, sizeof(buf), "class_%02llu", static_cast<unsigned long long>(c));
        return std::string(buf);
    };
    std::vector<std::uint64_t> truth_idx(m);
    std::vector<std::string> truth(m);
    for (std::size_t j = 0; j < m; ++j) {
        truth_idx[j] = rng.uniform_index(n_classes);
        truth[j] = label(truth_idx[j]);
    }
    std::vector<std::string> predicted(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (rng.bernoulli(params.probability(i, j))) {
                predicted[i * m + j] = truth[j];
            } else {
                std::uint64_t w = rng.uniform_index(std::uint64_t(n_classes) - 1);
                if (w >= truth_idx[j]) ++w;
                predicted[i * m + j] = label(w);
            }
        }
    return PredictionMatrix(default_model_ids(int(n)), default_item_ids(int(m)),
                            std::move(predicted), std::move(truth));
}

namespace {

void add_family(RecoveryReport& report, const std::string& name,
                const std::vector<double>& truth, const std::vector<double>& est) {
    if (truth.size() != est.size())
        throw std::invalid_argument("recovery_report: dimension mismatch in family '" + name +
                                    "'");
    FamilyRecovery rec;
    rec.kendall_tau = analysis::kendall_tau(truth, est);
    rec.pearson_r = pearson_r(truth, est);
    report.families[name] = rec;
}

}  // namespace

RecoveryReport recovery_report(const ParameterSet& truth, const FittedPosterior& fitted) {
    truth.validate();
    fitted.validate();
    if (truth.n_models() != fitted.n_models() || truth.n_items() != fitted.n_items() ||
        truth.dim != fitted.dim)
        throw std::invalid_argument("recovery_report: truth and posterior dimensions differ");

    RecoveryReport report;
    const std::size_t n = fitted.n_models(), m = fitted.n_items();
    const std::size_t d = static_cast<std::size_t>(fitted.dim);

    std::vector<double> est(n * d);
    for (std::size_t k = 0; k < n * d; ++k) est[k] = fitted.theta[k].loc;
    add_family(report, "theta", truth.theta, est);

    est.resize(m * d);
    for (std::size_t k = 0; k < m * d; ++k) est[k] = fitted.difficulty[k].loc;
    add_family(report, "difficulty", truth.b, est);

    if (has_item_gamma(truth.kind) && has_item_gamma(fitted.kind)) {
        est.resize(m * d);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t dd = 0; dd < d; ++dd)
                est[j * d + dd] = fitted.gamma_mean(j, int(dd));
        add_family(report, "gamma", truth.gamma, est);
    }
    if (has_guessing(truth.kind) && has_guessing(fitted.kind)) {
        est.resize(m);
        for (std::size_t j = 0; j < m; ++j) est[j] = fitted.lambda_mean(j);
        add_family(report, "lambda", truth.lambda, est);
    }
    if (has_model_gamma(truth.kind) && has_model_gamma(fitted.kind)) {
        est.resize(n);
        for (std::size_t i = 0; i < n; ++i) est[i] = fitted.gamma_model_mean(i);
        add_family(report, "gamma_model", truth.gamma_model, est);
    }
    return report;
}

namespace {

json point_json(double loc) { return {{"loc", loc}, {"scale", 0.0}}; }

json point_json_vec(const double* v, int dim) {
    if (dim == 1) return point_json(v[0]);
    json loc = json::array(), scale = json::array();
    for (int d = 0; d < dim; ++d) {
        loc.push_back(v[d]);
        scale.push_back(0.0);
    }
    return {{"loc", loc}, {"scale", scale}};
}

double clamped_logit(double p) { return logit(std::clamp(p, 1e-12, 1.0 - 1e-12)); }

}  // namespace

void save_truth(const ParameterSet& truth, const std::vector<std::string>& model_ids,
                const std::vector<std::string>& item_ids, const std::string& path) {
    truth.validate();
    if (model_ids.size() != truth.n_models() || item_ids.size() != truth.n_items())
        throw std::invalid_argument("save_truth: identifier counts do not match parameters");
    json doc;
    doc["schema_version"] = 1;
    doc["model_kind"] = kind_name(truth.kind);
    doc["dim"] = truth.dim;
    json models = json::array();
    for (std::size_t i = 0; i < truth.n_models(); ++i) {
        json entry;
        entry["id"] = model_ids[i];
        entry["theta"] = point_json_vec(&truth.theta[i * truth.dim], truth.dim);
        if (has_model_gamma(truth.kind))
            entry["log_gamma"] = point_json(std::log(truth.gamma_model[i]));
        models.push_back(std::move(entry));
    }
    doc["models"] = std::move(models);
    json items = json::array();
    for (std::size_t j = 0; j < truth.n_items(); ++j) {
        json entry;
        entry["id"] = item_ids[j];
        entry["b"] = point_json_vec(&truth.b[j * truth.dim], truth.dim);
        if (has_item_gamma(truth.kind)) {
            std::vector<double> lg(truth.dim);
            for (int d = 0; d < truth.dim; ++d)
                lg[d] = std::log(truth.gamma[j * truth.dim + d]);
            entry["log_gamma"] = point_json_vec(lg.data(), truth.dim);
        }
        if (has_guessing(truth.kind))
            entry["logit_lambda"] = point_json(clamped_logit(truth.lambda[j]));
        items.push_back(std::move(entry));
    }
    doc["items"] = std::move(items);
    doc["hyper"] = {{"theta", {{"mu", point_json(0.0)}, {"log_tau", point_json(0.0)}}},
                    {"b", {{"mu", point_json(0.0)}, {"log_tau", point_json(0.0)}}}};
    doc["fit"] = {{"seed", 0},          {"epochs", 0},     {"learning_rate", 0.0},
                  {"mc_samples", 0},    {"final_elbo", 0.0}, {"degenerate_models", json::array()},
                  {"degenerate_items", json::array()}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
}

namespace {

void read_point_vec(const json& j, int dim, std::vector<double>& out) {
    if (dim == 1 && !j.at("loc").is_array()) {
        out.push_back(j.at("loc").get<double>());
        return;
    }
    const auto& loc = j.at("loc");
    if (!loc.is_array() || int(loc.size()) != dim)
        throw std::runtime_error("truth file: wrong parameter dimension");
    for (int d = 0; d < dim; ++d) out.push_back(loc[d].get<double>());
}

}  // namespace

LoadedTruth load_truth(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
    }
    LoadedTruth t;
    try {
        t.params.kind = kind_from_name(doc.at("model_kind").get<std::string>());
        t.params.dim = doc.value("dim", 1);
        for (const auto& entry : doc.at("models")) {
            t.model_ids.push_back(entry.at("id").get<std::string>());
            read_point_vec(entry.at("theta"), t.params.dim, t.params.theta);
            if (has_model_gamma(t.params.kind))
                t.params.gamma_model.push_back(
                    std::exp(entry.at("log_gamma").at("loc").get<double>()));
        }
        for (const auto& entry : doc.at("items")) {
            t.item_ids.push_back(entry.at("id").get<std::string>());
            read_point_vec(entry.at("b"), t.params.dim, t.params.b);
            if (has_item_gamma(t.params.kind)) {
                std::vector<double> lg;
                read_point_vec(entry.at("log_gamma"), t.params.dim, lg);
                for (double v : lg) t.params.gamma.push_back(std::exp(v));
            }
            if (has_guessing(t.params.kind))
                t.params.lambda.push_back(
                    sigmoid(entry.at("logit_lambda").at("loc").get<double>()));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("'" + path + "': malformed truth document: " + e.what());
    }
    t.params.validate();
    return t;
}

}  // namespace irt::synth
