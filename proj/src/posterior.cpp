#include "irt/posterior.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "irt/icc.hpp"
#include "irt/numerics.hpp"

namespace irt {

using nlohmann::json;

double FittedPosterior::theta_mean(std::size_t i, int d) const {
    return theta[i * dim + d].loc;
}

double FittedPosterior::difficulty_mean(std::size_t j, int d) const {
    return difficulty[j * dim + d].loc;
}

double FittedPosterior::gamma_mean(std::size_t j, int d) const {
    const Gaussian& g = log_gamma[j * dim + d];
    return std::exp(g.loc + 0.5 * g.scale * g.scale);
}

double FittedPosterior::lambda_mean(std::size_t j) const {
    const Gaussian& g = logit_lambda[j];
    if (g.scale < 1e-6) return sigmoid(g.loc);
    return normal_expectation([](double v) { return sigmoid(v); }, g.loc, g.scale);
}

double FittedPosterior::gamma_model_mean(std::size_t i) const {
    const Gaussian& g = log_gamma_model[i];
    return std::exp(g.loc + 0.5 * g.scale * g.scale);
}

double FittedPosterior::tau_mean(const HyperBlock& h) const {
    return std::exp(h.log_tau.loc + 0.5 * h.log_tau.scale * h.log_tau.scale);
}

double FittedPosterior::response_probability(std::size_t i, std::size_t j) const {
    switch (kind) {
        case ModelKind::OnePL:
        case ModelKind::Beta:
        case ModelKind::JointConfidence:
            return icc_1pl(theta_mean(i), difficulty_mean(j));
        case ModelKind::TwoPL:
            return icc_2pl(theta_mean(i), difficulty_mean(j), gamma_mean(j));
        case ModelKind::ThreePL:
            return icc_3pl(theta_mean(i), difficulty_mean(j), gamma_mean(j), lambda_mean(j));
        case ModelKind::MultiDim2PL: {
            double a = 0.0;
            for (int d = 0; d < dim; ++d)
                a += gamma_mean(j, d) * (theta_mean(i, d) - difficulty_mean(j, d));
            return sigmoid(a);
        }
    }
    throw std::logic_error("response_probability: bad kind");
}

std::size_t FittedPosterior::model_index(const std::string& id) const {
    for (std::size_t i = 0; i < model_ids.size(); ++i)
        if (model_ids[i] == id) return i;
    throw std::invalid_argument("unknown model id '" + id + "'");
}

std::size_t FittedPosterior::item_index(const std::string& id) const {
    for (std::size_t j = 0; j < item_ids.size(); ++j)
        if (item_ids[j] == id) return j;
    throw std::invalid_argument("unknown item id '" + id + "'");
}

namespace {

void check_scales(const std::vector<Gaussian>& block, const char* name) {
    for (const auto& g : block)
        if (!(g.scale > 0.0))
            throw std::invalid_argument(std::string("FittedPosterior: ") + name +
                                        " posterior scale must be strictly positive");
}

void expect_size(const std::vector<Gaussian>& block, std::size_t want, const char* name) {
    if (block.size() != want)
        throw std::invalid_argument(std::string("FittedPosterior: block '") + name + "' has " +
                                    std::to_string(block.size()) + " entries, expected " +
                                    std::to_string(want));
}

}  // namespace

void FittedPosterior::validate() const {
    if (dim < 1) throw std::invalid_argument("FittedPosterior: dim must be >= 1");
    if (kind != ModelKind::MultiDim2PL && dim != 1)
        throw std::invalid_argument("FittedPosterior: only MultiDim2PL may have dim > 1");
    if (model_ids.empty() || item_ids.empty())
        throw std::invalid_argument("FittedPosterior: empty identifier lists");
    const std::size_t n = model_ids.size(), m = item_ids.size();
    const std::size_t d = static_cast<std::size_t>(dim);
    expect_size(theta, n * d, "theta");
    expect_size(difficulty, m * d, "b");
    expect_size(log_gamma, has_item_gamma(kind) ? m * d : 0, "log_gamma");
    expect_size(logit_lambda, has_guessing(kind) ? m : 0, "logit_lambda");
    expect_size(log_gamma_model, has_model_gamma(kind) ? n : 0, "log_gamma_model");
    check_scales(theta, "theta");
    check_scales(difficulty, "b");
    check_scales(log_gamma, "log_gamma");
    check_scales(logit_lambda, "logit_lambda");
    check_scales(log_gamma_model, "log_gamma_model");
    if (!hyper_theta || !hyper_difficulty)
        throw std::invalid_argument("FittedPosterior: theta and b hyperparameter blocks required");
    const bool want_gamma_hyper = has_item_gamma(kind) || has_model_gamma(kind);
    if (want_gamma_hyper != hyper_gamma.has_value())
        throw std::invalid_argument(want_gamma_hyper
                                        ? "FittedPosterior: gamma hyperparameter block missing"
                                        : "FittedPosterior: gamma hyperparameter block unused");
    for (const HyperBlock* h : {&*hyper_theta, &*hyper_difficulty,
                                hyper_gamma ? &*hyper_gamma : nullptr}) {
        if (!h) continue;
        if (!(h->mu.scale > 0.0) || !(h->log_tau.scale > 0.0))
            throw std::invalid_argument(
                "FittedPosterior: hyperparameter scales must be strictly positive");
    }
}

namespace {

constexpr int kSchemaVersion = 1;

json gaussians_to_json(const Gaussian* g, int dim) {
    if (dim == 1) return {{"loc", g->loc}, {"scale", g->scale}};
    json loc = json::array(), scale = json::array();
    for (int d = 0; d < dim; ++d) {
        loc.push_back(g[d].loc);
        scale.push_back(g[d].scale);
    }
    return {{"loc", loc}, {"scale", scale}};
}

void gaussians_from_json(const json& j, int dim, std::vector<Gaussian>& out,
                         const char* name) {
    if (!j.contains("loc") || !j.contains("scale"))
        throw std::invalid_argument(std::string("posterior file: block '") + name +
                                    "' needs 'loc' and 'scale'");
    if (dim == 1 && !j["loc"].is_array()) {
        out.push_back({j["loc"].get<double>(), j["scale"].get<double>()});
        return;
    }
    const auto& loc = j["loc"];
    const auto& scale = j["scale"];
    if (!loc.is_array() || !scale.is_array() || int(loc.size()) != dim ||
        int(scale.size()) != dim)
        throw std::invalid_argument(std::string("posterior file: block '") + name +
                                    "' has wrong dimension");
    for (int d = 0; d < dim; ++d)
        out.push_back({loc[d].get<double>(), scale[d].get<double>()});
}

json hyper_to_json(const FittedPosterior::HyperBlock& h) {
    return {{"mu", gaussians_to_json(&h.mu, 1)}, {"log_tau", gaussians_to_json(&h.log_tau, 1)}};
}

FittedPosterior::HyperBlock hyper_from_json(const json& j, const char* name) {
    if (!j.contains("mu") || !j.contains("log_tau"))
        throw std::invalid_argument(std::string("posterior file: hyper block '") + name +
                                    "' needs 'mu' and 'log_tau'");
    FittedPosterior::HyperBlock h;
    std::vector<Gaussian> tmp;
    gaussians_from_json(j["mu"], 1, tmp, name);
    h.mu = tmp[0];
    tmp.clear();
    gaussians_from_json(j["log_tau"], 1, tmp, name);
    h.log_tau = tmp[0];
    return h;
}

}  // namespace

void save_posterior(const FittedPosterior& p, const std::string& path) {
    p.validate();
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["model_kind"] = kind_name(p.kind);
    doc["dim"] = p.dim;

    json models = json::array();
    for (std::size_t i = 0; i < p.n_models(); ++i) {
        json entry;
        entry["id"] = p.model_ids[i];
        entry["theta"] = gaussians_to_json(&p.theta[i * p.dim], p.dim);
        if (has_model_gamma(p.kind))
            entry["log_gamma"] = gaussians_to_json(&p.log_gamma_model[i], 1);
        models.push_back(std::move(entry));
    }
    doc["models"] = std::move(models);

    json items = json::array();
    for (std::size_t j = 0; j < p.n_items(); ++j) {
        json entry;
        entry["id"] = p.item_ids[j];
        entry["b"] = gaussians_to_json(&p.difficulty[j * p.dim], p.dim);
        if (has_item_gamma(p.kind))
            entry["log_gamma"] = gaussians_to_json(&p.log_gamma[j * p.dim], p.dim);
        if (has_guessing(p.kind))
            entry["logit_lambda"] = gaussians_to_json(&p.logit_lambda[j], 1);
        items.push_back(std::move(entry));
    }
    doc["items"] = std::move(items);

    json hyper;
    hyper["theta"] = hyper_to_json(*p.hyper_theta);
    hyper["b"] = hyper_to_json(*p.hyper_difficulty);
    if (p.hyper_gamma) hyper["gamma"] = hyper_to_json(*p.hyper_gamma);
    doc["hyper"] = std::move(hyper);

    doc["fit"] = {{"seed", p.fit.seed},
                  {"epochs", p.fit.epochs},
                  {"learning_rate", p.fit.learning_rate},
                  {"mc_samples", p.fit.mc_samples},
                  {"final_elbo", p.fit.final_elbo},
                  {"degenerate_models", p.fit.degenerate_models},
                  {"degenerate_items", p.fit.degenerate_items}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

FittedPosterior load_posterior(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.contains("schema_version") || doc["schema_version"].get<int>() != kSchemaVersion)
        throw std::runtime_error("'" + path + "': unsupported or missing schema_version (want " +
                                 std::to_string(kSchemaVersion) + ")");

    FittedPosterior p;
    try {
        p.kind = kind_from_name(doc.at("model_kind").get<std::string>());
        p.dim = doc.value("dim", 1);

        for (const auto& entry : doc.at("models")) {
            p.model_ids.push_back(entry.at("id").get<std::string>());
            gaussians_from_json(entry.at("theta"), p.dim, p.theta, "theta");
            if (has_model_gamma(p.kind)) {
                if (!entry.contains("log_gamma"))
                    throw std::invalid_argument(
                        "posterior file: model entry lacks 'log_gamma' required by kind " +
                        std::string(kind_name(p.kind)));
                gaussians_from_json(entry["log_gamma"], 1, p.log_gamma_model, "log_gamma");
            }
        }
        for (const auto& entry : doc.at("items")) {
            p.item_ids.push_back(entry.at("id").get<std::string>());
            gaussians_from_json(entry.at("b"), p.dim, p.difficulty, "b");
            if (has_item_gamma(p.kind)) {
                if (!entry.contains("log_gamma"))
                    throw std::invalid_argument(
                        "posterior file: item entry lacks 'log_gamma' required by kind " +
                        std::string(kind_name(p.kind)));
                gaussians_from_json(entry["log_gamma"], p.dim, p.log_gamma, "log_gamma");
            }
            if (has_guessing(p.kind)) {
                if (!entry.contains("logit_lambda"))
                    throw std::invalid_argument(
                        "posterior file: item entry lacks 'logit_lambda' required by kind 3pl");
                gaussians_from_json(entry["logit_lambda"], 1, p.logit_lambda, "logit_lambda");
            }
        }

        const auto& hyper = doc.at("hyper");
        p.hyper_theta = hyper_from_json(hyper.at("theta"), "theta");
        p.hyper_difficulty = hyper_from_json(hyper.at("b"), "b");
        if (hyper.contains("gamma")) p.hyper_gamma = hyper_from_json(hyper["gamma"], "gamma");

        const auto& fit = doc.at("fit");
        p.fit.seed = fit.at("seed").get<std::uint64_t>();
        p.fit.epochs = fit.at("epochs").get<int>();
        p.fit.learning_rate = fit.at("learning_rate").get<double>();
        p.fit.mc_samples = fit.at("mc_samples").get<int>();
        p.fit.final_elbo = fit.at("final_elbo").get<double>();
        p.fit.degenerate_models = fit.value("degenerate_models", std::vector<std::string>{});
        p.fit.degenerate_items = fit.value("degenerate_items", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw std::runtime_error("'" + path + "': malformed posterior document: " + e.what());
    }
    p.validate();
    return p;
}

}  // namespace irt
