// irtlab: simulate / fit / recover / analyze / select / ensemble / calibrate
//
// Every run takes a single --seed (default 42), writes its artifacts under
// --out, and echoes the full effective configuration to <out>/run.json. A
// config file with the same schema can pre-populate any flag; explicit flags
// win. All computation is single-threaded; --threads is accepted and recorded
// for forward compatibility.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "irt/analysis.hpp"
#include "irt/ensemble.hpp"
#include "irt/icc.hpp"
#include "irt/matrix.hpp"
#include "irt/posterior.hpp"
#include "irt/synth.hpp"
#include "irt/vi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void write_json(const fs::path& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

void note_written(const fs::path& path, const std::string& what) {
    std::cout << "wrote " << path.string() << " (" << what << ")\n";
}

// Option registry: binds flags to variables, lets a JSON config pre-populate
// anything not given on the command line, and echoes the effective values.
class OptionSet {
  public:
    template <typename T>
    CLI::Option* add(CLI::App* app, const std::string& name, T& var,
                     const std::string& desc, bool required = false) {
        auto* opt = app->add_option("--" + name, var, desc);
        entries_.push_back({name, opt, required, false,
                            [&var] { return json(var); },
                            [&var](const json& j) { var = j.get<T>(); }});
        return opt;
    }

    CLI::Option* add_optional(CLI::App* app, const std::string& name,
                              std::optional<double>& var, const std::string& desc) {
        auto* opt = app->add_option("--" + name, var, desc);
        entries_.push_back({name, opt, false, false,
                            [&var] { return var ? json(*var) : json(nullptr); },
                            [&var](const json& j) {
                                if (!j.is_null()) var = j.get<double>();
                            }});
        return opt;
    }

    CLI::Option* add_flag(CLI::App* app, const std::string& name, bool& var,
                          const std::string& desc) {
        auto* opt = app->add_flag("--" + name, var, desc);
        entries_.push_back({name, opt, false, false,
                            [&var] { return json(var); },
                            [&var](const json& j) { var = j.get<bool>(); }});
        return opt;
    }

    void apply_config(const json& cfg) {
        for (const auto& [key, value] : cfg.items()) {
            if (key == "subcommand") continue;
            const bool known =
                std::any_of(entries_.begin(), entries_.end(),
                            [&](const Entry& e) { return e.name == key; });
            if (!known) throw std::runtime_error("config contains unknown key '" + key + "'");
        }
        for (auto& e : entries_) {
            if (e.opt->count() == 0 && cfg.contains(e.name)) {
                e.set(cfg.at(e.name));
                e.from_config = true;
            }
        }
    }

    void check_required() const {
        for (const auto& e : entries_)
            if (e.required && e.opt->count() == 0 && !e.from_config)
                throw std::runtime_error("missing required option --" + e.name);
    }

    json echo(const std::string& subcommand) const {
        json out;
        out["subcommand"] = subcommand;
        for (const auto& e : entries_) out[e.name] = e.get();
        return out;
    }

  private:
    struct Entry {
        std::string name;
        CLI::Option* opt;
        bool required;
        bool from_config;
        std::function<json()> get;
        std::function<void(const json&)> set;
    };
    std::vector<Entry> entries_;
};

struct SubCommand {
    CLI::App* sub = nullptr;
    OptionSet opts;
    std::string out_dir;
    std::uint64_t seed = 42;
    int threads = 1;
    std::string config_path;

    virtual ~SubCommand() = default;
    virtual void run() = 0;

    void add_common(CLI::App* s) {
        sub = s;
        opts.add(s, "out", out_dir, "output directory (created if absent)", true);
        opts.add(s, "seed", seed, "random seed driving all randomness");
        opts.add(s, "threads", threads, "worker threads (currently always 1)");
        s->add_option("--config", config_path,
                      "JSON config file (run.json schema); flags take precedence");
    }

    void execute() {
        if (!config_path.empty()) {
            std::ifstream in(config_path, std::ios::binary);
            if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
            json cfg;
            try {
                in >> cfg;
            } catch (const json::exception& e) {
                throw std::runtime_error("config '" + config_path +
                                         "' is not valid JSON: " + e.what());
            }
            if (cfg.contains("subcommand") &&
                cfg["subcommand"].get<std::string>() != sub->get_name())
                throw std::runtime_error("config is for subcommand '" +
                                         cfg["subcommand"].get<std::string>() +
                                         "', not '" + sub->get_name() + "'");
            opts.apply_config(cfg);
        }
        opts.check_required();
        if (threads < 1) throw std::runtime_error("--threads must be >= 1");
        fs::create_directories(out_dir);
        const fs::path run_path = fs::path(out_dir) / "run.json";
        write_json(run_path, opts.echo(sub->get_name()));
        note_written(run_path, "effective configuration");
        run();
    }
};

// --- shared helpers ---------------------------------------------------------

irt::vi::FitConfig make_fit_config(std::uint64_t seed, int epochs, double lr,
                                   int mc_samples, int conv_window, double conv_tol,
                                   int dim) {
    irt::vi::FitConfig cfg;
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.mc_samples = mc_samples;
    if (conv_window > 0) cfg.convergence = irt::vi::Convergence{conv_window, conv_tol};
    cfg.dim = dim;
    return cfg;
}

void write_elbo_trace(const std::vector<double>& trace, const fs::path& path) {
    std::ostringstream out;
    out << "step,elbo\n";
    for (std::size_t k = 0; k < trace.size(); ++k)
        out << k << ',' << format_double(trace[k]) << '\n';
    write_text(path, out.str());
}

void write_real_matrix_csv(const std::vector<std::string>& model_ids,
                           const std::vector<std::string>& item_ids,
                           const std::vector<double>& cells, const fs::path& path) {
    std::ostringstream out;
    out << "model_id";
    for (const auto& id : item_ids) out << ',' << id;
    out << '\n';
    for (std::size_t i = 0; i < model_ids.size(); ++i) {
        out << model_ids[i];
        for (std::size_t j = 0; j < item_ids.size(); ++j)
            out << ',' << format_double(cells[i * item_ids.size() + j]);
        out << '\n';
    }
    write_text(path, out.str());
}

void save_error_flags(const std::vector<std::string>& item_ids,
                      const irt::analysis::ErrorFlags& flags, const fs::path& path) {
    std::ostringstream out;
    out << "item_id,annotation_error,class_overlap\n";
    for (std::size_t j = 0; j < item_ids.size(); ++j)
        out << item_ids[j] << ',' << int(flags.annotation_error[j]) << ','
            << int(flags.class_overlap[j]) << '\n';
    write_text(path, out.str());
}

irt::analysis::ErrorFlags load_error_flags(const std::string& path,
                                           const std::vector<std::string>& item_ids) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("'" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "item_id,annotation_error,class_overlap")
        throw std::runtime_error("'" + path +
                                 "': header must be 'item_id,annotation_error,class_overlap'");
    std::map<std::string, std::pair<bool, bool>> by_id;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::runtime_error("'" + path + "' row " + std::to_string(row) +
                                     ": expected 3 fields");
        auto parse01 = [&](const std::string& s) {
            if (s == "0") return false;
            if (s == "1") return true;
            throw std::runtime_error("'" + path + "' row " + std::to_string(row) +
                                     ": flag must be 0 or 1, got '" + s + "'");
        };
        by_id[line.substr(0, c1)] = {parse01(line.substr(c1 + 1, c2 - c1 - 1)),
                                     parse01(line.substr(c2 + 1))};
    }
    irt::analysis::ErrorFlags flags;
    flags.annotation_error.reserve(item_ids.size());
    flags.class_overlap.reserve(item_ids.size());
    for (const auto& id : item_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::runtime_error("item '" + id + "' has no flags in '" + path + "'");
        flags.annotation_error.push_back(it->second.first ? 1 : 0);
        flags.class_overlap.push_back(it->second.second ? 1 : 0);
    }
    return flags;
}

// --- simulate ----------------------------------------------------------------

struct SimulateCmd : SubCommand {
    int models = 0, items = 0;
    std::string kind = "1pl";
    int dim = 1;
    double theta_loc = 0.0, theta_scale = 1.0;
    double b_loc = 0.0, b_scale = 1.0;
    double log_gamma_loc = 0.0, log_gamma_scale = 0.5;
    double lambda_lo = 0.0, lambda_hi = 0.3;
    double log_gamma_model_loc = 0.0, log_gamma_model_scale = 0.5;
    bool heavy_tailed_theta = false;
    double label_noise = 0.0;
    double miscalibration = 1.0;
    int severity_levels = 0;
    int classes = 10;
    bool confidences = false;
    int prediction_classes = 0;

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand("simulate",
                                     "generate ground-truth parameters and matrices");
        add_common(s);
        opts.add(s, "models", models, "number of models (rows)", true);
        opts.add(s, "items", items, "number of items (columns)", true);
        opts.add(s, "kind", kind, "model kind: 1pl|2pl|3pl|md2pl|beta|joint_confidence");
        opts.add(s, "dim", dim, "latent dimension (md2pl)");
        opts.add(s, "theta-loc", theta_loc, "ability distribution location");
        opts.add(s, "theta-scale", theta_scale, "ability distribution scale");
        opts.add(s, "b-loc", b_loc, "difficulty distribution location");
        opts.add(s, "b-scale", b_scale, "difficulty distribution scale");
        opts.add(s, "log-gamma-loc", log_gamma_loc, "log-discriminability location");
        opts.add(s, "log-gamma-scale", log_gamma_scale, "log-discriminability scale");
        opts.add(s, "lambda-lo", lambda_lo, "guessing lower bound");
        opts.add(s, "lambda-hi", lambda_hi, "guessing upper bound");
        opts.add(s, "log-gamma-model-loc", log_gamma_model_loc,
                 "per-model log-gamma location (joint kind)");
        opts.add(s, "log-gamma-model-scale", log_gamma_model_scale,
                 "per-model log-gamma scale (joint kind)");
        opts.add_flag(s, "heavy-tailed-theta", heavy_tailed_theta,
                      "draw abilities from Student-t(3) instead of Normal");
        opts.add(s, "label-noise", label_noise,
                 "fraction of items with inverted responses (annotation errors)");
        opts.add(s, "miscalibration", miscalibration,
                 "confidence distortion exponent t (c <- c^t); 1 = calibrated");
        opts.add(s, "severity-levels", severity_levels,
                 "stratify items over this many severity levels (0 = off)");
        opts.add(s, "classes", classes, "class count for stratified generation");
        opts.add_flag(s, "confidences", confidences, "also emit confidences.csv");
        opts.add(s, "prediction-classes", prediction_classes,
                 "emit predictions.csv with this many label classes (0 = off)");
    }

    void run() override {
        irt::synth::GeneratorSpec spec;
        spec.n_models = models;
        spec.n_items = items;
        spec.kind = irt::kind_from_name(kind);
        spec.dim = dim;
        spec.theta_loc = theta_loc;
        spec.theta_scale = theta_scale;
        spec.b_loc = b_loc;
        spec.b_scale = b_scale;
        spec.log_gamma_loc = log_gamma_loc;
        spec.log_gamma_scale = log_gamma_scale;
        spec.lambda_lo = lambda_lo;
        spec.lambda_hi = lambda_hi;
        spec.log_gamma_model_loc = log_gamma_model_loc;
        spec.log_gamma_model_scale = log_gamma_model_scale;
        spec.heavy_tailed_theta = heavy_tailed_theta;
        spec.label_noise = label_noise;
        if (miscalibration != 1.0) spec.miscalibration = {miscalibration};
        if (severity_levels > 0) spec.severity_levels = severity_levels;
        spec.n_classes = classes;

        const fs::path out(out_dir);
        const auto params = irt::synth::generate_parameters(spec, seed);
        const auto sr = irt::synth::generate_responses(params, spec, seed + 1);

        irt::save_response_matrix(sr.matrix, (out / "responses.csv").string());
        note_written(out / "responses.csv", "binary response matrix");
        irt::synth::save_truth(params, sr.matrix.model_ids(), sr.matrix.item_ids(),
                               (out / "truth.json").string());
        note_written(out / "truth.json", "ground-truth parameters");

        if (spec.severity_levels) {
            irt::save_item_meta(sr.matrix.item_ids(), sr.matrix.item_meta(),
                                (out / "item_meta.csv").string());
            note_written(out / "item_meta.csv", "item class/severity metadata");
        }
        if (label_noise > 0.0) {
            irt::analysis::ErrorFlags flags;
            flags.annotation_error = sr.annotation_error;
            flags.class_overlap.assign(sr.annotation_error.size(), 0);
            save_error_flags(sr.matrix.item_ids(), flags, out / "error_flags.csv");
            note_written(out / "error_flags.csv", "injected annotation-error flags");
        }
        if (confidences) {
            const auto conf = irt::synth::generate_confidences(params, spec, seed + 2);
            irt::save_confidence_matrix(conf, (out / "confidences.csv").string());
            note_written(out / "confidences.csv", "confidence matrix");
        }
        if (prediction_classes > 0) {
            const auto pred =
                irt::synth::generate_predictions(params, prediction_classes, seed + 3);
            irt::save_prediction_matrix(pred, (out / "predictions.csv").string(),
                                        (out / "truth_labels.csv").string());
            note_written(out / "predictions.csv", "predicted labels");
            note_written(out / "truth_labels.csv", "ground-truth labels");
        }
    }
};

// --- fit ----------------------------------------------------------------------

struct FitCmd : SubCommand {
    std::string responses, confidences;
    std::string kind;
    int dim = 1;
    int epochs = 1500;
    double learning_rate = 0.1;
    int mc_samples = 1;
    int convergence_window = 0;
    double convergence_tol = 1e-5;
    bool elbo_trace = false;

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand("fit", "fit a model by variational inference");
        add_common(s);
        opts.add(s, "responses", responses, "response matrix CSV");
        opts.add(s, "confidences", confidences, "confidence matrix CSV (beta/joint kinds)");
        opts.add(s, "kind", kind, "model kind: 1pl|2pl|3pl|md2pl|beta|joint_confidence",
                 true);
        opts.add(s, "dim", dim, "latent dimension (md2pl)");
        opts.add(s, "epochs", epochs, "optimization steps");
        opts.add(s, "learning-rate", learning_rate, "Adam step size");
        opts.add(s, "mc-samples", mc_samples, "ELBO samples per step");
        opts.add(s, "convergence-window", convergence_window,
                 "moving-average window for early stop (0 = fixed epochs)");
        opts.add(s, "convergence-tol", convergence_tol,
                 "relative moving-average change tolerance");
        opts.add_flag(s, "elbo-trace", elbo_trace, "write elbo_trace.csv");
    }

    void run() override {
        const auto k = irt::kind_from_name(kind);
        const auto cfg = make_fit_config(seed, epochs, learning_rate, mc_samples,
                                         convergence_window, convergence_tol, dim);
        std::vector<double> trace;
        irt::FittedPosterior posterior;
        if (k == irt::ModelKind::Beta) {
            if (confidences.empty())
                throw std::runtime_error("fit: kind beta requires --confidences");
            const auto conf = irt::load_confidence_matrix(confidences);
            posterior = irt::vi::fit_beta(conf, cfg, {}, &trace);
        } else if (k == irt::ModelKind::JointConfidence) {
            if (responses.empty() || confidences.empty())
                throw std::runtime_error(
                    "fit: kind joint_confidence requires --responses and --confidences");
            const auto resp = irt::load_response_matrix(responses);
            const auto conf = irt::load_confidence_matrix(confidences);
            posterior = irt::vi::fit_joint(resp, conf, cfg, {}, &trace);
        } else {
            if (responses.empty()) throw std::runtime_error("fit: requires --responses");
            const auto resp = irt::load_response_matrix(responses);
            posterior = irt::vi::fit(resp, k, cfg, {}, &trace);
        }

        const fs::path out(out_dir);
        irt::save_posterior(posterior, (out / "posterior.json").string());
        note_written(out / "posterior.json",
                     std::string(irt::kind_name(k)) + " posterior, " +
                         std::to_string(posterior.fit.epochs) + " steps, final ELBO " +
                         format_double(posterior.fit.final_elbo));
        if (!posterior.fit.degenerate_models.empty() ||
            !posterior.fit.degenerate_items.empty())
            std::cout << "note: " << posterior.fit.degenerate_models.size()
                      << " degenerate models and " << posterior.fit.degenerate_items.size()
                      << " degenerate items were flagged in the posterior\n";
        if (elbo_trace) {
            write_elbo_trace(trace, out / "elbo_trace.csv");
            note_written(out / "elbo_trace.csv", "per-step ELBO estimates");
        }
    }
};

// --- recover -------------------------------------------------------------------

struct RecoverCmd : SubCommand {
    std::string truth, posterior;

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand("recover",
                                     "compare a posterior against ground truth");
        add_common(s);
        opts.add(s, "truth", truth, "truth JSON from simulate", true);
        opts.add(s, "posterior", posterior, "posterior JSON from fit", true);
    }

    void run() override {
        const auto t = irt::synth::load_truth(truth);
        const auto p = irt::load_posterior(posterior);
        if (t.model_ids != p.model_ids || t.item_ids != p.item_ids)
            throw std::runtime_error("recover: truth and posterior identifiers differ");
        const auto report = irt::synth::recovery_report(t.params, p);

        json doc;
        for (const auto& [family, rec] : report.families) {
            doc[family] = {{"kendall_tau", rec.kendall_tau}, {"pearson_r", rec.pearson_r}};
            std::cout << family << ": tau = " << rec.kendall_tau
                      << ", pearson = " << rec.pearson_r << "\n";
        }
        const fs::path path = fs::path(out_dir) / "recovery.json";
        write_json(path, doc);
        note_written(path, "parameter recovery report");
    }
};

// --- analyze -------------------------------------------------------------------

struct AnalyzeCmd : SubCommand {
    std::string what;
    std::string responses, posterior, confidences, flags_path, item_meta;
    std::string model_id = "strongest";
    double bin_width = 0.1;
    std::string parameter = "guessing";

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand("analyze",
                                     "reliability / overconfidence / complexity reports");
        add_common(s);
        opts.add(s, "what", what, "reliability|overconfidence|complexity", true);
        opts.add(s, "responses", responses, "response matrix CSV");
        opts.add(s, "posterior", posterior, "posterior JSON", true);
        opts.add(s, "confidences", confidences, "confidence matrix CSV");
        opts.add(s, "flags", flags_path, "error-flag CSV (overconfidence)");
        opts.add(s, "model-id", model_id,
                 "model for the overconfidence curve; 'strongest' = highest ability");
        opts.add(s, "bin-width", bin_width, "overconfidence bin width");
        opts.add(s, "parameter", parameter,
                 "complexity parameter: guessing|difficulty|discriminability");
        opts.add(s, "item-meta", item_meta, "item metadata CSV (complexity)");
    }

    void run() override {
        if (what == "reliability")
            run_reliability();
        else if (what == "overconfidence")
            run_overconfidence();
        else if (what == "complexity")
            run_complexity();
        else
            throw std::runtime_error("analyze: unknown --what '" + what +
                                     "' (use reliability|overconfidence|complexity)");
    }

    void run_reliability() {
        if (responses.empty())
            throw std::runtime_error("analyze reliability: requires --responses");
        const auto matrix = irt::load_response_matrix(responses);
        const auto p = irt::load_posterior(posterior);
        const auto r = irt::analysis::reliability_report(matrix, p);

        const fs::path out(out_dir);
        write_json(out / "reliability.json",
                   {{"ability_accuracy_tau", r.ability_accuracy_tau},
                    {"difficulty_score_tau", r.difficulty_score_tau},
                    {"expected_correct_rmse", r.expected_correct_rmse}});
        note_written(out / "reliability.json", "rank agreement and RMSE");
        std::cout << "ability-vs-accuracy tau = " << r.ability_accuracy_tau
                  << ", difficulty-vs-score tau = " << r.difficulty_score_tau
                  << ", expected-correct RMSE = " << r.expected_correct_rmse << "\n";

        std::ostringstream a;
        a << "model_id,ability,accuracy\n";
        for (std::size_t i = 0; i < matrix.n_models(); ++i)
            a << matrix.model_ids()[i] << ',' << format_double(r.abilities[i]) << ','
              << format_double(r.accuracies[i]) << '\n';
        write_text(out / "ability_accuracy.csv", a.str());
        note_written(out / "ability_accuracy.csv", "scatter data");

        std::ostringstream d;
        d << "item_id,difficulty,mean_score\n";
        for (std::size_t j = 0; j < matrix.n_items(); ++j)
            d << matrix.item_ids()[j] << ',' << format_double(r.difficulties[j]) << ','
              << format_double(r.mean_scores[j]) << '\n';
        write_text(out / "difficulty_score.csv", d.str());
        note_written(out / "difficulty_score.csv", "scatter data");

        std::ostringstream e;
        e << "model_id,expected_correct,actual_correct\n";
        for (std::size_t i = 0; i < matrix.n_models(); ++i)
            e << matrix.model_ids()[i] << ',' << format_double(r.expected_correct[i]) << ','
              << format_double(r.actual_correct[i]) << '\n';
        write_text(out / "expected_actual.csv", e.str());
        note_written(out / "expected_actual.csv", "expected vs actual correct counts");
    }

    void run_overconfidence() {
        if (confidences.empty() || flags_path.empty())
            throw std::runtime_error(
                "analyze overconfidence: requires --confidences and --flags");
        const auto p = irt::load_posterior(posterior);
        const auto conf = irt::load_confidence_matrix(confidences);
        const auto o = irt::analysis::overconfidence(p, conf);
        const auto flags = load_error_flags(flags_path, conf.item_ids());

        std::size_t idx = 0;
        if (model_id == "strongest") {
            for (std::size_t i = 1; i < p.n_models(); ++i)
                if (p.theta_mean(i) > p.theta_mean(idx)) idx = i;
        } else {
            idx = p.model_index(model_id);
        }
        const auto bins =
            irt::analysis::error_rate_by_overconfidence(o, idx, flags, bin_width);

        const fs::path out(out_dir);
        write_real_matrix_csv(o.model_ids, o.item_ids, o.cells,
                              out / "overconfidence.csv");
        note_written(out / "overconfidence.csv", "overconfidence matrix");

        std::ostringstream c;
        c << "bin_center,percentage,series\n";
        for (const auto& b : bins)
            c << format_double(0.5 * (b.lo + b.hi)) << ','
              << format_double(b.pct_annotation_error) << ",annotation_error\n";
        for (const auto& b : bins)
            c << format_double(0.5 * (b.lo + b.hi)) << ','
              << format_double(b.pct_class_overlap) << ",class_overlap\n";
        write_text(out / "error_rates.csv", c.str());
        note_written(out / "error_rates.csv", "error percentage by overconfidence bin");

        json doc;
        doc["model_id"] = o.model_ids[idx];
        doc["bin_width"] = bin_width;
        json jbins = json::array();
        for (const auto& b : bins)
            jbins.push_back({{"lo", b.lo},
                             {"hi", b.hi},
                             {"count", b.count},
                             {"pct_annotation_error", b.pct_annotation_error},
                             {"pct_class_overlap", b.pct_class_overlap}});
        doc["bins"] = std::move(jbins);
        write_json(out / "overconfidence.json", doc);
        note_written(out / "overconfidence.json", "binned error-rate report");
    }

    void run_complexity() {
        if (item_meta.empty())
            throw std::runtime_error("analyze complexity: requires --item-meta");
        const auto p = irt::load_posterior(posterior);
        const auto meta = irt::load_item_meta(item_meta, p.item_ids);
        irt::analysis::ItemParameter param;
        if (parameter == "guessing")
            param = irt::analysis::ItemParameter::Guessing;
        else if (parameter == "difficulty")
            param = irt::analysis::ItemParameter::Difficulty;
        else if (parameter == "discriminability")
            param = irt::analysis::ItemParameter::Discriminability;
        else
            throw std::runtime_error("analyze complexity: unknown --parameter '" + parameter +
                                     "'");
        const auto medians = irt::analysis::classwise_median(p, meta, param);

        const fs::path out(out_dir);
        json groups = json::array();
        std::ostringstream c;
        c << "severity,median,class\n";
        for (const auto& [key, value] : medians) {
            groups.push_back({{"class", key.class_label},
                              {"severity", key.severity},
                              {"median", value}});
            c << key.severity << ',' << format_double(value) << ',' << key.class_label
              << '\n';
        }
        write_json(out / "complexity.json", {{"parameter", parameter}, {"groups", groups}});
        note_written(out / "complexity.json", "class-wise medians");
        write_text(out / "complexity.csv", c.str());
        note_written(out / "complexity.csv", "plot data (severity, median, class)");
    }
};

// --- select --------------------------------------------------------------------

struct SelectCmd : SubCommand {
    std::string posterior, responses;
    int k = 10;
    std::optional<double> window_lo, window_hi;

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand("select",
                                     "pick the most discriminable item subset");
        add_common(s);
        opts.add(s, "posterior", posterior, "posterior JSON (kind with gamma)", true);
        opts.add(s, "k", k, "subset size");
        opts.add_optional(s, "window-lo", window_lo, "difficulty window lower edge");
        opts.add_optional(s, "window-hi", window_hi, "difficulty window upper edge");
        opts.add(s, "responses", responses,
                 "response matrix CSV; when given, reports subset ranking fidelity");
    }

    void run() override {
        if (window_lo.has_value() != window_hi.has_value())
            throw std::runtime_error("select: give both --window-lo and --window-hi or neither");
        const auto p = irt::load_posterior(posterior);
        std::optional<std::pair<double, double>> window;
        if (window_lo) window = {*window_lo, *window_hi};
        const auto subset =
            irt::analysis::select_discriminable_subset(p, std::size_t(k), window);

        const fs::path out(out_dir);
        std::ostringstream lines;
        for (const auto& id : subset) lines << id << '\n';
        write_text(out / "subset.txt", lines.str());
        note_written(out / "subset.txt", std::to_string(subset.size()) + " item ids");

        json doc;
        doc["k"] = k;
        doc["items"] = subset;
        if (window) doc["window"] = {window->first, window->second};
        if (!responses.empty()) {
            const auto matrix = irt::load_response_matrix(responses);
            const double fidelity = irt::analysis::subset_ranking_fidelity(matrix, subset);
            doc["ranking_fidelity"] = fidelity;
            std::cout << "subset ranking fidelity = " << fidelity << "\n";
        }
        write_json(out / "selection.json", doc);
        note_written(out / "selection.json", "selection report");
    }
};

// --- ensemble ------------------------------------------------------------------

struct EnsembleCmd : SubCommand {
    std::string predictions, truth_labels, posterior, probabilities;
    bool fused = false;

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand("ensemble", "evaluate the voting schemes");
        add_common(s);
        opts.add(s, "predictions", predictions, "prediction matrix CSV", true);
        opts.add(s, "truth-labels", truth_labels, "item_id,label CSV", true);
        opts.add(s, "posterior", posterior, "posterior JSON for abilities", true);
        opts.add(s, "probabilities", probabilities,
                 "optional per-cell probability CSV (overrides fitted ICCs)");
        opts.add_flag(s, "fused", fused, "also write fused_labels.csv");
    }

    void run() override {
        const auto pred = irt::load_prediction_matrix(predictions, truth_labels);
        const auto p = irt::load_posterior(posterior);
        std::optional<std::vector<double>> probs;
        if (!probabilities.empty()) {
            const auto pm = irt::load_confidence_matrix(probabilities);
            if (pm.model_ids() != pred.model_ids() || pm.item_ids() != pred.item_ids())
                throw std::runtime_error(
                    "ensemble: probability matrix identifiers do not match predictions");
            probs = pm.cells();
        }
        const auto report = irt::ensemble::ensemble_report(pred, p, probs);

        json doc;
        for (const auto& [scheme, acc] : report.accuracies) doc["accuracies"][scheme] = acc;
        for (const auto& [scheme, why] : report.omitted) doc["omitted"][scheme] = why;
        const fs::path out(out_dir);
        write_json(out / "ensemble.json", doc);
        note_written(out / "ensemble.json", "voting-scheme accuracies");
        for (const auto& [scheme, acc] : report.accuracies)
            std::cout << scheme << ": " << acc << "\n";
        for (const auto& [scheme, why] : report.omitted)
            std::cout << scheme << " omitted: " << why << "\n";

        if (fused) {
            std::ostringstream f;
            f << "item_id,truth";
            for (const auto& [scheme, res] : report.results) f << ',' << scheme;
            f << '\n';
            for (std::size_t j = 0; j < pred.n_items(); ++j) {
                f << pred.item_ids()[j] << ',' << pred.truth()[j];
                for (const auto& [scheme, res] : report.results)
                    f << ',' << res.fused_labels[j];
                f << '\n';
            }
            write_text(out / "fused_labels.csv", f.str());
            note_written(out / "fused_labels.csv", "per-item fused labels");
        }
    }
};

// --- calibrate -----------------------------------------------------------------

struct CalibrateCmd : SubCommand {
    std::string posterior, confidences, responses;
    int epochs = 1500;
    double learning_rate = 0.1;
    int mc_samples = 1;
    int ece_bins = 15;

    void setup(CLI::App& app) {
        auto* s = app.add_subcommand(
            "calibrate", "freeze-then-fit difficulties and calibrate confidences");
        add_common(s);
        opts.add(s, "posterior", posterior, "joint_confidence posterior JSON", true);
        opts.add(s, "confidences", confidences, "confidence CSV for the new items", true);
        opts.add(s, "responses", responses,
                 "response CSV for the same items; enables the ECE report");
        opts.add(s, "epochs", epochs, "freeze-fit optimization steps");
        opts.add(s, "learning-rate", learning_rate, "freeze-fit Adam step size");
        opts.add(s, "mc-samples", mc_samples, "freeze-fit ELBO samples per step");
        opts.add(s, "ece-bins", ece_bins, "ECE bin count");
    }

    void run() override {
        const auto p = irt::load_posterior(posterior);
        const auto conf = irt::load_confidence_matrix(confidences);
        const auto cfg =
            make_fit_config(seed, epochs, learning_rate, mc_samples, 0, 1e-5, 1);
        const auto difficulties = irt::vi::fit_difficulty_from_confidences(p, conf, cfg);
        const auto cal = irt::analysis::calibrate_confidences(p, conf, difficulties);

        const fs::path out(out_dir);
        std::ostringstream d;
        d << "item_id,b_loc,b_scale\n";
        for (std::size_t j = 0; j < conf.n_items(); ++j)
            d << conf.item_ids()[j] << ',' << format_double(difficulties[j].loc) << ','
              << format_double(difficulties[j].scale) << '\n';
        write_text(out / "difficulties.csv", d.str());
        note_written(out / "difficulties.csv", "freeze-then-fit item difficulties");

        irt::ConfidenceMatrix calibrated(cal.model_ids, cal.item_ids, cal.cells);
        irt::save_confidence_matrix(calibrated, (out / "calibrated.csv").string());
        note_written(out / "calibrated.csv", "calibrated probabilities");

        std::optional<irt::ResponseMatrix> resp;
        if (!responses.empty()) {
            resp = irt::load_response_matrix(responses);
            irt::check_aligned(*resp, conf);
        }

        std::ostringstream e;
        e << "model_id,expected_correct";
        if (resp) e << ",actual_correct";
        e << '\n';
        for (std::size_t i = 0; i < conf.n_models(); ++i) {
            e << conf.model_ids()[i] << ',' << format_double(cal.expected_correct[i]);
            if (resp)
                e << ',' << format_double(resp->accuracy(i) * double(resp->n_items()));
            e << '\n';
        }
        write_text(out / "expected_correct.csv", e.str());
        note_written(out / "expected_correct.csv", "expected vs actual correct counts");

        if (resp) {
            std::vector<double> raw_conf, cal_conf;
            std::vector<std::uint8_t> correct;
            raw_conf.reserve(conf.cells().size());
            cal_conf.reserve(conf.cells().size());
            correct.reserve(conf.cells().size());
            for (std::size_t i = 0; i < conf.n_models(); ++i)
                for (std::size_t j = 0; j < conf.n_items(); ++j) {
                    raw_conf.push_back(conf.cell(i, j));
                    cal_conf.push_back(cal.cells[i * conf.n_items() + j]);
                    correct.push_back(resp->cell(i, j));
                }
            const double raw = irt::analysis::ece(raw_conf, correct, ece_bins);
            const double calibrated_ece = irt::analysis::ece(cal_conf, correct, ece_bins);
            write_json(out / "ece.json",
                       {{"raw", raw}, {"calibrated", calibrated_ece}, {"bins", ece_bins}});
            note_written(out / "ece.json", "expected calibration error, raw vs calibrated");
            std::cout << "ECE raw = " << raw << ", calibrated = " << calibrated_ece << "\n";
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IRT model fitting and analysis for classifier response matrices"};
    app.require_subcommand(1);

    SimulateCmd simulate;
    FitCmd fit;
    RecoverCmd recover;
    AnalyzeCmd analyze;
    SelectCmd select;
    EnsembleCmd ensemble;
    CalibrateCmd calibrate;

    simulate.setup(app);
    fit.setup(app);
    recover.setup(app);
    analyze.setup(app);
    select.setup(app);
    ensemble.setup(app);
    calibrate.setup(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    SubCommand* cmds[] = {&simulate, &fit, &recover, &analyze,
                          &select,   &ensemble, &calibrate};
    try {
        for (SubCommand* c : cmds)
            if (c->sub->parsed()) {
                c->execute();
                return 0;
            }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand given\n";
    return 1;
}
