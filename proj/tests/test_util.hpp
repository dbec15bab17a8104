#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "irt/icc.hpp"
#include "irt/numerics.hpp"
#include "irt/posterior.hpp"
#include "irt/synth.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
  public:
    TempDir() {
        static std::mt19937_64 gen(std::random_device{}());
        for (;;) {
            path_ = std::filesystem::temp_directory_path() /
                    ("irtlab_test_" + std::to_string(gen()));
            if (std::filesystem::create_directory(path_)) break;
        }
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

// Embeds exact parameter values as a near-point-mass posterior.
inline irt::FittedPosterior point_posterior(const irt::ParameterSet& p,
                                            double scale = 1e-9) {
    p.validate();
    irt::FittedPosterior fp;
    fp.kind = p.kind;
    fp.dim = p.dim;
    fp.model_ids = irt::synth::default_model_ids(int(p.n_models()));
    fp.item_ids = irt::synth::default_item_ids(int(p.n_items()));
    for (double t : p.theta) fp.theta.push_back({t, scale});
    for (double b : p.b) fp.difficulty.push_back({b, scale});
    for (double g : p.gamma) fp.log_gamma.push_back({std::log(g), scale});
    for (double l : p.lambda)
        fp.logit_lambda.push_back({irt::logit(std::clamp(l, 1e-12, 1.0 - 1e-12)), scale});
    for (double g : p.gamma_model) fp.log_gamma_model.push_back({std::log(g), scale});
    const irt::FittedPosterior::HyperBlock hb{{0.0, 1.0}, {0.0, 1.0}};
    fp.hyper_theta = hb;
    fp.hyper_difficulty = hb;
    if (irt::has_item_gamma(p.kind) || irt::has_model_gamma(p.kind)) fp.hyper_gamma = hb;
    fp.fit.seed = 0;
    fp.fit.epochs = 0;
    fp.fit.learning_rate = 0.0;
    fp.fit.mc_samples = 0;
    return fp;
}

// O(n^2) tau-b oracle by direct pair counting.
inline double kendall_tau_bruteforce(const std::vector<double>& x,
                                     const std::vector<double>& y) {
    const std::size_t n = x.size();
    long long s = 0, tx = 0, ty = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0) ++tx;
            if (dy == 0.0) ++ty;
            if (dx != 0.0 && dy != 0.0) s += (dx > 0) == (dy > 0) ? 1 : -1;
        }
    const double n0 = 0.5 * double(n) * double(n - 1);
    return double(s) / std::sqrt((n0 - double(tx)) * (n0 - double(ty)));
}

}  // namespace testutil
