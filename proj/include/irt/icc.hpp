#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "irt/matrix.hpp"
#include "irt/numerics.hpp"
#include "irt/types.hpp"

namespace irt {

// Item characteristic curves. All kernels accept any real theta/b and
// saturate smoothly at the extremes; only gamma/lambda/dimensions are checked.

inline double icc_1pl(double theta, double b) { return sigmoid(theta - b); }

inline double icc_2pl(double theta, double b, double gamma) {
    if (!(gamma > 0.0)) throw std::domain_error("icc_2pl: gamma must be positive");
    return sigmoid(gamma * (theta - b));
}

// Standard 3PL: lower asymptote lambda, slope gamma.
inline double icc_3pl(double theta, double b, double gamma, double lambda) {
    if (!(gamma > 0.0)) throw std::domain_error("icc_3pl: gamma must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::domain_error("icc_3pl: lambda must lie in [0,1]");
    return lambda + (1.0 - lambda) * sigmoid(gamma * (theta - b));
}

inline double icc_md2pl(std::span<const double> theta, std::span<const double> b,
                        std::span<const double> gamma) {
    if (theta.empty() || theta.size() != b.size() || theta.size() != gamma.size())
        throw std::invalid_argument("icc_md2pl: dimension mismatch");
    double a = 0.0;
    for (std::size_t d = 0; d < theta.size(); ++d) a += gamma[d] * (theta[d] - b[d]);
    return sigmoid(a);
}

struct BetaShape {
    double m;
    double n;
};

// Shape pair of the continuous response model; m*n == 1 by construction
// and m/(m+n) equals icc_1pl(theta, b).
inline BetaShape beta_shape(double theta, double b) {
    const double h = 0.5 * (theta - b);
    return {std::exp(h), std::exp(-h)};
}

inline double beta_log_density(double y, double m, double n) {
    if (!(y > 0.0 && y < 1.0))
        throw std::domain_error("beta_log_density: y must lie in (0,1)");
    if (!(m > 0.0 && n > 0.0))
        throw std::domain_error("beta_log_density: shapes must be positive");
    return std::lgamma(m + n) - std::lgamma(m) - std::lgamma(n) +
           (m - 1.0) * std::log(y) + (n - 1.0) * std::log1p(-y);
}

// Ground-truth or point-estimate latent parameters. Vector-valued blocks are
// flattened row-major with `dim` entries per model/item.
struct ParameterSet {
    ModelKind kind = ModelKind::OnePL;
    int dim = 1;
    std::vector<double> theta;        // n*dim
    std::vector<double> b;            // m*dim
    std::vector<double> gamma;        // m*dim; empty unless the kind uses item gamma
    std::vector<double> lambda;       // m; 3PL only
    std::vector<double> gamma_model;  // n; joint confidence model only

    std::size_t n_models() const { return theta.size() / dim; }
    std::size_t n_items() const { return b.size() / dim; }

    std::span<const double> theta_of(std::size_t i) const {
        return {theta.data() + i * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> b_of(std::size_t j) const {
        return {b.data() + j * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> gamma_of(std::size_t j) const {
        return {gamma.data() + j * dim, static_cast<std::size_t>(dim)};
    }

    void validate() const;

    // Success probability of the cell under the kind's ICC. For the Beta and
    // joint kinds this is the response-side curve icc_1pl(theta, b).
    double probability(std::size_t i, std::size_t j) const;
};

// Bernoulli log-likelihood of the matrix under a discrete-response kind;
// probabilities are clamped to [1e-12, 1-1e-12] before the logs.
double log_likelihood(const ParameterSet& params, const ResponseMatrix& matrix);

}  // namespace irt
