#include "irt/icc.hpp"

#include <algorithm>
#include <cmath>

namespace irt {

void ParameterSet::validate() const {
    if (dim < 1) throw std::invalid_argument("ParameterSet: dim must be >= 1");
    if (kind != ModelKind::MultiDim2PL && dim != 1)
        throw std::invalid_argument("ParameterSet: only MultiDim2PL may have dim > 1");
    if (theta.empty() || b.empty())
        throw std::invalid_argument("ParameterSet: theta and b must be non-empty");
    if (theta.size() % dim != 0 || b.size() % dim != 0)
        throw std::invalid_argument("ParameterSet: theta/b sizes must be multiples of dim");
    const std::size_t m = n_items();
    if (has_item_gamma(kind)) {
        if (gamma.size() != m * static_cast<std::size_t>(dim))
            throw std::invalid_argument("ParameterSet: gamma must have one entry per item (and dim)");
        for (double g : gamma)
            if (!(g > 0.0)) throw std::invalid_argument("ParameterSet: gamma must be positive");
    } else if (!gamma.empty()) {
        throw std::invalid_argument("ParameterSet: gamma present but unused by this kind");
    }
    if (has_guessing(kind)) {
        if (lambda.size() != m)
            throw std::invalid_argument("ParameterSet: lambda must have one entry per item");
        for (double l : lambda)
            if (!(l >= 0.0 && l <= 1.0))
                throw std::invalid_argument("ParameterSet: lambda must lie in [0,1]");
    } else if (!lambda.empty()) {
        throw std::invalid_argument("ParameterSet: lambda present but unused by this kind");
    }
    if (has_model_gamma(kind)) {
        if (gamma_model.size() != n_models())
            throw std::invalid_argument("ParameterSet: gamma_model must have one entry per model");
        for (double g : gamma_model)
            if (!(g > 0.0)) throw std::invalid_argument("ParameterSet: gamma_model must be positive");
    } else if (!gamma_model.empty()) {
        throw std::invalid_argument("ParameterSet: gamma_model present but unused by this kind");
    }
}

double ParameterSet::probability(std::size_t i, std::size_t j) const {
    switch (kind) {
        case ModelKind::OnePL:
        case ModelKind::Beta:
        case ModelKind::JointConfidence:
            return icc_1pl(theta[i], b[j]);
        case ModelKind::TwoPL:
            return icc_2pl(theta[i], b[j], gamma[j]);
        case ModelKind::ThreePL:
            return icc_3pl(theta[i], b[j], gamma[j], lambda[j]);
        case ModelKind::MultiDim2PL:
            return icc_md2pl(theta_of(i), b_of(j), gamma_of(j));
    }
    throw std::logic_error("ParameterSet::probability: bad kind");
}

double log_likelihood(const ParameterSet& params, const ResponseMatrix& matrix) {
    if (!is_discrete_kind(params.kind))
        throw std::invalid_argument("log_likelihood: kind must be a discrete-response kind");
    params.validate();
    if (params.n_models() != matrix.n_models() || params.n_items() != matrix.n_items())
        throw std::invalid_argument("log_likelihood: parameter dimensions do not match the matrix");
    constexpr double kEps = 1e-12;
    double ll = 0.0;
    for (std::size_t i = 0; i < matrix.n_models(); ++i)
        for (std::size_t j = 0; j < matrix.n_items(); ++j) {
            const double p = std::clamp(params.probability(i, j), kEps, 1.0 - kEps);
            ll += matrix.cell(i, j) ? std::log(p) : std::log1p(-p);
        }
    return ll;
}

}  // namespace irt
