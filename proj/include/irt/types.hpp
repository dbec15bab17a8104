#pragma once

#include <stdexcept>
#include <string>

namespace irt {

enum class ModelKind {
    OnePL,
    TwoPL,
    ThreePL,
    MultiDim2PL,
    Beta,
    JointConfidence,
};

inline const char* kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::OnePL: return "1pl";
        case ModelKind::TwoPL: return "2pl";
        case ModelKind::ThreePL: return "3pl";
        case ModelKind::MultiDim2PL: return "md2pl";
        case ModelKind::Beta: return "beta";
        case ModelKind::JointConfidence: return "joint_confidence";
    }
    throw std::logic_error("kind_name: bad enum value");
}

inline ModelKind kind_from_name(const std::string& s) {
    if (s == "1pl") return ModelKind::OnePL;
    if (s == "2pl") return ModelKind::TwoPL;
    if (s == "3pl") return ModelKind::ThreePL;
    if (s == "md2pl") return ModelKind::MultiDim2PL;
    if (s == "beta") return ModelKind::Beta;
    if (s == "joint_confidence") return ModelKind::JointConfidence;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

// True for kinds whose likelihood is Bernoulli over a binary response matrix.
inline bool is_discrete_kind(ModelKind k) {
    return k == ModelKind::OnePL || k == ModelKind::TwoPL ||
           k == ModelKind::ThreePL || k == ModelKind::MultiDim2PL;
}

inline bool has_item_gamma(ModelKind k) {
    return k == ModelKind::TwoPL || k == ModelKind::ThreePL ||
           k == ModelKind::MultiDim2PL;
}

inline bool has_guessing(ModelKind k) { return k == ModelKind::ThreePL; }

inline bool has_model_gamma(ModelKind k) { return k == ModelKind::JointConfidence; }

// A univariate Gaussian in unconstrained space (location/scale).
struct Gaussian {
    double loc = 0.0;
    double scale = 1.0;
};

}  // namespace irt
