#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace irt {

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: argument must lie in (0,1)");
    return std::log(p) - std::log1p(-p);
}

// Digamma via recurrence to x >= 6 plus the asymptotic series.
inline double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
    double r = 0.0;
    while (x < 6.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    r += std::log(x) - 0.5 / x -
         f * (1.0 / 12.0 -
              f * (1.0 / 120.0 -
                   f * (1.0 / 252.0 - f * (1.0 / 240.0 - f * (1.0 / 132.0)))));
    return r;
}

// E[f(loc + scale*Z)], Z ~ N(0,1), by composite midpoint over [-8, 8] sigmas.
template <typename F>
double normal_expectation(F f, double loc, double scale, int points = 801) {
    const double lo = -8.0, hi = 8.0;
    const double h = (hi - lo) / points;
    const double inv_sqrt2pi = 0.3989422804014327;
    double acc = 0.0;
    for (int k = 0; k < points; ++k) {
        const double z = lo + (k + 0.5) * h;
        acc += f(loc + scale * z) * inv_sqrt2pi * std::exp(-0.5 * z * z);
    }
    return acc * h;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty input");
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double upper = v[mid];
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (v[mid - 1] + upper);
}

inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson_r: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson_r: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson_r: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace irt
