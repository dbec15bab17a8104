#include <doctest.h>

#include <cmath>
#include <vector>

#include "irt/icc.hpp"
#include "irt/rng.hpp"
#include "irt/synth.hpp"

using namespace irt;

TEST_CASE("icc_1pl basics") {
    CHECK(icc_1pl(1.3, 1.3) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(icc_1pl(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-14));
    // closed form at theta - b = -20
    const double p = icc_1pl(-20.0, 0.0);
    CHECK(p < 1e-8);
    CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(20.0))).epsilon(1e-12));
}

TEST_CASE("icc_2pl reductions and values") {
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        const double th = rng.normal(), b = rng.normal();
        CHECK(icc_2pl(th, b, 1.0) == doctest::Approx(icc_1pl(th, b)).epsilon(1e-15));
    }
    CHECK(icc_2pl(0.7, 0.7, 3.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(icc_2pl(1.0, 0.0, 2.0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
    CHECK_THROWS_AS(icc_2pl(0.0, 0.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(icc_2pl(0.0, 0.0, -1.0), std::domain_error);
}

TEST_CASE("icc_3pl asymptote and reduction") {
    CHECK(icc_3pl(0.0, 0.0, 1.0, 0.2) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(icc_3pl(-30.0, 0.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-8));
    Rng rng(11);
    for (int k = 0; k < 100; ++k) {
        const double th = rng.normal(), b = rng.normal();
        CHECK(icc_3pl(th, b, 1.0, 0.0) == doctest::Approx(icc_1pl(th, b)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(icc_3pl(0.0, 0.0, 1.0, -0.1), std::domain_error);
    CHECK_THROWS_AS(icc_3pl(0.0, 0.0, 1.0, 1.1), std::domain_error);
}

TEST_CASE("icc_md2pl reductions and hand case") {
    Rng rng(13);
    for (int k = 0; k < 100; ++k) {
        const double th = rng.normal(), b = rng.normal(), g = rng.lognormal(0.0, 0.5);
        const std::vector<double> vt{th}, vb{b}, vg{g};
        CHECK(icc_md2pl(vt, vb, vg) == doctest::Approx(icc_2pl(th, b, g)).epsilon(1e-14));
    }
    const std::vector<double> th{0.25, 0.25}, b{0.25, 0.25}, g{1.0, 2.0};
    CHECK(icc_md2pl(th, b, g) == doctest::Approx(0.5).epsilon(1e-15));
    // gamma=(1,2), theta-b=(1,-0.5): exponent is exactly zero
    const std::vector<double> th2{1.0, 0.0}, b2{0.0, 0.5}, g2{1.0, 2.0};
    CHECK(icc_md2pl(th2, b2, g2) == doctest::Approx(0.5).epsilon(1e-15));
    const std::vector<double> short_b{0.0};
    CHECK_THROWS_AS(icc_md2pl(th2, short_b, g2), std::invalid_argument);
}

TEST_CASE("beta_shape mean identity") {
    const auto s0 = beta_shape(1.1, 1.1);
    CHECK(s0.m == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s0.n == doctest::Approx(1.0).epsilon(1e-15));
    Rng rng(17);
    for (int k = 0; k < 100; ++k) {
        const double th = rng.normal(), b = rng.normal();
        const auto s = beta_shape(th, b);
        CHECK(s.m * s.n == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.m / (s.m + s.n) == doctest::Approx(icc_1pl(th, b)).epsilon(1e-12));
    }
    const auto s2 = beta_shape(2.0, 0.0);
    CHECK(s2.m / (s2.m + s2.n) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
}

TEST_CASE("beta_log_density values and quadrature") {
    CHECK(beta_log_density(0.37, 1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-14));
    // density 2y at m=2, n=1; log(2 * 0.5) = 0
    CHECK(beta_log_density(0.5, 2.0, 1.0) == doctest::Approx(0.0).epsilon(1e-13));
    CHECK_THROWS_AS(beta_log_density(0.0, 1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(beta_log_density(1.0, 1.0, 1.0), std::domain_error);

    // composite midpoint quadrature: the density integrates to 1
    Rng rng(23);
    for (int rep = 0; rep < 5; ++rep) {
        const double m = rng.uniform(1.5, 5.0);
        const double n = rng.uniform(1.5, 5.0);
        const int N = 200000;
        double acc = 0.0;
        for (int k = 0; k < N; ++k) {
            const double y = (k + 0.5) / N;
            acc += std::exp(beta_log_density(y, m, n));
        }
        CHECK(acc / N == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("discrete ICCs are monotone and in range") {
    Rng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        const double b = rng.normal();
        const double g = rng.lognormal(0.0, 0.5);
        const double lam = rng.uniform(0.0, 0.4);
        double prev1 = -1.0, prev2 = -1.0, prev3 = -1.0;
        for (double th = -6.0; th <= 6.0; th += 0.25) {
            const double p1 = icc_1pl(th, b);
            const double p2 = icc_2pl(th, b, g);
            const double p3 = icc_3pl(th, b, g, lam);
            CHECK(p1 > prev1);
            CHECK(p2 > prev2);
            CHECK(p3 > prev3);
            CHECK((p1 > 0.0 && p1 < 1.0));
            CHECK((p2 > 0.0 && p2 < 1.0));
            CHECK((p3 > lam && p3 < 1.0));
            prev1 = p1;
            prev2 = p2;
            prev3 = p3;
        }
        // nonincreasing in b
        double prev = 2.0;
        for (double b2 = -6.0; b2 <= 6.0; b2 += 0.25) {
            const double p = icc_2pl(0.3, b2, g);
            CHECK(p < prev);
            prev = p;
        }
    }
}

TEST_CASE("icc_2pl slope at theta == b is gamma/4") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        const double b = rng.normal();
        const double g = rng.uniform(0.5, 3.0);
        const double h = 1e-6;
        const double slope = (icc_2pl(b + h, b, g) - icc_2pl(b - h, b, g)) / (2.0 * h);
        CHECK(slope == doctest::Approx(g / 4.0).epsilon(1e-6));
    }
}

TEST_CASE("log_likelihood against a naive oracle") {
    ParameterSet p;
    p.kind = ModelKind::OnePL;
    p.theta = {0.4};
    p.b = {0.4};
    ResponseMatrix one({"m0"}, {"i0"}, {1});
    CHECK(log_likelihood(p, one) == doctest::Approx(std::log(0.5)).epsilon(1e-14));

    Rng rng(37);
    for (int rep = 0; rep < 5; ++rep) {
        synth::GeneratorSpec spec;
        spec.n_models = 10;
        spec.n_items = 10;
        spec.kind = ModelKind::ThreePL;
        const auto params = synth::generate_parameters(spec, 100 + rep);
        const auto matrix = synth::generate_responses(params, 200 + rep);
        // independent cellwise oracle straight from the formulas
        double want = 0.0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) {
                const double raw =
                    params.lambda[j] +
                    (1.0 - params.lambda[j]) /
                        (1.0 + std::exp(-params.gamma[j] * (params.theta[i] - params.b[j])));
                const double pr = std::min(std::max(raw, 1e-12), 1.0 - 1e-12);
                want += matrix.cell(i, j) ? std::log(pr) : std::log(1.0 - pr);
            }
        CHECK(log_likelihood(params, matrix) == doctest::Approx(want).epsilon(1e-10));
    }

    ParameterSet bad = p;
    bad.theta = {0.0, 0.0};
    CHECK_THROWS_AS(log_likelihood(bad, one), std::invalid_argument);
}

TEST_CASE("log_likelihood is maximized where mean ICC matches the row mean") {
    Rng rng(41);
    ParameterSet p;
    p.kind = ModelKind::OnePL;
    p.theta = {0.8};
    p.b.resize(200);
    for (auto& b : p.b) b = rng.normal();
    const auto matrix = synth::generate_responses(p, 4242);

    double best_theta = 0.0, best_ll = -1e300;
    for (double th = -4.0; th <= 4.0; th += 0.005) {
        ParameterSet q = p;
        q.theta = {th};
        const double ll = log_likelihood(q, matrix);
        if (ll > best_ll) {
            best_ll = ll;
            best_theta = th;
        }
    }
    double mean_icc = 0.0;
    for (double b : p.b) mean_icc += icc_1pl(best_theta, b);
    mean_icc /= double(p.b.size());
    CHECK(mean_icc == doctest::Approx(matrix.accuracy(0)).epsilon(0.01));
}
