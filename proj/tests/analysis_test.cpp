#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "irt/analysis.hpp"
#include "irt/icc.hpp"
#include "irt/numerics.hpp"
#include "irt/rng.hpp"
#include "irt/synth.hpp"

#include "test_util.hpp"

using namespace irt;
using namespace irt::analysis;

TEST_CASE("kendall tau: exact cases") {
    CHECK(kendall_tau({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(kendall_tau({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
    CHECK(kendall_tau({1, 2, 3}, {1, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(kendall_tau({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(kendall_tau({1}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(kendall_tau({2, 2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("kendall tau matches the O(n^2) oracle on tied data") {
    Rng rng(404);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 5 + rng.uniform_index(30);
        std::vector<double> x(n), y(n);
        for (std::size_t k = 0; k < n; ++k) {
            x[k] = double(rng.uniform_index(8));  // heavy ties
            y[k] = double(rng.uniform_index(8));
        }
        // skip the degenerate all-tied draws
        if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
        if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) continue;
        const double got = kendall_tau(x, y);
        const double want = testutil::kendall_tau_bruteforce(x, y);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("kendall tau invariances") {
    Rng rng(405);
    std::vector<double> x(40), y(40);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const double tau = kendall_tau(x, y);

    std::vector<double> neg_y(y);
    for (auto& v : neg_y) v = -v;
    CHECK(kendall_tau(x, neg_y) == doctest::Approx(-tau).epsilon(1e-12));

    std::vector<double> ex(x);
    for (auto& v : ex) v = std::exp(v);  // strictly monotone transform
    CHECK(kendall_tau(ex, y) == doctest::Approx(tau).epsilon(1e-12));
}

TEST_CASE("reliability report: exact posterior with saturated probabilities") {
    // Guttman pattern: probabilities are ~0/~1 and match the responses exactly
    ParameterSet p;
    p.kind = ModelKind::OnePL;
    p.theta = {-10.0, 10.0};
    p.b = {-100.0, 0.0, 100.0};
    ResponseMatrix matrix(synth::default_model_ids(2), synth::default_item_ids(3),
                          {1, 0, 0, 1, 1, 0});
    const auto fitted = testutil::point_posterior(p);
    const auto r = reliability_report(matrix, fitted);
    CHECK(r.expected_correct_rmse < 1e-3);
    CHECK(r.ability_accuracy_tau == doctest::Approx(1.0));
    CHECK(r.difficulty_score_tau == doctest::Approx(-1.0));
    CHECK(r.expected_correct[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.expected_correct[1] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("overconfidence: arithmetic, kind check, bounds") {
    ParameterSet p;
    p.kind = ModelKind::TwoPL;
    p.theta = {logit(0.9)};
    p.b = {0.0, 0.0};
    p.gamma = {1.0, 1.0};
    const auto fitted = testutil::point_posterior(p);
    ConfidenceMatrix conf(synth::default_model_ids(1), synth::default_item_ids(2),
                          {0.6, 0.9});
    const auto o = overconfidence(fitted, conf);
    CHECK(o.cell(0, 0) == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(o.cell(0, 1) == doctest::Approx(0.0).epsilon(1e-7));

    ParameterSet q;
    q.kind = ModelKind::OnePL;
    q.theta = {0.0};
    q.b = {0.0, 0.0};
    CHECK_THROWS_AS(overconfidence(testutil::point_posterior(q), conf),
                    std::invalid_argument);

    // bound property on generated data
    synth::GeneratorSpec spec;
    spec.n_models = 6;
    spec.n_items = 20;
    spec.kind = ModelKind::TwoPL;
    const auto params = synth::generate_parameters(spec, 10);
    const auto c2 = synth::generate_confidences(params, spec, 11);
    const auto o2 = overconfidence(testutil::point_posterior(params), c2);
    for (double v : o2.cells) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("overconfidence is permutation-equivariant") {
    synth::GeneratorSpec spec;
    spec.n_models = 4;
    spec.n_items = 5;
    spec.kind = ModelKind::TwoPL;
    const auto params = synth::generate_parameters(spec, 12);
    const auto conf = synth::generate_confidences(params, spec, 13);
    const auto fitted = testutil::point_posterior(params);
    const auto o = overconfidence(fitted, conf);

    // reverse the model order everywhere
    auto rev = fitted;
    std::reverse(rev.model_ids.begin(), rev.model_ids.end());
    std::reverse(rev.theta.begin(), rev.theta.end());
    std::vector<double> cells;
    for (int i = 3; i >= 0; --i)
        for (int j = 0; j < 5; ++j) cells.push_back(conf.cell(i, j));
    ConfidenceMatrix conf_rev(rev.model_ids, conf.item_ids(), cells);
    const auto o2 = overconfidence(rev, conf_rev);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(o2.cell(3 - i, j) == doctest::Approx(o.cell(i, j)).epsilon(1e-14));
}

TEST_CASE("error rate by overconfidence bin") {
    OverconfidenceMatrix o;
    o.model_ids = {"m"};
    o.item_ids = {"a", "b", "c", "d"};
    o.cells = {-0.95, 0.05, 0.07, 0.65};
    ErrorFlags flags;
    flags.annotation_error = {1, 0, 0, 1};
    flags.class_overlap = {0, 0, 0, 0};

    const auto bins = error_rate_by_overconfidence(o, 0, flags, 0.1);
    REQUIRE(bins.size() == 3);  // empty bins are absent
    CHECK(bins[0].lo == doctest::Approx(-1.0));
    CHECK(bins[0].count == 1);
    CHECK(bins[0].pct_annotation_error == doctest::Approx(100.0));
    CHECK(bins[1].lo == doctest::Approx(0.0));
    CHECK(bins[1].count == 2);
    CHECK(bins[1].pct_annotation_error == doctest::Approx(0.0));
    CHECK(bins[2].pct_annotation_error == doctest::Approx(100.0));

    ErrorFlags none;
    none.annotation_error = {0, 0, 0, 0};
    none.class_overlap = {0, 0, 0, 0};
    for (const auto& b : error_rate_by_overconfidence(o, 0, none, 0.25))
        CHECK(b.pct_annotation_error == doctest::Approx(0.0));

    CHECK_THROWS_AS(error_rate_by_overconfidence(o, 0, flags, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(error_rate_by_overconfidence(o, 0, flags, 2.5), std::invalid_argument);
    ErrorFlags shorter;
    shorter.annotation_error = {0};
    shorter.class_overlap = {0};
    CHECK_THROWS_AS(error_rate_by_overconfidence(o, 0, shorter, 0.1),
                    std::invalid_argument);
}

TEST_CASE("classwise median") {
    ParameterSet p;
    p.kind = ModelKind::ThreePL;
    p.theta = {0.0};
    p.b = {0.0, 0.1, 0.2};
    p.gamma = {1.0, 1.0, 1.0};
    p.lambda = {0.1, 0.2, 0.9};
    const auto fitted = testutil::point_posterior(p);
    const std::vector<ItemMeta> meta = {{"cat", 1}, {"cat", 1}, {"cat", 1}};
    const auto med = classwise_median(fitted, meta, ItemParameter::Guessing);
    REQUIRE(med.size() == 1);
    CHECK(med.at({"cat", 1}) == doctest::Approx(0.2).epsilon(1e-7));

    const auto medb = classwise_median(fitted, meta, ItemParameter::Difficulty);
    CHECK(medb.at({"cat", 1}) == doctest::Approx(0.1).epsilon(1e-9));

    CHECK_THROWS_AS(classwise_median(fitted, {{"cat", 1}}, ItemParameter::Guessing),
                    std::invalid_argument);
    ParameterSet q;
    q.kind = ModelKind::TwoPL;
    q.theta = {0.0};
    q.b = {0.0};
    q.gamma = {1.0};
    CHECK_THROWS_AS(
        classwise_median(testutil::point_posterior(q), {{"cat", 1}}, ItemParameter::Guessing),
        std::invalid_argument);
}

TEST_CASE("discriminable subset selection") {
    ParameterSet p;
    p.kind = ModelKind::TwoPL;
    p.theta = {0.0};
    p.b = {0.0, -2.0, 2.0, 0.5};
    p.gamma = {1.0, 3.0, 3.0, 0.5};
    const auto fitted = testutil::point_posterior(p);

    // k = m, no window: all items ordered by gamma desc, ties by id
    const auto all = select_discriminable_subset(fitted, 4);
    CHECK(all == std::vector<std::string>{"item_00001", "item_00002", "item_00000",
                                          "item_00003"});
    // repeated call gives the identical order
    CHECK(select_discriminable_subset(fitted, 4) == all);

    const auto windowed = select_discriminable_subset(fitted, 2, {{-1.0, 1.0}});
    CHECK(windowed == std::vector<std::string>{"item_00000", "item_00003"});

    CHECK_THROWS_AS(select_discriminable_subset(fitted, 1, {{5.0, 6.0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(select_discriminable_subset(fitted, 5), std::invalid_argument);

    ParameterSet q;
    q.kind = ModelKind::OnePL;
    q.theta = {0.0};
    q.b = {0.0};
    CHECK_THROWS_AS(select_discriminable_subset(testutil::point_posterior(q), 1),
                    std::invalid_argument);
}

TEST_CASE("difficulty window keeps selected items inside the ability support") {
    synth::GeneratorSpec spec;
    spec.n_models = 20;
    spec.n_items = 200;
    spec.kind = ModelKind::TwoPL;
    spec.b_scale = 3.0;  // difficulties reach far beyond the abilities
    const auto params = synth::generate_parameters(spec, 515);
    const auto fitted = testutil::point_posterior(params);

    const double lo =
        *std::min_element(params.theta.begin(), params.theta.end()) - 1.0;
    const double hi =
        *std::max_element(params.theta.begin(), params.theta.end()) + 1.0;
    const auto subset = select_discriminable_subset(fitted, 20, {{lo, hi}});
    for (const auto& id : subset) {
        const double b = fitted.difficulty_mean(fitted.item_index(id));
        CHECK(b >= lo);
        CHECK(b <= hi);
    }
    // without the window, some selected items sit outside the ability range
    const auto unfiltered = select_discriminable_subset(fitted, 20);
    int outside = 0;
    for (const auto& id : unfiltered) {
        const double b = fitted.difficulty_mean(fitted.item_index(id));
        outside += (b < lo || b > hi) ? 1 : 0;
    }
    CHECK(outside > 0);
}

TEST_CASE("subset ranking fidelity") {
    synth::GeneratorSpec spec;
    spec.n_models = 30;
    spec.n_items = 50;
    spec.kind = ModelKind::TwoPL;
    const auto params = synth::generate_parameters(spec, 313);
    const auto matrix = synth::generate_responses(params, 314);

    CHECK(subset_ranking_fidelity(matrix, matrix.item_ids()) == doctest::Approx(1.0));
    CHECK_THROWS_AS(subset_ranking_fidelity(matrix, {"nope"}), std::invalid_argument);
    CHECK_THROWS_AS(subset_ranking_fidelity(matrix, {}), std::invalid_argument);
    CHECK_THROWS_AS(
        subset_ranking_fidelity(matrix, {matrix.item_ids()[0], matrix.item_ids()[0]}),
        std::invalid_argument);
}

TEST_CASE("expected calibration error") {
    // single bin: all confidences 0.9, 6 of 10 correct
    std::vector<double> conf(10, 0.9);
    std::vector<std::uint8_t> correct = {1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
    CHECK(ece(conf, correct, 1) == doctest::Approx(0.3).epsilon(1e-12));

    // perfectly calibrated constant confidence
    std::vector<double> conf2(10, 0.7);
    std::vector<std::uint8_t> correct2 = {1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
    CHECK(ece(conf2, correct2, 1) == doctest::Approx(0.0).epsilon(1e-12));

    // 1.0 lands in the last bin; 0.5 goes to the upper of two bins
    CHECK(ece({1.0}, {1}, 15) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ece({0.5, 0.5}, {1, 0}, 2) == doctest::Approx(0.0).epsilon(1e-12));

    // per-bin balance: zero even when bins differ
    std::vector<double> conf3 = {0.2, 0.2, 0.2, 0.2, 0.2, 0.9, 0.9, 0.9, 0.9, 0.9};
    std::vector<std::uint8_t> correct3 = {1, 0, 0, 0, 0, 1, 1, 1, 1, 0};
    // bin means: 0.2 with acc 0.2; 0.9 with acc 0.8 -> ece = 0.5*0 + 0.5*0.1
    CHECK(ece(conf3, correct3, 10) == doctest::Approx(0.05).epsilon(1e-12));

    CHECK_THROWS_AS(ece({0.5}, {1, 0}, 10), std::invalid_argument);
    CHECK_THROWS_AS(ece({0.5}, {1}, 0), std::invalid_argument);
}

TEST_CASE("calibrate_confidences output stays in range and matches the ICC") {
    ParameterSet p;
    p.kind = ModelKind::JointConfidence;
    p.theta = {0.5, -0.5};
    p.b = {0.0};
    p.gamma_model = {1.0, 2.0};
    const auto fitted = testutil::point_posterior(p);

    ConfidenceMatrix conf(fitted.model_ids, {"new_0", "new_1"}, {0.5, 0.6, 0.7, 0.8});
    const std::vector<Gaussian> diffs = {{0.3, 0.1}, {-0.4, 0.1}};
    const auto cal = calibrate_confidences(fitted, conf, diffs);
    for (double c : cal.cells) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
    CHECK(cal.cells[0] == doctest::Approx(icc_1pl(0.5, 0.3)).epsilon(1e-9));
    CHECK(cal.expected_correct[0] ==
          doctest::Approx(icc_1pl(0.5, 0.3) + icc_1pl(0.5, -0.4)).epsilon(1e-9));

    CHECK_THROWS_AS(calibrate_confidences(fitted, conf, {{0.3, 0.1}}),
                    std::invalid_argument);
}
