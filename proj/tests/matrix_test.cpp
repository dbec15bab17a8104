#include <doctest.h>

#include <fstream>
#include <string>

#include <json.hpp>

#include "irt/matrix.hpp"
#include "irt/posterior.hpp"
#include "irt/rng.hpp"
#include "irt/synth.hpp"
#include "irt/vi.hpp"

#include "test_util.hpp"

using namespace irt;
using testutil::TempDir;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace

TEST_CASE("response CSV round trip of a hand-written file") {
    TempDir tmp;
    write_file(tmp.file("r.csv"), "model_id,i1,i2\nm1,1,0\nm2,0,1\n");
    const auto m = load_response_matrix(tmp.file("r.csv"));
    CHECK(m.n_models() == 2);
    CHECK(m.n_items() == 2);
    CHECK(m.model_ids() == std::vector<std::string>{"m1", "m2"});
    CHECK(m.cell(0, 0) == 1);
    CHECK(m.cell(0, 1) == 0);
    CHECK(m.cell(1, 0) == 0);
    CHECK(m.cell(1, 1) == 1);
}

TEST_CASE("response CSV rejects bad cells, duplicates and ragged rows") {
    TempDir tmp;
    write_file(tmp.file("bad.csv"), "model_id,i1,i2\nm1,1,2\n");
    try {
        load_response_matrix(tmp.file("bad.csv"));
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(std::string(e.what()).find("must be 0 or 1") != std::string::npos);
        CHECK(std::string(e.what()).find("i2") != std::string::npos);
        CHECK(e.row() == 2);
        CHECK(e.col() == 3);
    }

    write_file(tmp.file("dup.csv"), "model_id,i1,i2\nm1,1,0\nm1,0,1\n");
    CHECK_THROWS_AS(load_response_matrix(tmp.file("dup.csv")), CsvError);

    write_file(tmp.file("ragged.csv"), "model_id,i1,i2\nm1,1\n");
    try {
        load_response_matrix(tmp.file("ragged.csv"));
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }

    write_file(tmp.file("empty.csv"), "");
    CHECK_THROWS_AS(load_response_matrix(tmp.file("empty.csv")), CsvError);
}

TEST_CASE("matrix save/load round trips generated data exactly") {
    TempDir tmp;
    for (int rep = 0; rep < 10; ++rep) {
        synth::GeneratorSpec spec;
        spec.n_models = 3 + rep;
        spec.n_items = 5 + rep;
        spec.kind = ModelKind::TwoPL;
        const auto params = synth::generate_parameters(spec, 900 + rep);
        const auto m = synth::generate_responses(params, 800 + rep);
        save_response_matrix(m, tmp.file("m.csv"));
        const auto loaded = load_response_matrix(tmp.file("m.csv"));
        CHECK(loaded.model_ids() == m.model_ids());
        CHECK(loaded.item_ids() == m.item_ids());
        CHECK(loaded.cells() == m.cells());

        const auto conf = synth::generate_confidences(params, spec, 700 + rep);
        save_confidence_matrix(conf, tmp.file("c.csv"));
        const auto cl = load_confidence_matrix(tmp.file("c.csv"));
        CHECK(cl.cells() == conf.cells());
    }
}

TEST_CASE("confidence CSV range validation") {
    TempDir tmp;
    write_file(tmp.file("c.csv"), "model_id,i1\nm1,1.2\n");
    CHECK_THROWS_AS(load_confidence_matrix(tmp.file("c.csv")), CsvError);
    write_file(tmp.file("c2.csv"), "model_id,i1\nm1,abc\n");
    CHECK_THROWS_AS(load_confidence_matrix(tmp.file("c2.csv")), CsvError);
}

TEST_CASE("derive_responses") {
    PredictionMatrix all_right({"a", "b"}, {"x", "y"}, {"u", "v", "u", "v"}, {"u", "v"});
    const auto ones = derive_responses(all_right);
    CHECK(ones.cells() == std::vector<std::uint8_t>{1, 1, 1, 1});

    PredictionMatrix all_wrong({"a", "b"}, {"x", "y"}, {"q", "q", "q", "q"}, {"u", "v"});
    const auto zeros = derive_responses(all_wrong);
    CHECK(zeros.cells() == std::vector<std::uint8_t>{0, 0, 0, 0});

    // 3 models x 2 items, hand-checked pattern
    PredictionMatrix mixed({"a", "b", "c"}, {"x", "y"},
                           {"u", "v", "u", "w", "z", "v"}, {"u", "v"});
    const auto m = derive_responses(mixed);
    CHECK(m.cells() == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1});
}

TEST_CASE("accuracy and mean_item_score") {
    ResponseMatrix m({"a", "b"}, {"i1", "i2", "i3", "i4"},
                     {1, 1, 1, 1, 1, 0, 1, 0});
    CHECK(m.accuracy(0) == doctest::Approx(1.0));
    CHECK(m.accuracy(1) == doctest::Approx(0.5));
    CHECK(m.mean_item_score(1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(m.accuracy(2), std::out_of_range);
    CHECK_THROWS_AS(m.mean_item_score(4), std::out_of_range);

    // column mean equals the transposed matrix's row mean
    Rng rng(5);
    for (int rep = 0; rep < 5; ++rep) {
        const int n = 4, mm = 6;
        std::vector<std::uint8_t> cells(n * mm);
        for (auto& c : cells) c = rng.bernoulli(0.5);
        ResponseMatrix a(synth::default_model_ids(n), synth::default_item_ids(mm), cells);
        std::vector<std::uint8_t> t(n * mm);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < mm; ++j) t[j * n + i] = cells[i * mm + j];
        ResponseMatrix at(synth::default_model_ids(mm), synth::default_item_ids(n), t);
        for (int j = 0; j < mm; ++j)
            CHECK(a.mean_item_score(j) == doctest::Approx(at.accuracy(j)).epsilon(1e-15));
    }
}

TEST_CASE("item metadata CSV") {
    TempDir tmp;
    write_file(tmp.file("meta.csv"),
               "item_id,class_label,severity\ni1,cat,3\ni2,dog,\n");
    const auto meta = load_item_meta(tmp.file("meta.csv"), {"i1", "i2"});
    CHECK(meta[0].class_label == "cat");
    CHECK(meta[0].severity == 3);
    CHECK(meta[1].class_label == "dog");
    CHECK(!meta[1].severity);
    CHECK_THROWS_AS(load_item_meta(tmp.file("meta.csv"), {"i1", "i3"}), CsvError);

    save_item_meta({"i1", "i2"}, meta, tmp.file("meta2.csv"));
    const auto meta2 = load_item_meta(tmp.file("meta2.csv"), {"i1", "i2"});
    CHECK(meta2[0].severity == meta[0].severity);
}

TEST_CASE("posterior JSON round trip") {
    TempDir tmp;
    synth::GeneratorSpec spec;
    spec.n_models = 4;
    spec.n_items = 6;
    spec.kind = ModelKind::ThreePL;
    const auto params = synth::generate_parameters(spec, 77);
    auto p = testutil::point_posterior(params, 0.25);
    p.fit.seed = 123456789;
    p.fit.epochs = 42;
    p.fit.learning_rate = 0.05;
    p.fit.mc_samples = 2;
    p.fit.final_elbo = -321.0625;
    p.fit.degenerate_items = {"item_00002"};

    save_posterior(p, tmp.file("post.json"));
    const auto q = load_posterior(tmp.file("post.json"));
    CHECK(q.kind == p.kind);
    CHECK(q.model_ids == p.model_ids);
    CHECK(q.item_ids == p.item_ids);
    REQUIRE(q.theta.size() == p.theta.size());
    for (std::size_t k = 0; k < p.theta.size(); ++k) {
        CHECK(std::abs(q.theta[k].loc - p.theta[k].loc) <= 1e-12);
        CHECK(std::abs(q.theta[k].scale - p.theta[k].scale) <= 1e-12);
    }
    for (std::size_t k = 0; k < p.logit_lambda.size(); ++k)
        CHECK(std::abs(q.logit_lambda[k].loc - p.logit_lambda[k].loc) <= 1e-12);
    CHECK(q.fit.seed == p.fit.seed);
    CHECK(q.fit.final_elbo == doctest::Approx(p.fit.final_elbo).epsilon(1e-15));
    CHECK(q.fit.degenerate_items == p.fit.degenerate_items);
}

TEST_CASE("posterior JSON round trips a multidimensional fit") {
    TempDir tmp;
    synth::GeneratorSpec spec;
    spec.n_models = 3;
    spec.n_items = 4;
    spec.kind = ModelKind::MultiDim2PL;
    spec.dim = 2;
    const auto params = synth::generate_parameters(spec, 78);
    const auto p = testutil::point_posterior(params, 0.5);
    save_posterior(p, tmp.file("md.json"));
    const auto q = load_posterior(tmp.file("md.json"));
    CHECK(q.dim == 2);
    REQUIRE(q.theta.size() == 6);
    for (std::size_t k = 0; k < q.theta.size(); ++k)
        CHECK(std::abs(q.theta[k].loc - p.theta[k].loc) <= 1e-12);
}

TEST_CASE("posterior load rejects missing blocks and bad files") {
    TempDir tmp;
    synth::GeneratorSpec spec;
    spec.n_models = 2;
    spec.n_items = 3;
    spec.kind = ModelKind::ThreePL;
    const auto params = synth::generate_parameters(spec, 79);
    save_posterior(testutil::point_posterior(params, 0.3), tmp.file("p.json"));

    // strip the guessing block: load must fail for kind 3pl
    nlohmann::json doc;
    {
        std::ifstream in(tmp.file("p.json"));
        in >> doc;
    }
    for (auto& item : doc["items"]) item.erase("logit_lambda");
    write_file(tmp.file("broken.json"), doc.dump());
    try {
        load_posterior(tmp.file("broken.json"));
        FAIL("expected failure");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("logit_lambda") != std::string::npos);
    }

    write_file(tmp.file("empty.json"), "");
    CHECK_THROWS_AS(load_posterior(tmp.file("empty.json")), std::runtime_error);

    doc["schema_version"] = 99;
    write_file(tmp.file("ver.json"), doc.dump());
    CHECK_THROWS_AS(load_posterior(tmp.file("ver.json")), std::runtime_error);

    // zero scales (a truth file) are rejected by the posterior loader
    synth::save_truth(params, synth::default_model_ids(2), synth::default_item_ids(3),
                      tmp.file("truth.json"));
    CHECK_THROWS_AS(load_posterior(tmp.file("truth.json")), std::invalid_argument);
    const auto truth = synth::load_truth(tmp.file("truth.json"));
    CHECK(truth.params.theta[0] == doctest::Approx(params.theta[0]).epsilon(1e-12));
    CHECK(truth.params.lambda[1] == doctest::Approx(params.lambda[1]).epsilon(1e-9));
}

TEST_CASE("matrix type invariants") {
    CHECK_THROWS_AS(ResponseMatrix({"a"}, {"i"}, {2}), std::invalid_argument);
    CHECK_THROWS_AS(ResponseMatrix({"a", "a"}, {"i"}, {1, 0}), CsvError);
    CHECK_THROWS_AS(ConfidenceMatrix({"a"}, {"i"}, {1.5}), std::invalid_argument);
    CHECK_THROWS_AS(PredictionMatrix({"a"}, {"i", "j"}, {"x", "y"}, {"x"}),
                    std::invalid_argument);
    ResponseMatrix ok({"a"}, {"i", "j"}, {1, 0});
    CHECK_THROWS_AS(ok.with_item_meta({{"c", 9}, {"d", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(ok.with_item_meta({{"c", 1}}), std::invalid_argument);  // not every item

    // identifiers and labels must survive unquoted CSV round trips
    CHECK_THROWS_AS(ResponseMatrix({"a,b"}, {"i"}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(ResponseMatrix({""}, {"i"}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(PredictionMatrix({"a"}, {"i"}, {"x,y"}, {"x"}), std::invalid_argument);
    CHECK_THROWS_AS(ok.with_item_meta({{"c,d", 1}, {"e", 1}}), std::invalid_argument);
}
