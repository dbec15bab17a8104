#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "test_util.hpp"

using testutil::TempDir;

namespace {

std::string cli_path() {
    const char* p = std::getenv("IRTLAB_CLI");
    REQUIRE_MESSAGE(p != nullptr, "IRTLAB_CLI must point at the irtlab binary");
    return p;
}

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd = "'" + cli_path() + "' " + args + " > '" + log + "' 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

TEST_CASE("cli: simulate, fit, recover, select pipeline") {
    TempDir tmp;
    const std::string sim = tmp.file("sim");
    const std::string fit = tmp.file("fit");

    CHECK(run_cli("simulate --out '" + sim +
                      "' --models 15 --items 60 --kind 2pl --seed 7 --confidences",
                  tmp.file("log1")) == 0);
    CHECK(exists(sim + "/responses.csv"));
    CHECK(exists(sim + "/truth.json"));
    CHECK(exists(sim + "/confidences.csv"));
    CHECK(exists(sim + "/run.json"));

    CHECK(run_cli("fit --out '" + fit + "' --responses '" + sim +
                      "/responses.csv' --kind 2pl --epochs 300 --seed 7 --elbo-trace",
                  tmp.file("log2")) == 0);
    CHECK(exists(fit + "/posterior.json"));
    CHECK(exists(fit + "/elbo_trace.csv"));

    const std::string rec = tmp.file("rec");
    CHECK(run_cli("recover --out '" + rec + "' --truth '" + sim + "/truth.json'" +
                      " --posterior '" + fit + "/posterior.json'",
                  tmp.file("log3")) == 0);
    CHECK(exists(rec + "/recovery.json"));
    nlohmann::json recovery;
    std::ifstream(rec + "/recovery.json") >> recovery;
    CHECK(recovery.contains("theta"));
    CHECK(recovery["theta"]["kendall_tau"].get<double>() > 0.3);

    const std::string sel = tmp.file("sel");
    CHECK(run_cli("select --out '" + sel + "' --posterior '" + fit +
                      "/posterior.json' --k 10 --responses '" + sim + "/responses.csv'",
                  tmp.file("log4")) == 0);
    const std::string subset = slurp(sel + "/subset.txt");
    CHECK(std::count(subset.begin(), subset.end(), '\n') == 10);
}

TEST_CASE("cli: malformed CSV exits nonzero and names the cell") {
    TempDir tmp;
    {
        std::ofstream bad(tmp.file("bad.csv"));
        bad << "model_id,i1,i2\nm1,1,2\n";
    }
    const int rc = run_cli("fit --out '" + tmp.file("out") + "' --responses '" +
                               tmp.file("bad.csv") + "' --kind 1pl",
                           tmp.file("log"));
    CHECK(rc != 0);
    const std::string log = slurp(tmp.file("log"));
    CHECK(log.find("error:") != std::string::npos);
    CHECK(log.find("i2") != std::string::npos);
}

TEST_CASE("cli: unknown flags and missing inputs fail") {
    TempDir tmp;
    CHECK(run_cli("fit --no-such-flag 1", tmp.file("log1")) != 0);
    CHECK(run_cli("fit --out '" + tmp.file("o") + "' --kind 1pl", tmp.file("log2")) != 0);
    CHECK(run_cli("analyze --out '" + tmp.file("o2") + "' --what nonsense --posterior x",
                  tmp.file("log3")) != 0);
}

TEST_CASE("cli: config file pre-populates flags, flags win") {
    TempDir tmp;
    {
        std::ofstream cfg(tmp.file("cfg.json"));
        cfg << R"({"subcommand":"simulate","models":12,"items":30,"kind":"1pl","seed":5,)"
            << R"("out":")" << tmp.file("cfg_out") << R"("})";
    }
    CHECK(run_cli("simulate --config '" + tmp.file("cfg.json") + "' --items 25",
                  tmp.file("log")) == 0);
    nlohmann::json run;
    std::ifstream(tmp.file("cfg_out") + "/run.json") >> run;
    CHECK(run["models"].get<int>() == 12);   // from config
    CHECK(run["items"].get<int>() == 25);    // flag overrides config
    CHECK(run["seed"].get<std::uint64_t>() == 5);

    // the wrong subcommand in the config is rejected
    CHECK(run_cli("fit --config '" + tmp.file("cfg.json") + "'", tmp.file("log2")) != 0);

    // unknown keys (typos) are rejected rather than silently ignored
    {
        std::ofstream cfg(tmp.file("typo.json"));
        cfg << R"({"modells":12,"items":30,"out":")" << tmp.file("typo_out") << R"("})";
    }
    CHECK(run_cli("simulate --config '" + tmp.file("typo.json") + "' --models 5",
                  tmp.file("log3")) != 0);
    const std::string log = slurp(tmp.file("log3"));
    CHECK(log.find("modells") != std::string::npos);
}

TEST_CASE("cli: analyze overconfidence and complexity run end to end") {
    TempDir tmp;
    const std::string sim = tmp.file("sim");
    CHECK(run_cli("simulate --out '" + sim + "' --models 12 --items 200 --kind 2pl"
                      " --label-noise 0.05 --confidences --seed 11",
                  tmp.file("log1")) == 0);
    const std::string fit = tmp.file("fit");
    CHECK(run_cli("fit --out '" + fit + "' --responses '" + sim +
                      "/responses.csv' --kind 2pl --epochs 300 --seed 11",
                  tmp.file("log2")) == 0);
    const std::string an = tmp.file("an");
    CHECK(run_cli("analyze --out '" + an + "' --what overconfidence --posterior '" + fit +
                      "/posterior.json' --confidences '" + sim +
                      "/confidences.csv' --flags '" + sim + "/error_flags.csv'",
                  tmp.file("log3")) == 0);
    CHECK(exists(an + "/overconfidence.json"));
    CHECK(exists(an + "/error_rates.csv"));

    const std::string rel = tmp.file("rel");
    CHECK(run_cli("analyze --out '" + rel + "' --what reliability --posterior '" + fit +
                      "/posterior.json' --responses '" + sim + "/responses.csv'",
                  tmp.file("log4")) == 0);
    CHECK(exists(rel + "/reliability.json"));
    CHECK(exists(rel + "/ability_accuracy.csv"));

    // stratified 3pl data for the complexity report
    const std::string sim3 = tmp.file("sim3");
    CHECK(run_cli("simulate --out '" + sim3 + "' --models 12 --items 150 --kind 3pl"
                      " --severity-levels 5 --classes 3 --seed 13",
                  tmp.file("log5")) == 0);
    const std::string fit3 = tmp.file("fit3");
    CHECK(run_cli("fit --out '" + fit3 + "' --responses '" + sim3 +
                      "/responses.csv' --kind 3pl --epochs 300 --seed 13",
                  tmp.file("log6")) == 0);
    const std::string cx = tmp.file("cx");
    CHECK(run_cli("analyze --out '" + cx + "' --what complexity --posterior '" + fit3 +
                      "/posterior.json' --item-meta '" + sim3 + "/item_meta.csv'",
                  tmp.file("log7")) == 0);
    nlohmann::json doc;
    std::ifstream(cx + "/complexity.json") >> doc;
    CHECK(doc["groups"].size() == 15);  // 3 classes x 5 severities
}

TEST_CASE("cli: ensemble and calibrate run end to end") {
    TempDir tmp;
    const std::string sim = tmp.file("sim");
    CHECK(run_cli("simulate --out '" + sim + "' --models 8 --items 150 --kind 1pl"
                      " --prediction-classes 6 --seed 17",
                  tmp.file("log1")) == 0);
    const std::string fit = tmp.file("fit");
    CHECK(run_cli("fit --out '" + fit + "' --responses '" + sim +
                      "/responses.csv' --kind 1pl --epochs 300 --seed 17",
                  tmp.file("log2")) == 0);
    const std::string ens = tmp.file("ens");
    CHECK(run_cli("ensemble --out '" + ens + "' --predictions '" + sim +
                      "/predictions.csv' --truth-labels '" + sim +
                      "/truth_labels.csv' --posterior '" + fit +
                      "/posterior.json' --fused",
                  tmp.file("log3")) == 0);
    nlohmann::json doc;
    std::ifstream(ens + "/ensemble.json") >> doc;
    CHECK(doc["accuracies"].contains("majority_vote"));
    CHECK(doc["accuracies"].contains("probability_weighted"));
    CHECK(exists(ens + "/fused_labels.csv"));

    const std::string simj = tmp.file("simj");
    CHECK(run_cli("simulate --out '" + simj + "' --models 10 --items 120"
                      " --kind joint_confidence --confidences --miscalibration 0.5 --seed 19",
                  tmp.file("log4")) == 0);
    const std::string fitj = tmp.file("fitj");
    CHECK(run_cli("fit --out '" + fitj + "' --responses '" + simj +
                      "/responses.csv' --confidences '" + simj +
                      "/confidences.csv' --kind joint_confidence --epochs 400 --seed 19",
                  tmp.file("log5")) == 0);
    const std::string cal = tmp.file("cal");
    CHECK(run_cli("calibrate --out '" + cal + "' --posterior '" + fitj +
                      "/posterior.json' --confidences '" + simj +
                      "/confidences.csv' --responses '" + simj +
                      "/responses.csv' --epochs 400 --seed 19",
                  tmp.file("log6")) == 0);
    CHECK(exists(cal + "/calibrated.csv"));
    CHECK(exists(cal + "/ece.json"));
    nlohmann::json ece;
    std::ifstream(cal + "/ece.json") >> ece;
    CHECK(ece["raw"].get<double>() > 0.0);
}
