#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "dpalign/analysis.hpp"

TEST_SUITE_BEGIN("cli");

namespace {

const std::string kCli = DPALIGN_CLI_PATH;
const std::string kData = DPALIGN_DATA_DIR;

int run(const std::string& args, const std::string& out_file = "/tmp/dpalign_cli_out.txt") {
    const std::string cmd = kCli + " " + args + " > " + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_small_config(const std::string& path, const std::string& epsilon = "\"inf\"") {
    std::ofstream os(path);
    os << R"({
  "pipeline": "dpo",
  "seed": 3,
  "data": {"n": 120, "vocab": 12, "seed": 5},
  "model": {"embed_dim": 6, "hidden_dim": 10},
  "optimizer": {"learning_rate": 0.02, "clip_norm": 0.5, "denom_epsilon": 1e-3,
                "clipping_mode": "per_sample"},
  "privacy": {"epsilon": )" << epsilon << R"(, "delta": 1e-5},
  "training": {"epochs": 1, "batch_size": 16},
  "evaluation": {"n_prompts": 12, "max_response_len": 6}
})";
}

}  // namespace

TEST_CASE("generate-data writes a deterministic JSONL file with a header") {
    REQUIRE(run("generate-data --n 50 --vocab 12 --seed 9 --out /tmp/dpalign_cli_a.jsonl") == 0);
    REQUIRE(run("generate-data --n 50 --vocab 12 --seed 9 --out /tmp/dpalign_cli_b.jsonl") == 0);
    const std::string a = read_file("/tmp/dpalign_cli_a.jsonl");
    CHECK(a == read_file("/tmp/dpalign_cli_b.jsonl"));
    // header + 50 rows
    std::size_t lines = 0;
    for (char c : a) {
        if (c == '\n') ++lines;
    }
    CHECK(lines == 51);
}

TEST_CASE("generate-data without --out is a usage error") {
    CHECK(run("generate-data --n 10 --vocab 12") == 1);
}

TEST_CASE("accountant prints the calibrated sigma and handles sentinels") {
    REQUIRE(run("accountant --epsilon 1 --delta 1e-5 --epochs 1") == 0);
    CHECK(read_file("/tmp/dpalign_cli_out.txt").find("6.85159") != std::string::npos);
    REQUIRE(run("accountant --epsilon inf --delta 1e-5 --epochs 3") == 0);
    CHECK(read_file("/tmp/dpalign_cli_out.txt").find("sigma = 0.00000") != std::string::npos);
    REQUIRE(run("accountant --sigma 6.85159 --delta 1e-5 --epochs 1") == 0);
    CHECK(read_file("/tmp/dpalign_cli_out.txt").find("epsilon = 1.0000") != std::string::npos);
}

TEST_CASE("accountant emits the per-phase composition table") {
    REQUIRE(run("accountant --epsilon 3 --delta 1e-5 --epochs 3 --phases 2 "
                "--csv /tmp/dpalign_cli_phases.csv") == 0);
    const std::string text = read_file("/tmp/dpalign_cli_out.txt");
    CHECK(text.find("parallel (disjoint partitions)") != std::string::npos);
    CHECK(text.find("overall: (3,") != std::string::npos);
    const std::string csv = read_file("/tmp/dpalign_cli_phases.csv");
    CHECK(csv.find("phase,epsilon,delta") != std::string::npos);
    CHECK(csv.find("overall,3,") != std::string::npos);
}

TEST_CASE("accountant rejects contradictory flags") {
    CHECK(run("accountant --epsilon 1 --sigma 2 --delta 1e-5") == 2);
    CHECK(run("accountant --delta 1e-5") == 2);
}

TEST_CASE("analyze reproduces the reference-grid arithmetic from the bundled fixture") {
    REQUIRE(run("analyze --input " + kData + "/reference_scores_main.csv "
                "--model LLAMA-8B --optimizer DP-ADAMW --method DPO "
                "--out-csv /tmp/dpalign_cli_gains.csv") == 0);
    const std::string text = read_file("/tmp/dpalign_cli_out.txt");
    CHECK(text.find("+0.2088") != std::string::npos);
    CHECK(text.find("+14.0%") != std::string::npos);
    CHECK(text.find("critical_epsilon 1") != std::string::npos);
    const std::string csv = read_file("/tmp/dpalign_cli_gains.csv");
    CHECK(csv.find("1,2,0.2088,+14.0%,up") != std::string::npos);
    CHECK(csv.find("2,3,0.1798,+10.6%,up") != std::string::npos);
}

TEST_CASE("analyze on a fixture with several rows demands a row selector") {
    CHECK(run("analyze --input " + kData + "/reference_scores_main.csv") == 2);
}

TEST_CASE("train writes a checkpoint and report; reruns are byte-identical") {
    write_small_config("/tmp/dpalign_cli_cfg.json");
    REQUIRE(run("train --config /tmp/dpalign_cli_cfg.json --out-dir /tmp/dpalign_cli_run1") == 0);
    REQUIRE(run("train --config /tmp/dpalign_cli_cfg.json --out-dir /tmp/dpalign_cli_run2") == 0);
    std::ifstream f1("/tmp/dpalign_cli_run1/policy.ckpt", std::ios::binary);
    std::ifstream f2("/tmp/dpalign_cli_run2/policy.ckpt", std::ios::binary);
    REQUIRE(f1.good());
    REQUIRE(f2.good());
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
    const std::string report = read_file("/tmp/dpalign_cli_run1/report.json");
    CHECK(report.find("\"pipeline\": \"dpo\"") != std::string::npos);
    CHECK(report.find("\"epsilon\": \"inf\"") != std::string::npos);
}

TEST_CASE("train at epsilon 0 reports pure-noise mode") {
    write_small_config("/tmp/dpalign_cli_cfg0.json", "\"0\"");
    REQUIRE(run("train --config /tmp/dpalign_cli_cfg0.json --out-dir /tmp/dpalign_cli_run0") == 0);
    CHECK(read_file("/tmp/dpalign_cli_out.txt").find("pure-noise mode") != std::string::npos);
    CHECK(read_file("/tmp/dpalign_cli_run0/report.json").find("\"pure_noise\": true") !=
          std::string::npos);
}

TEST_CASE("train rejects an invalid config with every violation listed, exit 2") {
    {
        std::ofstream os("/tmp/dpalign_cli_bad.json");
        os << R"({"pipeline": "dpo", "optimizer": {"beta1": 1.5, "mystery": 1},
                  "privacy": {"delta": 2.0}, "training": {"epochs": 0}})";
    }
    CHECK(run("train --config /tmp/dpalign_cli_bad.json --out-dir /tmp/x") == 2);
    const std::string text = read_file("/tmp/dpalign_cli_out.txt");
    CHECK(text.find("optimizer.beta1") != std::string::npos);
    CHECK(text.find("optimizer.mystery") != std::string::npos);
    CHECK(text.find("privacy.delta") != std::string::npos);
    CHECK(text.find("training.epochs") != std::string::npos);
}

TEST_CASE("sweep produces a curve JSON and a results CSV that round-trips") {
    write_small_config("/tmp/dpalign_cli_cfg2.json", "3");
    REQUIRE(run("sweep --config /tmp/dpalign_cli_cfg2.json --epsilons 3,inf --seeds 4 "
                "--out-dir /tmp/dpalign_cli_sweep --label tiny") == 0);
    const std::string curve_text = read_file("/tmp/dpalign_cli_sweep/curve.json");
    dpalign::SweepCurve curve =
        dpalign::SweepCurve::from_json(nlohmann::json::parse(curve_text));
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[0].epsilon == 3.0);
    CHECK(std::isinf(curve.points[1].epsilon));
    CHECK(curve.points[0].sigma > 0.0);
    // emitted table loads back through the canonical loader
    dpalign::ResultsTable table =
        dpalign::load_results_csv("/tmp/dpalign_cli_sweep/results.csv");
    CHECK(table.rows.size() == 1);
    CHECK(table.rows[0].model == "tiny");
    const std::string reemit = "/tmp/dpalign_cli_sweep/results2.csv";
    dpalign::emit_results_table(table, reemit);
    CHECK(read_file(reemit) == read_file("/tmp/dpalign_cli_sweep/results.csv"));
}

TEST_CASE("epsilon grid spelling: a malformed epsilon fails fast") {
    write_small_config("/tmp/dpalign_cli_cfg3.json");
    CHECK(run("sweep --config /tmp/dpalign_cli_cfg3.json --epsilons 0,1,bogus --seeds 1 "
              "--out-dir /tmp/x2") == 2);
}

TEST_CASE("the full reference epsilon grid '0,1,2,3,4,5,10,inf' parses and runs") {
    write_small_config("/tmp/dpalign_cli_cfg4.json");
    REQUIRE(run("sweep --config /tmp/dpalign_cli_cfg4.json --epsilons 0,1,2,3,4,5,10,inf "
                "--seeds 1 --out-dir /tmp/dpalign_cli_grid") == 0);
    dpalign::SweepCurve curve = dpalign::SweepCurve::from_json(
        nlohmann::json::parse(read_file("/tmp/dpalign_cli_grid/curve.json")));
    REQUIRE(curve.points.size() == 8);
    CHECK(curve.points.front().epsilon == 0.0);
    CHECK(std::isinf(curve.points.back().epsilon));
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& p : curve.points) {
        if (p.epsilon > 0.0 && std::isfinite(p.epsilon)) {
            CHECK(p.sigma < prev);
            prev = p.sigma;
        }
    }
}

TEST_SUITE_END();
