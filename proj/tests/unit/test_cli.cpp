#include "doctest.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "faultline/attack/bfa.hpp"
#include "faultline/cli/cli.hpp"
#include "faultline/dram/profiler.hpp"
#include "faultline/qnn/quant.hpp"
#include "helpers.hpp"

using namespace faultline;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Small-chip flag set matching testutil::small_chip.
std::vector<std::string> small_chip_flags() {
    return {"--rows", "32", "--bits-per-row", "256", "--t-refw-ms", "2",
            "--max-hc", "50000", "--hc-low", "2000", "--hc-high", "50000",
            "--press-low", "100000", "--press-high", "3000000"};
}

int gen_small_chip(const testutil::TempDir& dir, const std::string& name, uint64_t seed) {
    std::vector<std::string> args{"gen-chip", "--seed", std::to_string(seed), "-o",
                                  dir.file(name)};
    const auto flags = small_chip_flags();
    args.insert(args.end() - 2, flags.begin(), flags.end());
    return cli::run(args);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
    CHECK(cli::run({"frobnicate"}) == 2);
    CHECK(cli::run({"gen-chip"}) == 2);           // missing -o
    CHECK(cli::run({"profile", "-o", "x"}) == 2);  // missing --chip/--mech
    CHECK(cli::run({}) == 2);
}

TEST_CASE("gen-chip output is byte-identical across runs") {
    testutil::TempDir dir("cli_gen");
    REQUIRE(gen_small_chip(dir, "a.json", 7) == 0);
    REQUIRE(gen_small_chip(dir, "b.json", 7) == 0);
    CHECK(slurp(dir.file("a.json")) == slurp(dir.file("b.json")));
    REQUIRE(gen_small_chip(dir, "c.json", 8) == 0);
    CHECK(slurp(dir.file("a.json")) != slurp(dir.file("c.json")));
    // A manifest is written alongside the output.
    CHECK(!slurp(dir.file("a.json.manifest.json")).empty());
}

TEST_CASE("invalid flag values exit with 2") {
    testutil::TempDir dir("cli_invalid");
    CHECK(cli::run({"gen-chip", "--rh-density", "1.5", "-o", dir.file("x.json")}) == 2);
    CHECK(cli::run({"gen-chip", "--bits-per-row", "7", "-o", dir.file("x.json")}) == 2);
}

TEST_CASE("config files mirror flags and flags override the file") {
    testutil::TempDir dir("cli_config");
    {
        std::ofstream cfg(dir.file("cfg.json"));
        cfg << R"({"rows": 32, "bits-per-row": 256, "t-refw-ms": 2, "max-hc": 50000,
                   "hc-low": 2000, "hc-high": 50000, "press-low": 100000,
                   "press-high": 3000000, "seed": 7})";
    }
    REQUIRE(cli::run({"gen-chip", "--config", dir.file("cfg.json"), "-o",
                      dir.file("from_config.json")}) == 0);
    REQUIRE(gen_small_chip(dir, "from_flags.json", 7) == 0);
    CHECK(slurp(dir.file("from_config.json")) == slurp(dir.file("from_flags.json")));

    // An explicit flag wins over the file.
    REQUIRE(cli::run({"gen-chip", "--config", dir.file("cfg.json"), "--seed", "9", "-o",
                      dir.file("override.json")}) == 0);
    REQUIRE(gen_small_chip(dir, "seed9.json", 9) == 0);
    CHECK(slurp(dir.file("override.json")) == slurp(dir.file("seed9.json")));
}

TEST_CASE("the full pipeline runs end to end") {
    testutil::TempDir dir("cli_pipeline");
    REQUIRE(gen_small_chip(dir, "chip.json", 7) == 0);

    REQUIRE(cli::run({"profile", "--chip", dir.file("chip.json"), "--mech", "rp", "-o",
                      dir.file("rp.csv")}) == 0);
    REQUIRE(cli::run({"profile", "--chip", dir.file("chip.json"), "--mech", "rh", "-o",
                      dir.file("rh.csv")}) == 0);

    REQUIRE(cli::run({"train-victim", "--dataset", "blobs", "--classes", "4", "--samples",
                      "400", "--arch", "dense:8,relu,dense:4", "--epochs", "8", "--seed", "5",
                      "-o", dir.file("m.qnn")}) == 0);

    REQUIRE(cli::run({"attack", "--chip", dir.file("chip.json"), "--model", dir.file("m.qnn"),
                      "--profile", dir.file("rp.csv"), "--seed", "1", "--max-flips", "100",
                      "-o", dir.file("attack.json")}) == 0);
    CHECK(slurp(dir.file("attack.json")).find("\"succeeded\"") != std::string::npos);
    CHECK(slurp(dir.file("attack.json.csv")).rfind("iteration,loss", 0) == 0);

    REQUIRE(cli::run({"report", "--inputs",
                      dir.file("attack.json") + "," + dir.file("rp.csv"), "-o",
                      dir.file("report.md")}) == 0);
    CHECK(slurp(dir.file("report.md")).find("Attack run") != std::string::npos);
}

TEST_CASE("curve output matches the library flip curve") {
    testutil::TempDir dir("cli_curve");
    REQUIRE(gen_small_chip(dir, "chip.json", 7) == 0);
    REQUIRE(cli::run({"curve", "--chip", dir.file("chip.json"), "--mech", "rp", "--grid",
                      "log16", "-o", dir.file("curve.csv")}) == 0);

    dram::ChipState chip = dram::load_chip_descriptor(dir.file("chip.json"));
    auto profile = dram::profile_chip(chip, dram::Mechanism::RP,
                                      dram::default_max_budget(chip, dram::Mechanism::RP));
    auto expected =
        dram::flip_curve(profile, dram::log_budget_grid(chip, dram::Mechanism::RP, 16));

    std::istringstream csv(slurp(dir.file("curve.csv")));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "budget,cumulative_flips");
    size_t i = 0;
    uint64_t prev = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        REQUIRE(i < expected.points.size());
        CHECK(std::stoull(line.substr(0, comma)) == expected.points[i].first);
        const uint64_t flips = std::stoull(line.substr(comma + 1));
        CHECK(flips == expected.points[i].second);
        CHECK(flips >= prev);
        prev = flips;
        ++i;
    }
    CHECK(i == 16);
}

TEST_CASE("fingerprint mismatches are reported as runtime failures") {
    testutil::TempDir dir("cli_fp");
    REQUIRE(gen_small_chip(dir, "chip_a.json", 7) == 0);
    REQUIRE(gen_small_chip(dir, "chip_b.json", 8) == 0);
    REQUIRE(cli::run({"profile", "--chip", dir.file("chip_a.json"), "--mech", "rp", "-o",
                      dir.file("rp.csv")}) == 0);
    REQUIRE(cli::run({"train-victim", "--dataset", "blobs", "--classes", "4", "--samples",
                      "400", "--arch", "dense:8,relu,dense:4", "--epochs", "2", "--seed", "5",
                      "-o", dir.file("m.qnn")}) == 0);
    CHECK(cli::run({"attack", "--chip", dir.file("chip_b.json"), "--model", dir.file("m.qnn"),
                    "--profile", dir.file("rp.csv"), "-o", dir.file("attack.json")}) == 1);
}

TEST_CASE("compare aggregates exactly what direct attack runs produce") {
    testutil::TempDir dir("cli_compare");
    REQUIRE(gen_small_chip(dir, "chip.json", 7) == 0);
    REQUIRE(cli::run({"profile", "--chip", dir.file("chip.json"), "--mech", "rp", "-o",
                      dir.file("rp.csv")}) == 0);
    REQUIRE(cli::run({"profile", "--chip", dir.file("chip.json"), "--mech", "rh", "-o",
                      dir.file("rh.csv")}) == 0);
    REQUIRE(cli::run({"train-victim", "--dataset", "blobs", "--classes", "4", "--samples",
                      "400", "--arch", "dense:8,relu,dense:4", "--epochs", "8", "--seed", "5",
                      "-o", dir.file("m.qnn")}) == 0);
    REQUIRE(cli::run({"compare", "--chip", dir.file("chip.json"), "--model", dir.file("m.qnn"),
                      "--profiles", dir.file("rh.csv") + "," + dir.file("rp.csv"), "--seeds",
                      "3", "--max-flips", "400", "-o", dir.file("cmp.json")}) == 0);

    nlohmann::json cmp = nlohmann::json::parse(slurp(dir.file("cmp.json")));
    REQUIRE(cmp.contains("median_flips_rp"));
    REQUIRE(cmp.contains("flip_ratio_rh_over_rp"));

    // Replicate one of the runs directly through the library.
    dram::ChipState chip = dram::load_chip_descriptor(dir.file("chip.json"));
    auto profile = dram::load_profile(dir.file("rp.csv"));
    qnn::QuantizedModel model = qnn::load_model(dir.file("m.qnn"));
    qnn::Dataset data = qnn::make_dataset(qnn::DatasetKind::Blobs, 4, 400, 1);
    attack::WeightMap map =
        attack::build_weight_map(model, chip, attack::MapLayout::SeededShuffle, 0);
    attack::AttackConfig config;
    config.max_flips = 400;
    attack::AttackBatch batch = attack::make_attack_batch(data, 128, 0);
    attack::AttackResult direct =
        attack::run_attack(model, chip, profile, map, config, batch, data);
    CHECK(cmp["profiles"]["rp"]["runs"][0]["flips"].get<uint64_t>() == direct.total_flips);
}

}  // TEST_SUITE
