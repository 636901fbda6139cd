#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "faultline/attack/bfa.hpp"
#include "helpers.hpp"

using namespace faultline;
using namespace faultline::attack;
namespace qn = faultline::qnn;
namespace dr = faultline::dram;

namespace {

struct Bench {
    dr::ChipState chip;
    qn::Dataset data;
    qn::QuantizedModel model;
    AttackBatch batch;

    Bench(uint64_t chip_seed, const std::string& spec_text, int epochs = 6)
        : chip(testutil::small_chip(chip_seed)),
          data(qn::make_dataset(qn::DatasetKind::Blobs, 4, 400, 3)) {
        qn::TrainOptions opts;
        opts.epochs = epochs;
        opts.lr = 0.05;
        opts.seed = 5;
        model = qn::quantize(qn::train_float(qn::ModelSpec::parse(spec_text), data, opts), 8);
        batch = make_attack_batch(data, 32, 1);
    }
};

// A profile that marks every mapped cell vulnerable, used to lift the
// search-space restriction.
dr::VulnProfile full_profile(const qn::QuantizedModel& model, const WeightMap& map,
                             const dr::ChipState& chip) {
    dr::VulnProfile p;
    p.mechanism = dr::Mechanism::RP;
    p.chip_fingerprint = chip.fingerprint();
    p.max_budget = dr::default_max_budget(chip, dr::Mechanism::RP);
    for (size_t layer = 0; layer < model.layer_count(); ++layer)
        for (size_t w = 0; w < model.weight_count(layer); ++w)
            for (uint32_t b = 0; b < 8; ++b)
                p.cells.push_back({map.at(static_cast<uint32_t>(layer),
                                          static_cast<uint32_t>(w),
                                          static_cast<uint8_t>(b)),
                                   200'000, dr::FlipDirection::ZeroToOne});
    std::sort(p.cells.begin(), p.cells.end(),
              [](const dr::ProfiledCell& a, const dr::ProfiledCell& b) {
                  return a.addr < b.addr;
              });
    return p;
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("sequential map packs one full row exactly") {
    dr::VulnerabilityConfig v;
    v.rh_cell_density = 0.0;
    v.rp_cell_density = 0.0;
    v.overlap_fraction = 0.0;
    v.seed = 1;
    dr::ChipState chip = dr::generate_chip({1, 16, 1024}, {}, v);
    qn::FloatModel fm = qn::build_model(qn::ModelSpec::parse("dense:4"), qn::Shape::flat(32), 2);
    qn::QuantizedModel qm = qn::quantize(fm, 8);  // 128 weights * 8 bits = 1024
    WeightMap map = build_weight_map(qm, chip, MapLayout::Sequential, 0, 0, 10);
    CHECK(map.total_bits() == 1024);
    std::unordered_set<uint32_t> cols;
    for (const auto& addr : map.addrs[0]) {
        CHECK(addr.row == 10);
        cols.insert(addr.column);
    }
    CHECK(cols.size() == 1024);
}

TEST_CASE("seeded shuffle is deterministic and injective") {
    Bench bench(80, "dense:8,relu,dense:4");
    WeightMap a = build_weight_map(bench.model, bench.chip, MapLayout::SeededShuffle, 42);
    WeightMap b = build_weight_map(bench.model, bench.chip, MapLayout::SeededShuffle, 42);
    WeightMap c = build_weight_map(bench.model, bench.chip, MapLayout::SeededShuffle, 43);
    CHECK(a.addrs == b.addrs);
    CHECK(a.addrs != c.addrs);

    std::unordered_set<dr::DramAddress, dr::DramAddressHash> seen;
    for (const auto& layer : a.addrs)
        for (const auto& addr : layer) {
            CHECK(addr.in(bench.chip.geometry()));
            CHECK(addr.row >= 1);
            CHECK(addr.row + 1 < bench.chip.geometry().rows_per_bank);
            CHECK(seen.insert(addr).second);
        }
    CHECK(seen.size() == a.total_bits());
}

TEST_CASE("oversized models are rejected") {
    dr::VulnerabilityConfig v;
    v.rh_cell_density = 0.0;
    v.rp_cell_density = 0.0;
    v.overlap_fraction = 0.0;
    v.seed = 1;
    dr::ChipState tiny = dr::generate_chip({1, 4, 8}, {}, v);  // 16 usable bits
    qn::QuantizedModel qm =
        qn::quantize(qn::build_model(qn::ModelSpec::parse("dense:4"), qn::Shape::flat(8), 2), 8);
    CHECK_THROWS_AS(build_weight_map(qm, tiny, MapLayout::Sequential), ValidationError);
}

TEST_CASE("feasible bits intersect the map with the profile") {
    Bench bench(81, "dense:8,relu,dense:4");
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);

    dr::VulnProfile empty;
    empty.mechanism = dr::Mechanism::RP;
    empty.chip_fingerprint = bench.chip.fingerprint();
    CHECK(feasible_bits(bench.model, map, empty, false).total() == 0);

    dr::VulnProfile full = full_profile(bench.model, map, bench.chip);
    CHECK(feasible_bits(bench.model, map, full, false).total() == bench.model.total_weight_bits());

    // Direction awareness: a cell flipping 1 -> 0 is only feasible while the
    // mapped bit currently stores 1.
    const dr::DramAddress addr = map.at(0, 3, 2);
    dr::VulnProfile one;
    one.mechanism = dr::Mechanism::RP;
    one.chip_fingerprint = bench.chip.fingerprint();
    one.cells.push_back({addr, 200'000, dr::FlipDirection::OneToZero});
    const uint8_t stored = bench.model.bit(0, 3, 2);
    const auto feas = feasible_bits(bench.model, map, one, true);
    CHECK(feas.total() == (stored == 1 ? 1 : 0));

    dr::VulnProfile alien = full;
    alien.chip_fingerprint = "elsewhere";
    CHECK_THROWS_AS(feasible_bits(bench.model, map, alien, true), FingerprintMismatch);
}

TEST_CASE("a single feasible bit is the forced choice") {
    Bench bench(82, "dense:8,relu,dense:4");
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);
    dr::VulnProfile one;
    one.mechanism = dr::Mechanism::RP;
    one.chip_fingerprint = bench.chip.fingerprint();
    one.cells.push_back({map.at(2, 3, 6), 200'000, dr::FlipDirection::ZeroToOne});

    FeasibleBitSet feas = feasible_bits(bench.model, map, one, false);
    REQUIRE(feas.total() == 1);
    qn::QuantizedModel model = bench.model;
    IterationOutcome out = bfa_iteration(model, feas, bench.batch);
    CHECK(out.committed.layer == 2);
    CHECK(out.committed.weight == 3);
    CHECK(out.committed.bit == 6);
    CHECK(feas.total() == 0);
    const double post =
        qn::forward_loss(model, bench.batch.x, bench.batch.batch, bench.batch.labels).loss;
    CHECK(post == out.committed_loss);
}

TEST_CASE("the committed flip carries the maximum recorded trial loss") {
    Bench bench(83, "dense:8,relu,dense:4");
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);
    dr::VulnProfile full = full_profile(bench.model, map, bench.chip);
    FeasibleBitSet feas = feasible_bits(bench.model, map, full, false);
    qn::QuantizedModel model = bench.model;
    for (int i = 0; i < 5; ++i) {
        IterationOutcome out = bfa_iteration(model, feas, bench.batch);
        double max_trial = -1.0;
        for (double l : out.trial_losses)
            if (!std::isnan(l)) max_trial = std::max(max_trial, l);
        CHECK(out.committed_loss == max_trial);
        const double post =
            qn::forward_loss(model, bench.batch.x, bench.batch.batch, bench.batch.labels).loss;
        CHECK(post == out.committed_loss);
    }
}

TEST_CASE("greedy picks land in the top decile of all single-bit flips") {
    // 64 weights -> 512 bits, small enough to enumerate every single flip.
    dr::ChipState chip = testutil::small_chip(84);
    qn::Dataset data = qn::make_dataset(qn::DatasetKind::Blobs, 2, 200, 3);
    qn::TrainOptions opts;
    opts.epochs = 8;
    opts.lr = 0.05;
    opts.seed = 5;
    qn::QuantizedModel model =
        qn::quantize(qn::train_float(qn::ModelSpec::parse("dense:2"), data, opts), 8);
    AttackBatch batch = make_attack_batch(data, 32, 1);

    WeightMap map = build_weight_map(model, chip, MapLayout::Sequential);
    dr::VulnProfile full = full_profile(model, map, chip);
    FeasibleBitSet feas = feasible_bits(model, map, full, false);

    // Brute-force single-flip landscape.
    std::vector<double> losses;
    for (size_t w = 0; w < model.weight_count(0); ++w)
        for (uint32_t b = 0; b < 8; ++b) {
            model.flip_bit(0, w, b);
            losses.push_back(qn::forward_loss(model, batch.x, batch.batch, batch.labels).loss);
            model.flip_bit(0, w, b);
        }

    IterationOutcome out = bfa_iteration(model, feas, batch);
    std::sort(losses.begin(), losses.end(), std::greater<>());
    const auto decile = losses[losses.size() / 10];
    CHECK(out.committed_loss >= decile);
}

TEST_CASE("an already-satisfied objective returns an empty attack") {
    Bench bench(85, "dense:8,relu,dense:4");
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);
    dr::VulnProfile full = full_profile(bench.model, map, bench.chip);
    AttackConfig config;
    config.objective_accuracy = 1.1;  // trivially satisfied
    dr::ChipState chip = bench.chip;
    qn::QuantizedModel model = bench.model;
    AttackResult res = run_attack(model, chip, full, map, config, bench.batch, bench.data);
    CHECK(res.succeeded);
    CHECK(res.total_flips == 0);
    CHECK(res.loss_trajectory.size() == 1);
}

TEST_CASE("a logical attack with the full search space reaches the objective") {
    Bench bench(86, "dense:8,relu,dense:4", 8);
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);
    dr::VulnProfile full = full_profile(bench.model, map, bench.chip);
    AttackConfig config;
    config.max_flips = 60;
    dr::ChipState chip = bench.chip;
    qn::QuantizedModel model = bench.model;
    const qn::QuantizedModel original = model;
    AttackResult res = run_attack(model, chip, full, map, config, bench.batch, bench.data);
    CHECK(res.succeeded);
    CHECK(res.baseline_accuracy >= 0.9);
    CHECK(res.final_accuracy <= res.objective_accuracy);
    CHECK(res.greedy_invariant_held);
    CHECK(res.total_flips == res.flips.size());
    CHECK(res.loss_trajectory.size() == res.total_flips + 1);
    CHECK(res.accuracy_trajectory.size() == res.total_flips + 1);
    CHECK(bit_distance(original, model) == res.total_flips);
    CHECK(flips_within_profile(res, full));
}

TEST_CASE("restricting the profile never helps the attacker") {
    Bench bench(87, "dense:8,relu,dense:4", 8);
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);
    dr::VulnProfile full = full_profile(bench.model, map, bench.chip);
    dr::VulnProfile measured =
        dr::profile_chip(bench.chip, dr::Mechanism::RP,
                         dr::default_max_budget(bench.chip, dr::Mechanism::RP));

    AttackConfig config;
    config.max_flips = 200;
    config.direction_aware = false;

    dr::ChipState chip_a = bench.chip;
    qn::QuantizedModel model_a = bench.model;
    AttackResult unrestricted =
        run_attack(model_a, chip_a, full, map, config, bench.batch, bench.data);

    dr::ChipState chip_b = bench.chip;
    qn::QuantizedModel model_b = bench.model;
    AttackResult restricted =
        run_attack(model_b, chip_b, measured, map, config, bench.batch, bench.data);

    CHECK(unrestricted.succeeded);
    CHECK(restricted.succeeded);
    CHECK(unrestricted.total_flips <= restricted.total_flips);
}

TEST_CASE("an empty profile exhausts immediately") {
    Bench bench(88, "dense:8,relu,dense:4");
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);
    dr::VulnProfile empty;
    empty.mechanism = dr::Mechanism::RP;
    empty.chip_fingerprint = bench.chip.fingerprint();
    AttackConfig config;
    dr::ChipState chip = bench.chip;
    qn::QuantizedModel model = bench.model;
    CHECK_THROWS_AS(run_attack(model, chip, empty, map, config, bench.batch, bench.data),
                    ProfileExhausted);
}

TEST_CASE("logical and physical commits produce identical attacks") {
    Bench bench(89, "dense:8,relu,dense:4", 8);
    dr::VulnProfile profile =
        dr::profile_chip(bench.chip, dr::Mechanism::RP,
                         dr::default_max_budget(bench.chip, dr::Mechanism::RP));
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::SeededShuffle, 4);

    AttackConfig config;
    config.direction_aware = true;
    config.max_flips = 4;  // stop before exhaustion; equivalence is per-flip

    dr::ChipState chip_l = bench.chip;
    qn::QuantizedModel model_l = bench.model;
    AttackResult logical =
        run_attack(model_l, chip_l, profile, map, config, bench.batch, bench.data);

    config.commit_mode = CommitMode::Physical;
    dr::ChipState chip_p = bench.chip;
    qn::QuantizedModel model_p = bench.model;
    AttackResult physical =
        run_attack(model_p, chip_p, profile, map, config, bench.batch, bench.data);

    REQUIRE(logical.flips.size() == physical.flips.size());
    for (size_t i = 0; i < logical.flips.size(); ++i) {
        CHECK(logical.flips[i].layer == physical.flips[i].layer);
        CHECK(logical.flips[i].weight == physical.flips[i].weight);
        CHECK(logical.flips[i].bit == physical.flips[i].bit);
        CHECK_FALSE(physical.flips[i].collateral);
    }
    CHECK(logical.final_accuracy == physical.final_accuracy);
    CHECK(physical.time_budget_cycles > 0);
    // Physical commits land on the chip as well as in the model.
    for (const auto& f : physical.flips)
        CHECK(chip_p.bit(f.addr.bank, f.addr.row, f.addr.column) == f.post_bit);
}

TEST_CASE("a physically impossible direction raises a mismatch") {
    Bench bench(90, "dense:8,relu,dense:4");
    WeightMap map = build_weight_map(bench.model, bench.chip, MapLayout::Sequential);

    // Find a mapped bit whose stored value contradicts the claimed direction.
    dr::VulnProfile lie;
    lie.mechanism = dr::Mechanism::RP;
    lie.chip_fingerprint = bench.chip.fingerprint();
    for (size_t w = 0; w < bench.model.weight_count(0); ++w)
        if (bench.model.bit(0, w, 0) == 0) {
            lie.cells.push_back({map.at(0, static_cast<uint32_t>(w), 0), 200'000,
                                 dr::FlipDirection::OneToZero});
            break;
        }
    REQUIRE(lie.cells.size() == 1);

    AttackConfig config;
    config.direction_aware = false;  // keep the impossible bit feasible
    config.commit_mode = CommitMode::Physical;
    dr::ChipState chip = bench.chip;
    qn::QuantizedModel model = bench.model;
    CHECK_THROWS_AS(run_attack(model, chip, lie, map, config, bench.batch, bench.data),
                    PhysicalFlipMismatch);
}

}  // TEST_SUITE
