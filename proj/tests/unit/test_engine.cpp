#include "doctest.h"

#include <algorithm>

#include "faultline/dram/engine.hpp"
#include "faultline/dram/injector.hpp"
#include "helpers.hpp"

using namespace faultline;
using namespace faultline::dram;

namespace {

std::vector<uint8_t> row_fill(const ChipState& chip, uint8_t bit) {
    return std::vector<uint8_t>(chip.geometry().bytes_per_row(), bit ? 0xff : 0x00);
}

CommandTrace pair_loop(uint16_t bank, uint32_t row, uint64_t n) {
    CommandTrace t;
    for (uint64_t i = 0; i < n; ++i) {
        t.push(DramCommand::act(bank, row));
        t.push(DramCommand::pre(bank, row));
    }
    return t;
}

// Independent statement of the press flip rule, evaluated over ground truth.
std::vector<DramAddress> expected_press_flips(const ChipState& chip, uint16_t bank,
                                              uint32_t aggressor, Cycles open_cycles) {
    std::vector<DramAddress> out;
    for (int d : {-1, 1}) {
        const int64_t v = static_cast<int64_t>(aggressor) + d;
        if (v < 0 || v >= static_cast<int64_t>(chip.geometry().rows_per_bank)) continue;
        const auto victim = static_cast<uint32_t>(v);
        for (const VulnCell& c : chip.cells(bank, victim)) {
            if (!is_press_capable(c.mechanism)) continue;
            if (c.press_threshold > open_cycles) continue;
            const uint8_t bit_v = chip.bit(bank, victim, c.column);
            if (bit_v == chip.bit(bank, aggressor, c.column)) continue;
            if (bit_v != from_value(c.direction)) continue;
            out.push_back({bank, victim, c.column});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_SUITE("command-engine") {

TEST_CASE("trace text round trips and rejects malformed lines") {
    CommandTrace t;
    t.push(DramCommand::act(0, 5));
    t.push(DramCommand::sleep(123));
    t.push(DramCommand::pre(0, 5));
    t.push_wr(0, 7, {0xde, 0xad});
    t.push(DramCommand::rd(0, 7));
    t.push(DramCommand::ref());
    t.push(DramCommand::nrr(0, 9));
    const std::string text = format_trace(t);
    CommandTrace back = parse_trace(text);
    CHECK(format_trace(back) == text);

    CHECK_THROWS_WITH_AS(parse_trace("ACT 0\n"), doctest::Contains("line 1"), ParseError);
    CHECK_THROWS_WITH_AS(parse_trace("ACT 0 1\nBOGUS\n"), doctest::Contains("line 2"),
                         ParseError);
    CHECK_THROWS_WITH_AS(parse_trace("WR 0 1 zz\n"), doctest::Contains("line 1"), ParseError);
}

TEST_CASE("single pair below every threshold flips nothing") {
    ChipState chip = testutil::small_chip(1);
    write_row(chip, 0, 4, row_fill(chip, 1));
    write_row(chip, 0, 6, row_fill(chip, 1));
    write_row(chip, 0, 5, row_fill(chip, 0));
    auto report = execute_trace(chip, pair_loop(0, 4, 1), DefenseConfig::unlimited());
    CHECK(report.flips.empty());
}

TEST_CASE("clock accounting is exact") {
    ChipState chip = testutil::small_chip(2);
    const auto& t = chip.timing();
    CommandTrace trace;
    trace.push(DramCommand::act(0, 3));
    trace.push(DramCommand::pre(0, 3));
    trace.push(DramCommand::act(0, 3));
    trace.push(DramCommand::sleep(1000));
    trace.push(DramCommand::pre(0, 3));
    trace.push(DramCommand::sleep(77));
    auto report = execute_trace(chip, trace, DefenseConfig::unlimited());
    const Cycles pair = t.t_ras_cycles + t.sleep_cycles + t.t_rp_cycles;
    CHECK(report.total_cycles == 2 * pair + 1000 + 77);
}

TEST_CASE("protocol violations are rejected") {
    ChipState chip = testutil::small_chip(3);
    Engine e(chip, DefenseConfig::unlimited());
    e.step(DramCommand::act(0, 3));
    CHECK_THROWS_AS(e.step(DramCommand::act(0, 4)), ProtocolViolation);
    CHECK_THROWS_AS(e.step(DramCommand::pre(0, 4)), ProtocolViolation);
    CHECK_THROWS_AS(e.step(DramCommand::rd(0, 3)), ProtocolViolation);
    CHECK_THROWS_AS(e.step(DramCommand::ref()), ProtocolViolation);
    auto payload = row_fill(chip, 1);
    CHECK_THROWS_AS(write_row(chip, 0, 5, payload), ProtocolViolation);
    e.step(DramCommand::pre(0, 3));
    CHECK_NOTHROW(e.step(DramCommand::act(0, 4)));
}

TEST_CASE("out of range addresses are rejected") {
    ChipState chip = testutil::small_chip(3);
    Engine e(chip, DefenseConfig::unlimited());
    CHECK_THROWS_AS(e.step(DramCommand::act(0, 1 << 20)), ProtocolViolation);
    CHECK_THROWS_AS(e.step(DramCommand::act(3, 0)), ProtocolViolation);
}

TEST_CASE("write and read rows round trip without cross talk") {
    ChipState chip = testutil::small_chip(4);
    auto ones = row_fill(chip, 1);
    write_row(chip, 0, 10, ones);
    write_row(chip, 0, 11, row_fill(chip, 0));
    CHECK(read_row(chip, 0, 10) == ones);
    CHECK(read_row(chip, 0, 11) == row_fill(chip, 0));
}

TEST_CASE("writing a row clears its disturbance accumulators") {
    ChipState chip = testutil::small_chip(5);
    execute_trace(chip, pair_loop(0, 4, 10), DefenseConfig::unlimited());
    CHECK(chip.row_state(0, 3).disturb_hc == 10);
    CHECK(chip.row_state(0, 5).disturb_hc == 10);
    CHECK(chip.row_state(0, 5).press_max == chip.timing().pair_open_cycles());
    write_row(chip, 0, 5, row_fill(chip, 0));
    CHECK(chip.row_state(0, 5).disturb_hc == 0);
    CHECK(chip.row_state(0, 5).press_max == 0);
    CHECK(chip.row_state(0, 3).disturb_hc == 10);  // untouched row keeps its state
}

TEST_CASE("press flips match the brute-force rule predicate") {
    ChipState chip = testutil::small_chip(6);
    const uint32_t aggressor = 7;
    write_row(chip, 0, aggressor - 1, row_fill(chip, 1));
    write_row(chip, 0, aggressor + 1, row_fill(chip, 1));
    write_row(chip, 0, aggressor, row_fill(chip, 0));

    const Cycles sleep = 1'000'000;
    const Cycles open = chip.timing().pair_open_cycles() + sleep;
    auto expected = expected_press_flips(chip, 0, aggressor, open);

    CommandTrace trace;
    trace.push(DramCommand::act(0, aggressor));
    trace.push(DramCommand::sleep(sleep));
    trace.push(DramCommand::pre(0, aggressor));
    auto report = execute_trace(chip, trace, DefenseConfig::unlimited());

    std::vector<DramAddress> got;
    for (const auto& f : report.flips) got.push_back(f.addr);
    std::sort(got.begin(), got.end());
    CHECK(got == expected);
    CHECK(!got.empty());  // 40M cycles crosses a healthy share of press cells
}

TEST_CASE("identical victim and aggressor patterns never flip") {
    ChipState chip = testutil::small_chip(7);
    for (uint32_t r = 5; r <= 9; ++r) write_row(chip, 0, r, row_fill(chip, 1));
    CommandTrace trace;
    trace.push(DramCommand::act(0, 7));
    trace.push(DramCommand::sleep(chip.timing().refresh_window_cycles() - 1000));
    trace.push(DramCommand::pre(0, 7));
    auto report = execute_trace(chip, trace, DefenseConfig::unlimited());
    CHECK(report.flips.empty());
    report = execute_trace(chip, pair_loop(0, 7, 60'000), DefenseConfig::unlimited());
    CHECK(report.flips.empty());
}

TEST_CASE("mac defense fires nearby-row refreshes and protects the victim") {
    ChipState chip = testutil::small_chip(8);
    const uint32_t victim = 12;
    write_row(chip, 0, victim - 1, row_fill(chip, 1));
    write_row(chip, 0, victim + 1, row_fill(chip, 1));
    write_row(chip, 0, victim, row_fill(chip, 0));

    const uint64_t t_mac = 1000;
    CommandTrace trace;
    for (uint64_t i = 0; i < t_mac; ++i) {
        trace.push(DramCommand::act(0, victim - 1));
        trace.push(DramCommand::pre(0, victim - 1));
        trace.push(DramCommand::act(0, victim + 1));
        trace.push(DramCommand::pre(0, victim + 1));
    }
    auto report = execute_trace(chip, trace, DefenseConfig::mac(t_mac));
    CHECK(!report.nrr_events.empty());
    CHECK(report.flips_in_row(0, victim).empty());
    CHECK(report.max_row_counter == t_mac);
    // The refresh zeroed the victim's accumulator mid-run.
    CHECK(chip.row_state(0, victim).disturb_hc < 2 * t_mac);
}

TEST_CASE("under mac no cell with threshold at least twice t_mac ever flips") {
    // Between consecutive defense refreshes a double-sided victim accumulates
    // at most 2 * t_mac - 2 checked activations.
    auto vuln = testutil::small_vuln(31);
    vuln.hc_threshold_distribution = {4000, 40000};
    ChipState chip = generate_chip(testutil::small_geometry(), testutil::small_timing(), vuln);
    const uint64_t t_mac = 3000;

    Rng rng(99);
    for (int round = 0; round < 4; ++round) {
        const auto victim = static_cast<uint32_t>(2 + rng.uniform(28));
        ChipState local = chip;
        write_row(local, 0, victim - 1, row_fill(local, 1));
        write_row(local, 0, victim + 1, row_fill(local, 1));
        write_row(local, 0, victim, row_fill(local, 0));
        auto spec = InjectionSpec::hammer(0, victim, 30000, 1);
        auto res = rowhammer_inject(local, spec, DefenseConfig::mac(t_mac));
        for (const auto& f : res.report.flips) {
            const auto truth = local.truth(f.addr);
            REQUIRE(truth.has_value());
            CHECK(truth->hc_threshold < 2 * t_mac);
        }
    }
}

TEST_CASE("defense trip without nrr leaves accumulators alone") {
    ChipState chip = testutil::small_chip(10);
    auto report = execute_trace(chip, pair_loop(0, 6, 50), DefenseConfig::mac(10, false));
    CHECK(report.nrr_events.size() == 5);
    for (const auto& ev : report.nrr_events) CHECK(ev.refreshed_rows.empty());
    CHECK(chip.row_state(0, 5).disturb_hc == 50);
}

TEST_CASE("ref and nrr commands reset disturbance state") {
    ChipState chip = testutil::small_chip(12);
    execute_trace(chip, pair_loop(0, 6, 25), DefenseConfig::unlimited());
    CHECK(chip.row_state(0, 5).disturb_hc == 25);

    CommandTrace nrr;
    nrr.push(DramCommand::nrr(0, 6));
    execute_trace(chip, nrr, DefenseConfig::unlimited());
    CHECK(chip.row_state(0, 5).disturb_hc == 0);
    CHECK(chip.row_state(0, 7).disturb_hc == 0);
    CHECK(chip.row_state(0, 6).act_count == 0);

    execute_trace(chip, pair_loop(0, 6, 5), DefenseConfig::unlimited());
    CommandTrace ref;
    ref.push(DramCommand::ref());
    execute_trace(chip, ref, DefenseConfig::unlimited());
    for (uint32_t r = 0; r < chip.geometry().rows_per_bank; ++r) {
        CHECK(chip.row_state(0, r).disturb_hc == 0);
        CHECK(chip.row_state(0, r).act_count == 0);
    }
}

TEST_CASE("cells without a mechanism never flip under random traces") {
    ChipState chip = testutil::small_chip(13);
    Rng rng(4242);
    for (int round = 0; round < 12; ++round) {
        const auto row = static_cast<uint32_t>(1 + rng.uniform(30));
        const uint8_t pattern = rng.coin(0.5) ? 1 : 0;
        write_row(chip, 0, row - 1, row_fill(chip, pattern));
        write_row(chip, 0, row + 1, row_fill(chip, pattern));
        write_row(chip, 0, row, row_fill(chip, pattern ? 0 : 1));
        CommandTrace trace;
        if (rng.coin(0.5)) {
            trace = pair_loop(0, row, 1 + rng.uniform(60000));
        } else {
            trace.push(DramCommand::act(0, row));
            trace.push(DramCommand::sleep(rng.uniform(4'000'000)));
            trace.push(DramCommand::pre(0, row));
        }
        auto report = execute_trace(chip, trace, DefenseConfig::unlimited());
        for (const auto& f : report.flips) {
            const auto truth = chip.truth(f.addr);
            REQUIRE(truth.has_value());
            CHECK(truth->mechanism != Mechanism::None);
        }
    }
}

TEST_CASE("single-activation traces bypass the activation counter defense") {
    const Cycles sleep = 3'000'000;
    auto run = [&](const DefenseConfig& defense) {
        ChipState chip = testutil::small_chip(14);
        auto spec = InjectionSpec::press(0, 9, sleep, 1);
        auto res = rowpress_inject(chip, spec, defense);
        std::vector<DramAddress> addrs;
        for (const auto& f : res.flips) addrs.push_back(f.addr);
        std::sort(addrs.begin(), addrs.end());
        return addrs;
    };
    const auto unlimited = run(DefenseConfig::unlimited());
    const auto defended = run(DefenseConfig::mac(2));
    CHECK(unlimited == defended);
    CHECK(!unlimited.empty());
}

TEST_CASE("auto refresh wipes accumulators every window") {
    ChipState chip = testutil::small_chip(15);
    DefenseConfig defense;
    defense.auto_refresh = true;
    CommandTrace trace;
    trace.push(DramCommand::act(0, 6));
    trace.push(DramCommand::pre(0, 6));
    trace.push(DramCommand::sleep(chip.timing().refresh_window_cycles() + 1));
    trace.push(DramCommand::act(0, 6));
    trace.push(DramCommand::pre(0, 6));
    execute_trace(chip, trace, defense);
    // Only the post-refresh pair remains on the books.
    CHECK(chip.row_state(0, 5).disturb_hc == 1);
}

}  // TEST_SUITE
