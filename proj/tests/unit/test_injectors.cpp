#include "doctest.h"

#include <algorithm>
#include <set>

#include "faultline/dram/injector.hpp"
#include "helpers.hpp"

using namespace faultline;
using namespace faultline::dram;

namespace {

std::vector<DramAddress> flip_addrs(const InjectionResult& res) {
    std::vector<DramAddress> out;
    for (const auto& f : res.flips) out.push_back(f.addr);
    std::sort(out.begin(), out.end());
    return out;
}

// Ground-truth prediction of a double-sided hammer run on a fresh chip:
// victim cells whose direction matches the written polarity and whose
// threshold fits in 2n accumulated activations.
std::vector<DramAddress> expected_hammer_flips(const ChipState& chip, uint16_t bank,
                                               uint32_t victim, uint64_t rounds,
                                               uint8_t pattern) {
    std::vector<DramAddress> out;
    for (const VulnCell& c : chip.cells(bank, victim)) {
        if (!is_hammer_capable(c.mechanism)) continue;
        if (from_value(c.direction) != (pattern ? 0 : 1)) continue;  // victim holds ~pattern
        if (c.hc_threshold > 2 * rounds) continue;
        out.push_back({bank, victim, c.column});
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_SUITE("injectors") {

TEST_CASE("detect_bitflips computes exact positional diffs") {
    CHECK(detect_bitflips(std::vector<uint8_t>{0xff}, std::vector<uint8_t>{0xff}).empty());

    std::vector<uint8_t> before(128, 0x00), after(128, 0x00);
    after[0] |= 1u << 3;
    after[100] |= 1u << 0;
    auto diffs = detect_bitflips(before, after);
    REQUIRE(diffs.size() == 2);
    CHECK(diffs[0].column == 3);
    CHECK(diffs[0].old_bit == 0);
    CHECK(diffs[0].new_bit == 1);
    CHECK(diffs[1].column == 800);

    auto all = detect_bitflips(std::vector<uint8_t>(128, 0x00),
                               std::vector<uint8_t>(128, 0xff));
    CHECK(all.size() == 1024);

    CHECK_THROWS_AS(detect_bitflips(std::vector<uint8_t>{0}, std::vector<uint8_t>{0, 0}),
                    ValidationError);
}

TEST_CASE("hammering below every threshold flips nothing") {
    ChipState chip = testutil::small_chip(40);
    auto res = rowhammer_inject(chip, InjectionSpec::hammer(0, 9, 100, 1));
    CHECK(res.flips.empty());
}

TEST_CASE("hammer at saturation flips exactly the matching ground-truth cells") {
    for (uint8_t pattern : {1, 0}) {
        ChipState chip = testutil::small_chip(41);
        const uint32_t victim = 11;
        const uint64_t rounds = chip.timing().max_hc_per_window;
        const auto expected = expected_hammer_flips(chip, 0, victim, rounds, pattern);
        auto res = rowhammer_inject(chip, InjectionSpec::hammer(0, victim, rounds, pattern));
        CHECK(flip_addrs(res) == expected);
    }
}

TEST_CASE("read-back diffs agree with the engine flip events") {
    ChipState chip = testutil::small_chip(42);
    auto res = rowhammer_inject(chip, InjectionSpec::hammer(0, 9, 26'000, 1));
    std::vector<DramAddress> from_report;
    for (const auto& f : res.report.flips)
        if (f.addr.row == 9) from_report.push_back(f.addr);
    std::sort(from_report.begin(), from_report.end());
    CHECK(flip_addrs(res) == from_report);
    CHECK(!from_report.empty());
}

TEST_CASE("press flips match the ground-truth predicate at the window edge") {
    ChipState chip = testutil::small_chip(43);
    const uint32_t target = 9;
    const uint64_t sleep = chip.timing().refresh_window_cycles() - 1;
    const Cycles open = chip.timing().pair_open_cycles() + sleep;

    std::vector<DramAddress> expected;
    for (int d : {-1, 1}) {
        const auto v = static_cast<uint32_t>(static_cast<int>(target) + d);
        for (const VulnCell& c : chip.cells(0, v)) {
            if (!is_press_capable(c.mechanism)) continue;
            if (from_value(c.direction) != 1) continue;  // pattern rows hold 1s
            if (c.press_threshold > open) continue;
            expected.push_back({0, v, c.column});
        }
    }
    std::sort(expected.begin(), expected.end());

    auto res = rowpress_inject(chip, InjectionSpec::press(0, target, sleep, 1));
    CHECK(flip_addrs(res) == expected);
    CHECK(!expected.empty());
}

TEST_CASE("press with zero extra open time flips nothing") {
    ChipState chip = testutil::small_chip(44);
    auto res = rowpress_inject(chip, InjectionSpec::press(0, 9, 0, 1));
    CHECK(res.flips.empty());
}

TEST_CASE("press rejects budgets reaching the refresh window") {
    ChipState chip = testutil::small_chip(45);
    const auto window = chip.timing().refresh_window_cycles();
    CHECK_THROWS_AS(rowpress_inject(chip, InjectionSpec::press(0, 9, window, 1)),
                    ValidationError);
}

TEST_CASE("edge rows are rejected") {
    ChipState chip = testutil::small_chip(46);
    const uint32_t last = chip.geometry().rows_per_bank - 1;
    CHECK_THROWS_AS(rowhammer_inject(chip, InjectionSpec::hammer(0, 0, 10, 1)),
                    ValidationError);
    CHECK_THROWS_AS(rowhammer_inject(chip, InjectionSpec::hammer(0, last, 10, 1)),
                    ValidationError);
    CHECK_THROWS_AS(rowpress_inject(chip, InjectionSpec::press(0, 0, 10, 1)), ValidationError);
}

TEST_CASE("rowpress trace issues exactly one activation") {
    ChipState chip = testutil::small_chip(47);
    CommandTrace t = build_rowpress_trace(chip, InjectionSpec::press(0, 9, 1234, 1));
    size_t acts = 0;
    for (const auto& c : t.commands)
        if (c.kind == CommandKind::ACT) ++acts;
    CHECK(acts == 1);
    // And the trace round trips through the text format.
    CHECK(format_trace(parse_trace(format_trace(t))) == format_trace(t));
}

TEST_CASE("flip sets grow monotonically with the budget") {
    const ChipState chip = testutil::small_chip(48);

    std::vector<DramAddress> previous;
    for (uint64_t rounds : {1'500, 5'000, 12'000, 26'000}) {
        ChipState fresh = chip;
        auto res = rowhammer_inject(fresh, InjectionSpec::hammer(0, 7, rounds, 1));
        auto addrs = flip_addrs(res);
        CHECK(std::includes(addrs.begin(), addrs.end(), previous.begin(), previous.end()));
        previous = addrs;
    }

    previous.clear();
    for (uint64_t sleep : {150'000, 600'000, 1'500'000, 2'999'999}) {
        ChipState fresh = chip;
        auto res = rowpress_inject(fresh, InjectionSpec::press(0, 7, sleep, 1));
        auto addrs = flip_addrs(res);
        CHECK(std::includes(addrs.begin(), addrs.end(), previous.begin(), previous.end()));
        previous = addrs;
    }
}

TEST_CASE("both polarities together reveal every cell in the covered rows") {
    ChipState chip = testutil::small_chip(49);
    const uint32_t victim = 13;

    std::set<DramAddress> discovered;
    for (uint8_t pattern : {1, 0}) {
        // Hammer covers the row's hammer-capable cells directly.
        ChipState fresh = chip;
        auto rh = rowhammer_inject(
            fresh, InjectionSpec::hammer(0, victim, fresh.timing().max_hc_per_window / 2 + 1,
                                         pattern));
        for (const auto& f : rh.flips) discovered.insert(f.addr);
        // Press-capable cells of this row are monitored by pressing a
        // neighbor, which makes the row one of the pattern rows.
        ChipState fresh2 = chip;
        auto rp = rowpress_inject(
            fresh2, InjectionSpec::press(0, victim + 1,
                                         fresh2.timing().refresh_window_cycles() - 1, pattern));
        for (const auto& f : rp.flips)
            if (f.addr.row == victim) discovered.insert(f.addr);
    }

    std::set<DramAddress> truth;
    for (const VulnCell& c : chip.cells(0, victim)) truth.insert({0, victim, c.column});
    CHECK(discovered == truth);
}

}  // TEST_SUITE
