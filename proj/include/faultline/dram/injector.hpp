#pragma once

#include <span>
#include <vector>

#include "faultline/dram/engine.hpp"

namespace faultline::dram {

/// Exact positional diff between two packed bit arrays of equal length.
struct BitDiff {
    uint32_t column = 0;
    uint8_t old_bit = 0;
    uint8_t new_bit = 0;
};
std::vector<BitDiff> detect_bitflips(std::span<const uint8_t> before,
                                     std::span<const uint8_t> after);

enum class InjectionKind : uint8_t { Hammer, Press };

/// One fault-injection run. For Hammer, `amount` is the number of rounds,
/// each activating both aggressor rows once. For Press, `amount` is the extra
/// open duration in cycles slept between the single ACT and its PRE.
struct InjectionSpec {
    uint16_t bank = 0;
    uint32_t target_row = 0;
    InjectionKind kind = InjectionKind::Hammer;
    uint64_t amount = 0;
    uint8_t pattern_bit = 1;  ///< written to the pattern/aggressor rows; target gets complement

    static InjectionSpec hammer(uint16_t bank, uint32_t row, uint64_t rounds,
                                uint8_t pattern = 1) {
        return {bank, row, InjectionKind::Hammer, rounds, pattern};
    }
    static InjectionSpec press(uint16_t bank, uint32_t row, uint64_t sleep_cycles,
                               uint8_t pattern = 1) {
        return {bank, row, InjectionKind::Press, sleep_cycles, pattern};
    }
};

struct ObservedFlip {
    DramAddress addr;
    uint8_t old_bit = 0;
    uint8_t new_bit = 0;
};

struct InjectionResult {
    ExecutionReport report;
    std::vector<ObservedFlip> flips;  ///< read-back diffs in the monitored rows
};

/// Double-sided hammering of the rows adjacent to the target: writes the
/// pattern to target±1 and its complement to the target, issues `amount`
/// ACT/PRE rounds over both aggressors, reads the three rows back and reports
/// the flips observed in the target row.
InjectionResult rowhammer_inject(ChipState& chip, const InjectionSpec& spec,
                                 const DefenseConfig& defense = DefenseConfig::unlimited());

/// Single prolonged activation of the target row: writes the pattern to
/// target±1 ("pattern rows") and the complement to the target, then issues
/// exactly one ACT, SLEEP(amount), PRE. Flips are reported in the pattern
/// rows. Evades activation-frequency defenses by construction.
InjectionResult rowpress_inject(ChipState& chip, const InjectionSpec& spec,
                                const DefenseConfig& defense = DefenseConfig::unlimited());

/// The exact command sequences the injectors execute, for inspection and dump.
CommandTrace build_rowhammer_trace(const ChipState& chip, const InjectionSpec& spec);
CommandTrace build_rowpress_trace(const ChipState& chip, const InjectionSpec& spec);

}  // namespace faultline::dram
