#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "faultline/dram/injector.hpp"

namespace faultline::dram {

/// One profiled cell. The threshold is in the mechanism's native unit:
/// accumulated adjacent activations for RH, open-window cycles for RP.
struct ProfiledCell {
    DramAddress addr;
    uint64_t threshold = 0;
    FlipDirection direction = FlipDirection::OneToZero;

    bool operator==(const ProfiledCell&) const = default;
};

enum class Polarity : uint8_t { Both, Single };

/// Measured vulnerable-cell list for one mechanism, sorted by address.
struct VulnProfile {
    Mechanism mechanism = Mechanism::RH;  ///< RH or RP
    std::vector<ProfiledCell> cells;
    std::string chip_fingerprint;
    uint64_t max_budget = 0;
    Polarity polarity = Polarity::Both;

    bool operator==(const VulnProfile&) const = default;
};

/// Sweeps the whole chip with the matching injector and recovers each
/// vulnerable cell's minimal disturbance level. Hammer thresholds are read
/// off the flip events (the accumulator crosses in unit steps, so the level
/// at flip time is the threshold); press thresholds come from a per-cell
/// binary search over the open duration. Operates on an internal clone, so
/// the chip's stored bits are untouched.
VulnProfile profile_chip(const ChipState& chip, Mechanism mechanism, uint64_t max_budget,
                         Polarity polarity = Polarity::Both);

uint64_t default_max_budget(const ChipState& chip, Mechanism mechanism);

/// Cumulative flips as a function of the disturbance budget.
struct FlipCurve {
    Mechanism mechanism = Mechanism::RH;
    std::vector<std::pair<uint64_t, uint64_t>> points;  ///< (budget, cumulative flips)
};

/// Counts profile cells with threshold <= budget for each grid entry.
/// The grid must be sorted ascending.
FlipCurve flip_curve(const VulnProfile& profile, const std::vector<uint64_t>& budget_grid);

/// Convenience: profiles at the default max budget first.
FlipCurve flip_curve(const ChipState& chip, Mechanism mechanism,
                     const std::vector<uint64_t>& budget_grid);

/// Log-spaced budget grid anchored at the chip's configured threshold ranges.
std::vector<uint64_t> log_budget_grid(const ChipState& chip, Mechanism mechanism,
                                      size_t points = 16);

/// Budgets equivalent to running each mechanism for `duration_ms`.
struct EqualTimeBudgets {
    uint64_t hammer_budget = 0;  ///< accumulated activations
    uint64_t press_budget = 0;   ///< open-duration cycles
};
EqualTimeBudgets equal_time_budgets(const TimingParams& timing, double duration_ms);

struct OverlapStats {
    double overlap_fraction = 0.0;
    std::array<uint64_t, 2> rh_direction_histogram{};  ///< [OneToZero, ZeroToOne]
    std::array<uint64_t, 2> rp_direction_histogram{};
};

/// Address-set overlap and per-profile flip-direction counts. Both profiles
/// must come from the same chip.
OverlapStats overlap_stats(const VulnProfile& rh, const VulnProfile& rp);

/// CSV persistence with a JSON sidecar at "<path>.json". Round trips are
/// bit-exact.
void save_profile(const VulnProfile& profile, const std::string& csv_path);
VulnProfile load_profile(const std::string& csv_path);

}  // namespace faultline::dram
