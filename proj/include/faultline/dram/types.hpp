#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "faultline/common.hpp"

namespace faultline::dram {

using Cycles = uint64_t;
using HammerCount = uint64_t;

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Bank/row/column layout of one simulated chip. One column holds one bit.
struct ChipGeometry {
    uint32_t banks = 1;
    uint32_t rows_per_bank = 128;
    uint32_t bits_per_row = 1024;

    uint64_t total_cells() const {
        return static_cast<uint64_t>(banks) * rows_per_bank * bits_per_row;
    }
    uint32_t bytes_per_row() const { return bits_per_row / 8; }

    void validate() const {
        if (banks < 1 || rows_per_bank < 1 || bits_per_row < 1)
            throw ValidationError("geometry: all counts must be >= 1");
        if (bits_per_row % 8 != 0)
            throw ValidationError("geometry: bits_per_row must be a multiple of 8");
    }

    bool operator==(const ChipGeometry&) const = default;
};

/// Location of a single bit cell.
struct DramAddress {
    uint32_t bank = 0;
    uint32_t row = 0;
    uint32_t column = 0;

    bool operator==(const DramAddress&) const = default;
    auto operator<=>(const DramAddress&) const = default;

    bool in(const ChipGeometry& g) const {
        return bank < g.banks && row < g.rows_per_bank && column < g.bits_per_row;
    }
};

struct DramAddressHash {
    size_t operator()(const DramAddress& a) const {
        uint64_t v = (static_cast<uint64_t>(a.bank) << 52) ^
                     (static_cast<uint64_t>(a.row) << 20) ^ a.column;
        v *= 0x9e3779b97f4a7c15ull;
        return static_cast<size_t>(v ^ (v >> 29));
    }
};

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

/// Clock and command timing. All command costs are expressed in clock cycles;
/// an ACT/PRE pair costs t_ras + sleep + t_rp, an explicit SLEEP adds its own
/// duration on top.
struct TimingParams {
    double freq_mhz = 2400.0;
    uint32_t t_ras_cycles = 39;
    uint32_t t_rp_cycles = 17;
    uint32_t sleep_cycles = 5;  ///< mandated gap between ACT and PRE of a pair
    double t_refw_ms = 64.0;
    HammerCount max_hc_per_window = 1'360'000;

    double t_ck_ns() const { return 1000.0 / freq_mhz; }

    double cycles_to_ms(Cycles c) const {
        return static_cast<double>(c) / (freq_mhz * 1000.0);
    }

    Cycles ms_to_cycles(double ms) const {
        return static_cast<Cycles>(ms * freq_mhz * 1000.0);
    }

    Cycles refresh_window_cycles() const { return ms_to_cycles(t_refw_ms); }

    /// Hammer budget an attacker can spend in `duration_ms`, scaled from the
    /// per-window maximum and rounded down.
    HammerCount hc_equivalent(double duration_ms) const {
        if (duration_ms < 0.0)
            throw ValidationError("hc_equivalent: negative duration");
        return static_cast<HammerCount>(
            std::floor(duration_ms / t_refw_ms * static_cast<double>(max_hc_per_window)));
    }

    /// Minimum open duration of any ACT/PRE pair.
    Cycles pair_open_cycles() const {
        return static_cast<Cycles>(t_ras_cycles) + sleep_cycles;
    }

    void validate() const {
        if (freq_mhz <= 0.0) throw ValidationError("timing: freq_mhz must be positive");
        if (t_ras_cycles < 36 || t_ras_cycles > 48)
            throw ValidationError("timing: t_ras_cycles outside [36, 48]");
        if (t_refw_ms <= 0.0) throw ValidationError("timing: t_refw_ms must be positive");
        if (max_hc_per_window < 1)
            throw ValidationError("timing: max_hc_per_window must be >= 1");
    }

    bool operator==(const TimingParams&) const = default;
};

// ---------------------------------------------------------------------------
// Per-cell ground truth
// ---------------------------------------------------------------------------

enum class Mechanism : uint8_t { None = 0, RH = 1, RP = 2, Both = 3 };

enum class FlipDirection : uint8_t { OneToZero = 0, ZeroToOne = 1 };

inline uint8_t from_value(FlipDirection d) { return d == FlipDirection::OneToZero ? 1 : 0; }
inline uint8_t to_value(FlipDirection d) { return d == FlipDirection::OneToZero ? 0 : 1; }
inline FlipDirection opposite(FlipDirection d) {
    return d == FlipDirection::OneToZero ? FlipDirection::ZeroToOne : FlipDirection::OneToZero;
}

inline bool is_hammer_capable(Mechanism m) { return m == Mechanism::RH || m == Mechanism::Both; }
inline bool is_press_capable(Mechanism m) { return m == Mechanism::RP || m == Mechanism::Both; }

/// Ground-truth vulnerability of one cell. Thresholds are 0 when the
/// mechanism does not apply. The hammer threshold counts accumulated
/// adjacent-row activations; the press threshold is an open duration in
/// cycles.
struct CellTruth {
    Mechanism mechanism = Mechanism::None;
    HammerCount hc_threshold = 0;
    Cycles press_threshold_cycles = 0;
    FlipDirection flip_direction = FlipDirection::OneToZero;

    bool operator==(const CellTruth&) const = default;
};

// ---------------------------------------------------------------------------
// Vulnerability configuration
// ---------------------------------------------------------------------------

struct LogUniformBounds {
    uint64_t low = 0;
    uint64_t high = 0;
    bool operator==(const LogUniformBounds&) const = default;
};

/// Knobs of the synthetic vulnerability generator. Defaults are calibrated so
/// that equal-time flip budgets yield a press:hammer flip ratio of about 20
/// and the two cell populations overlap by less than 0.5% of their union.
struct VulnerabilityConfig {
    double rh_cell_density = 0.02;
    double rp_cell_density = 0.40;
    double overlap_fraction = 0.004;   ///< |both| / |union|
    double rh_direction_bias = 0.9;    ///< fraction of RH-only cells flipping 1 -> 0
    double rp_direction_bias = 0.9;    ///< fraction of RP-only cells flipping 0 -> 1
    LogUniformBounds hc_threshold_distribution{50'000, 1'360'000};
    LogUniformBounds press_threshold_distribution{1'000'000, 120'000'000};
    uint64_t seed = 0;

    void validate(const ChipGeometry& g, const TimingParams& t) const {
        auto check_density = [](double d, const char* name) {
            if (d < 0.0 || d > 1.0)
                throw ValidationError(std::string("vulnerability: invalid density ") + name);
        };
        check_density(rh_cell_density, "rh_cell_density");
        check_density(rp_cell_density, "rp_cell_density");
        check_density(rh_direction_bias, "rh_direction_bias");
        check_density(rp_direction_bias, "rp_direction_bias");
        if (overlap_fraction < 0.0 || overlap_fraction > 1.0)
            throw ValidationError("vulnerability: overlap_fraction outside [0, 1]");
        if (overlap_fraction > std::min(rh_cell_density, rp_cell_density))
            throw ValidationError("vulnerability: overlap_fraction exceeds min cell density");
        if (rh_cell_density + rp_cell_density > 1.0)
            throw ValidationError("vulnerability: cell densities sum above 1");
        if (rh_cell_density > 0.0 || rp_cell_density > 0.0) {
            if (g.rows_per_bank < 3)
                throw ValidationError("vulnerability: need >= 3 rows per bank for nonzero densities");
        }
        if (rh_cell_density > 0.0) {
            if (hc_threshold_distribution.low < 2 ||
                hc_threshold_distribution.low > hc_threshold_distribution.high)
                throw ValidationError("vulnerability: bad hammer threshold bounds");
            if (hc_threshold_distribution.high > t.max_hc_per_window)
                throw ValidationError("vulnerability: hammer threshold above max_hc_per_window");
        }
        if (rp_cell_density > 0.0) {
            if (press_threshold_distribution.low <= t.pair_open_cycles())
                throw ValidationError(
                    "vulnerability: press threshold low bound must exceed the minimum "
                    "ACT/PRE open window");
            if (press_threshold_distribution.low > press_threshold_distribution.high)
                throw ValidationError("vulnerability: bad press threshold bounds");
            if (press_threshold_distribution.high >= t.refresh_window_cycles())
                throw ValidationError("vulnerability: press threshold beyond refresh window");
        }
    }

    bool operator==(const VulnerabilityConfig&) const = default;
};

}  // namespace faultline::dram
