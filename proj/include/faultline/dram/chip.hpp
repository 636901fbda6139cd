#pragma once

#include <optional>
#include <span>
#include <vector>

#include "faultline/dram/types.hpp"

namespace faultline::dram {

/// One vulnerable cell of a row, with its mutable bookkeeping. Cells of a row
/// are kept sorted by column.
struct VulnCell {
    uint32_t column = 0;
    Mechanism mechanism = Mechanism::None;
    FlipDirection direction = FlipDirection::OneToZero;
    HammerCount hc_threshold = 0;
    Cycles press_threshold = 0;
};

/// A cell whose threshold has been crossed but whose data-pattern gate failed.
/// tried_sides tracks which neighbor sides the gate was already checked
/// against since the bits last changed.
struct BlockedCell {
    uint32_t idx = 0;
    uint8_t tried_sides = 0;
};

/// Scan cursor over one threshold-sorted cell order of a row.
struct ScanState {
    uint32_t next = 0;
    uint8_t sides_settled = 0;  ///< bitmask: blocked list fully retried per side
    std::vector<BlockedCell> blocked;

    void reset() {
        next = 0;
        sides_settled = 0;
        blocked.clear();
    }
};

/// Disturbance bookkeeping of one row. Increments and resets are always
/// row-granular, so the accumulators live per row rather than per cell.
struct RowState {
    HammerCount disturb_hc = 0;  ///< adjacent-row activations since last reset
    Cycles press_max = 0;        ///< longest single adjacent open window since reset
    uint64_t act_count = 0;      ///< own activations, feeds the defense counter

    ScanState hammer;
    ScanState press;
    bool recheck_blocked = false;  ///< neighbor bits changed since last scan
};

/// Full simulated chip: stored bits, ground-truth vulnerability map and
/// per-row disturbance state. Copyable; a copy is an independent chip.
class ChipState {
  public:
    ChipState() = default;

    const ChipGeometry& geometry() const { return geometry_; }
    const TimingParams& timing() const { return timing_; }
    const VulnerabilityConfig& vulnerability() const { return vuln_; }

    Cycles now() const { return now_; }
    void advance(Cycles c) { now_ += c; }

    std::optional<uint32_t> open_row(uint32_t bank) const { return open_row_[bank]; }
    void set_open_row(uint32_t bank, std::optional<uint32_t> row) { open_row_[bank] = row; }

    // --- stored bits -------------------------------------------------------

    uint8_t bit(uint32_t bank, uint32_t row, uint32_t col) const {
        const uint8_t* p = row_bytes(bank, row);
        return (p[col >> 3] >> (col & 7)) & 1;
    }
    void set_bit(uint32_t bank, uint32_t row, uint32_t col, uint8_t v) {
        uint8_t* p = row_bytes_mut(bank, row);
        const uint8_t mask = static_cast<uint8_t>(1u << (col & 7));
        if (v)
            p[col >> 3] |= mask;
        else
            p[col >> 3] &= static_cast<uint8_t>(~mask);
    }

    /// Packed row contents, bit c stored at byte c/8, bit position c%8.
    std::span<const uint8_t> row_bits(uint32_t bank, uint32_t row) const {
        return {row_bytes(bank, row), geometry_.bytes_per_row()};
    }
    void store_row(uint32_t bank, uint32_t row, std::span<const uint8_t> bytes);

    // --- vulnerability map and per-row state --------------------------------

    const std::vector<VulnCell>& cells(uint32_t bank, uint32_t row) const {
        return cells_[flat(bank, row)];
    }
    const RowState& row_state(uint32_t bank, uint32_t row) const {
        return state_[flat(bank, row)];
    }
    RowState& row_state_mut(uint32_t bank, uint32_t row) { return state_[flat(bank, row)]; }

    /// Cell indices of (bank, row) sorted by ascending hammer threshold.
    const std::vector<uint32_t>& hammer_order(uint32_t bank, uint32_t row) const {
        return hammer_order_[flat(bank, row)];
    }
    const std::vector<uint32_t>& press_order(uint32_t bank, uint32_t row) const {
        return press_order_[flat(bank, row)];
    }

    std::optional<CellTruth> truth(const DramAddress& a) const;

    /// Visits every vulnerable cell in (bank, row, column) order.
    template <typename F>
    void for_each_cell(F&& f) const {
        for (uint32_t b = 0; b < geometry_.banks; ++b)
            for (uint32_t r = 0; r < geometry_.rows_per_bank; ++r)
                for (const VulnCell& c : cells(b, r))
                    f(DramAddress{b, r, c.column}, c);
    }

    /// Zeroes a row's disturbance accumulators and scan state (refresh/write).
    void reset_row_disturbance(uint32_t bank, uint32_t row);

    /// Flags a row so blocked cells are re-examined at its next disturbance.
    void mark_neighbors_changed(uint32_t bank, uint32_t row) {
        state_[flat(bank, row)].recheck_blocked = true;
    }

    /// Stable identity of the chip descriptor (geometry+timing+config+seed).
    const std::string& fingerprint() const { return fingerprint_; }

    bool same_truth(const ChipState& other) const;

    friend ChipState generate_chip(const ChipGeometry&, const TimingParams&,
                                   const VulnerabilityConfig&);

  private:
    size_t flat(uint32_t bank, uint32_t row) const {
        return static_cast<size_t>(bank) * geometry_.rows_per_bank + row;
    }
    const uint8_t* row_bytes(uint32_t bank, uint32_t row) const {
        return bits_.data() + flat(bank, row) * geometry_.bytes_per_row();
    }
    uint8_t* row_bytes_mut(uint32_t bank, uint32_t row) {
        return bits_.data() + flat(bank, row) * geometry_.bytes_per_row();
    }

    ChipGeometry geometry_;
    TimingParams timing_;
    VulnerabilityConfig vuln_;
    std::string fingerprint_;

    std::vector<uint8_t> bits_;                      ///< banks*rows*bytes_per_row
    std::vector<std::vector<VulnCell>> cells_;       ///< per (bank,row), column-sorted
    std::vector<std::vector<uint32_t>> hammer_order_;
    std::vector<std::vector<uint32_t>> press_order_;
    std::vector<RowState> state_;
    std::vector<std::optional<uint32_t>> open_row_;  ///< per bank
    Cycles now_ = 0;
};

/// Deterministically builds a chip from its descriptor. Stored bits start at
/// all zeros. Cell counts are exact: round(density * total_cells) cells carry
/// each mechanism, with the overlap count derived from overlap_fraction.
/// Hammer-capable cells are placed only on rows with two neighbors so that
/// every one of them is reachable by a double-sided injection.
ChipState generate_chip(const ChipGeometry& geometry, const TimingParams& timing,
                        const VulnerabilityConfig& config);

/// Chip descriptor (de)serialization. Ground truth is never persisted; a chip
/// is regenerated from its descriptor.
std::string chip_descriptor_json(const ChipGeometry& g, const TimingParams& t,
                                 const VulnerabilityConfig& v);
ChipState load_chip_descriptor(const std::string& path);
void save_chip_descriptor(const ChipState& chip, const std::string& path);

}  // namespace faultline::dram
