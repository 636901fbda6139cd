#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faultline/dram/chip.hpp"
#include "faultline/dram/command.hpp"

namespace faultline::dram {

enum class DefenseMode : uint8_t { Unlimited, Untested, Mac };

/// Activation-counter defense. Unlimited and Untested never intervene; Mac
/// fires a nearby-row refresh whenever a row's activation counter reaches
/// t_mac (and resets that counter).
struct DefenseConfig {
    DefenseMode mode = DefenseMode::Unlimited;
    uint64_t t_mac = 0;
    bool nrr_on_trip = true;    ///< false records the trip without refreshing
    bool auto_refresh = false;  ///< periodic whole-chip REF every t_refw_ms

    static DefenseConfig unlimited() { return {}; }
    static DefenseConfig mac(uint64_t t_mac, bool nrr = true) {
        if (t_mac < 1) throw ValidationError("defense: t_mac must be >= 1");
        return {DefenseMode::Mac, t_mac, nrr, false};
    }
};

/// One landed bit flip, with the disturbance level at flip time: accumulated
/// adjacent activations for the hammer path, open-window cycles for the
/// press path. Checks run after every single accumulation step, so for a
/// gate-clean run the recorded level equals the cell's threshold exactly.
struct FlipEvent {
    DramAddress addr;
    uint8_t old_bit = 0;
    uint8_t new_bit = 0;
    Cycles cycle = 0;
    uint64_t disturbance = 0;
    Mechanism via = Mechanism::RH;
};

struct NrrEvent {
    Cycles cycle = 0;
    uint16_t bank = 0;
    uint32_t tripped_row = 0;
    std::vector<uint32_t> refreshed_rows;
};

struct ExecutionReport {
    std::vector<FlipEvent> flips;
    std::vector<NrrEvent> nrr_events;
    Cycles total_cycles = 0;
    uint64_t max_row_counter = 0;

    std::vector<FlipEvent> flips_in_row(uint16_t bank, uint32_t row) const;
};

/// Streams commands into a chip, applying timing, disturbance physics and the
/// defense. A trace run is one Engine lifetime; chip state persists across
/// runs.
class Engine {
  public:
    Engine(ChipState& chip, const DefenseConfig& defense);

    void step(const DramCommand& cmd, const std::vector<uint8_t>* payload = nullptr);
    void run(const CommandTrace& trace);

    /// Report of everything since construction.
    ExecutionReport take_report();

  private:
    void do_act(uint16_t bank, uint32_t row);
    void do_pre(uint16_t bank, uint32_t row);
    void do_ref();
    void do_nrr(uint16_t bank, uint32_t row, bool from_defense);
    void check_bounds(uint16_t bank, uint32_t row) const;
    void disturb_row(uint16_t bank, uint32_t victim, uint32_t aggressor, Cycles open_cycles);
    void auto_refresh_tick();

    ChipState& chip_;
    DefenseConfig defense_;
    ExecutionReport report_;
    Cycles start_cycles_ = 0;
    std::vector<Cycles> open_since_;  ///< per bank, valid while a row is open
    Cycles next_auto_ref_ = 0;
};

/// Runs a whole trace against the chip under the given defense.
ExecutionReport execute_trace(ChipState& chip, const CommandTrace& trace,
                              const DefenseConfig& defense);

/// Host-level row access. Both require the bank to be precharged. A write
/// replaces the row contents and clears that row's disturbance accumulators;
/// a read has no side effects.
void write_row(ChipState& chip, uint16_t bank, uint32_t row, std::span<const uint8_t> payload);
std::vector<uint8_t> read_row(const ChipState& chip, uint16_t bank, uint32_t row);

}  // namespace faultline::dram
