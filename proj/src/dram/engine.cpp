#include "faultline/dram/engine.hpp"

#include <algorithm>

namespace faultline::dram {

std::vector<FlipEvent> ExecutionReport::flips_in_row(uint16_t bank, uint32_t row) const {
    std::vector<FlipEvent> out;
    for (const FlipEvent& f : flips)
        if (f.addr.bank == bank && f.addr.row == row) out.push_back(f);
    return out;
}

Engine::Engine(ChipState& chip, const DefenseConfig& defense)
    : chip_(chip), defense_(defense), start_cycles_(chip.now()) {
    open_since_.assign(chip.geometry().banks, 0);
    if (defense_.auto_refresh) {
        const Cycles window = chip_.timing().refresh_window_cycles();
        next_auto_ref_ = (chip_.now() / window + 1) * window;
    }
}

void Engine::check_bounds(uint16_t bank, uint32_t row) const {
    if (bank >= chip_.geometry().banks || row >= chip_.geometry().rows_per_bank)
        throw ProtocolViolation("address out of range: bank " + std::to_string(bank) +
                                " row " + std::to_string(row));
}

void Engine::auto_refresh_tick() {
    if (!defense_.auto_refresh) return;
    const Cycles window = chip_.timing().refresh_window_cycles();
    while (chip_.now() >= next_auto_ref_) {
        const auto& g = chip_.geometry();
        for (uint32_t b = 0; b < g.banks; ++b)
            for (uint32_t r = 0; r < g.rows_per_bank; ++r) {
                chip_.reset_row_disturbance(b, r);
                chip_.row_state_mut(b, r).act_count = 0;
            }
        next_auto_ref_ += window;
    }
}

void Engine::step(const DramCommand& cmd, const std::vector<uint8_t>* payload) {
    auto_refresh_tick();
    switch (cmd.kind) {
        case CommandKind::ACT:
            do_act(cmd.bank, cmd.row);
            break;
        case CommandKind::PRE:
            do_pre(cmd.bank, cmd.row);
            break;
        case CommandKind::RD:
            check_bounds(cmd.bank, cmd.row);
            if (chip_.open_row(cmd.bank))
                throw ProtocolViolation("RD requires a precharged bank");
            break;
        case CommandKind::WR:
            if (payload == nullptr) throw ValidationError("WR command without payload");
            check_bounds(cmd.bank, cmd.row);
            write_row(chip_, cmd.bank, cmd.row, *payload);
            break;
        case CommandKind::REF:
            do_ref();
            break;
        case CommandKind::NRR:
            check_bounds(cmd.bank, cmd.row);
            if (chip_.open_row(cmd.bank))
                throw ProtocolViolation("NRR requires a precharged bank");
            do_nrr(cmd.bank, cmd.row, false);
            break;
        case CommandKind::SLEEP:
            chip_.advance(cmd.aux);
            break;
    }
}

void Engine::run(const CommandTrace& trace) {
    for (const DramCommand& c : trace.commands)
        step(c, c.kind == CommandKind::WR ? &trace.payload_of(c) : nullptr);
}

ExecutionReport Engine::take_report() {
    report_.total_cycles = chip_.now() - start_cycles_;
    return std::move(report_);
}

void Engine::do_act(uint16_t bank, uint32_t row) {
    check_bounds(bank, row);
    if (chip_.open_row(bank))
        throw ProtocolViolation("ACT on bank " + std::to_string(bank) +
                                " with row " + std::to_string(*chip_.open_row(bank)) +
                                " already open");
    chip_.set_open_row(bank, row);
    open_since_[bank] = chip_.now();
    chip_.advance(chip_.timing().t_ras_cycles + chip_.timing().sleep_cycles);

    // Neighbors accumulate one disturbance step per activation.
    if (row > 0) chip_.row_state_mut(bank, row - 1).disturb_hc += 1;
    if (row + 1 < chip_.geometry().rows_per_bank)
        chip_.row_state_mut(bank, row + 1).disturb_hc += 1;

    RowState& rs = chip_.row_state_mut(bank, row);
    rs.act_count += 1;
    report_.max_row_counter = std::max(report_.max_row_counter, rs.act_count);
    if (defense_.mode == DefenseMode::Mac && rs.act_count >= defense_.t_mac)
        do_nrr(bank, row, true);
}

void Engine::do_pre(uint16_t bank, uint32_t row) {
    check_bounds(bank, row);
    const auto open = chip_.open_row(bank);
    if (!open || *open != row)
        throw ProtocolViolation("PRE of row " + std::to_string(row) +
                                " which is not the open row of bank " + std::to_string(bank));
    const Cycles open_cycles = chip_.now() - open_since_[bank];
    if (row > 0) disturb_row(bank, row - 1, row, open_cycles);
    if (row + 1 < chip_.geometry().rows_per_bank)
        disturb_row(bank, row + 1, row, open_cycles);
    chip_.set_open_row(bank, std::nullopt);
    chip_.advance(chip_.timing().t_rp_cycles);
}

void Engine::do_ref() {
    const auto& g = chip_.geometry();
    for (uint32_t b = 0; b < g.banks; ++b)
        if (chip_.open_row(b)) throw ProtocolViolation("REF requires all banks precharged");
    for (uint32_t b = 0; b < g.banks; ++b)
        for (uint32_t r = 0; r < g.rows_per_bank; ++r) {
            chip_.reset_row_disturbance(b, r);
            chip_.row_state_mut(b, r).act_count = 0;
        }
}

void Engine::do_nrr(uint16_t bank, uint32_t row, bool from_defense) {
    NrrEvent ev;
    ev.cycle = chip_.now();
    ev.bank = bank;
    ev.tripped_row = row;
    chip_.row_state_mut(bank, row).act_count = 0;
    if (defense_.nrr_on_trip || !from_defense) {
        const uint32_t rows = chip_.geometry().rows_per_bank;
        for (int d : {-2, -1, 1, 2}) {
            const int64_t v = static_cast<int64_t>(row) + d;
            if (v < 0 || v >= static_cast<int64_t>(rows)) continue;
            chip_.reset_row_disturbance(bank, static_cast<uint32_t>(v));
            ev.refreshed_rows.push_back(static_cast<uint32_t>(v));
        }
    }
    report_.nrr_events.push_back(std::move(ev));
}

namespace {

enum class Attempt { Flipped, Blocked, Dropped };

}  // namespace

void Engine::disturb_row(uint16_t bank, uint32_t victim, uint32_t aggressor,
                         Cycles open_cycles) {
    RowState& rs = chip_.row_state_mut(bank, victim);
    if (open_cycles > rs.press_max) rs.press_max = open_cycles;
    const auto& cells = chip_.cells(bank, victim);
    if (cells.empty()) return;

    const uint8_t side = aggressor < victim ? 0 : 1;
    const uint8_t side_bit = static_cast<uint8_t>(1u << side);

    if (rs.recheck_blocked) {
        for (ScanState* ss : {&rs.hammer, &rs.press}) {
            for (BlockedCell& bc : ss->blocked) bc.tried_sides = 0;
            ss->sides_settled = 0;
        }
        rs.recheck_blocked = false;
    }

    // Attempts to flip one cell; the caller guarantees its threshold crossed.
    auto attempt = [&](uint32_t idx, Mechanism via, uint64_t level) -> Attempt {
        const VulnCell& c = cells[idx];
        const uint8_t bit_v = chip_.bit(bank, victim, c.column);
        if (bit_v != from_value(c.direction)) return Attempt::Dropped;
        if (chip_.bit(bank, aggressor, c.column) == bit_v) return Attempt::Blocked;
        const uint8_t to = to_value(c.direction);
        chip_.set_bit(bank, victim, c.column, to);
        report_.flips.push_back(
            {DramAddress{bank, victim, c.column}, bit_v, to, chip_.now(), level, via});
        if (victim > 0) chip_.mark_neighbors_changed(bank, victim - 1);
        if (victim + 1 < chip_.geometry().rows_per_bank)
            chip_.mark_neighbors_changed(bank, victim + 1);
        return Attempt::Flipped;
    };

    auto scan = [&](ScanState& ss, const std::vector<uint32_t>& order, Mechanism via,
                    auto threshold_of, uint64_t level) {
        // The recorded level is the accumulator at check time. The hammer
        // accumulator grows one activation per check, so for cursor-scan
        // flips it equals the cell threshold exactly.
        while (ss.next < order.size() && threshold_of(cells[order[ss.next]]) <= level) {
            const uint32_t idx = order[ss.next];
            if (attempt(idx, via, level) == Attempt::Blocked) {
                ss.blocked.push_back({idx, side_bit});
                ss.sides_settled &= side_bit;  // new entry is untried on the other side
            }
            ++ss.next;
        }
        if ((ss.sides_settled & side_bit) == 0) {
            auto& blocked = ss.blocked;
            for (size_t i = 0; i < blocked.size();) {
                if (blocked[i].tried_sides & side_bit) {
                    ++i;
                    continue;
                }
                const Attempt r = attempt(blocked[i].idx, via, level);
                if (r == Attempt::Blocked) {
                    blocked[i].tried_sides |= side_bit;
                    ++i;
                } else {
                    blocked[i] = blocked.back();
                    blocked.pop_back();
                }
            }
            ss.sides_settled |= side_bit;
        }
    };

    scan(rs.hammer, chip_.hammer_order(bank, victim), Mechanism::RH,
         [](const VulnCell& c) { return c.hc_threshold; }, rs.disturb_hc);
    scan(rs.press, chip_.press_order(bank, victim), Mechanism::RP,
         [](const VulnCell& c) { return c.press_threshold; }, rs.press_max);
}

ExecutionReport execute_trace(ChipState& chip, const CommandTrace& trace,
                              const DefenseConfig& defense) {
    Engine engine(chip, defense);
    engine.run(trace);
    return engine.take_report();
}

void write_row(ChipState& chip, uint16_t bank, uint32_t row,
               std::span<const uint8_t> payload) {
    if (bank >= chip.geometry().banks || row >= chip.geometry().rows_per_bank)
        throw ProtocolViolation("write_row: address out of range");
    if (chip.open_row(bank)) throw ProtocolViolation("write_row requires a precharged bank");
    chip.store_row(bank, row, payload);
    chip.reset_row_disturbance(bank, row);
    if (row > 0) chip.mark_neighbors_changed(bank, row - 1);
    if (row + 1 < chip.geometry().rows_per_bank) chip.mark_neighbors_changed(bank, row + 1);
}

std::vector<uint8_t> read_row(const ChipState& chip, uint16_t bank, uint32_t row) {
    if (bank >= chip.geometry().banks || row >= chip.geometry().rows_per_bank)
        throw ProtocolViolation("read_row: address out of range");
    if (chip.open_row(bank)) throw ProtocolViolation("read_row requires a precharged bank");
    auto bits = chip.row_bits(bank, row);
    return {bits.begin(), bits.end()};
}

}  // namespace faultline::dram
