#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faultline/dram/types.hpp"

namespace faultline::dram {

enum class CommandKind : uint8_t { ACT, PRE, RD, WR, REF, NRR, SLEEP };

const char* to_string(CommandKind k);

/// One DRAM command. WR payloads are stored out of line in the trace so the
/// command itself stays small enough for multi-million command traces.
struct DramCommand {
    CommandKind kind = CommandKind::ACT;
    uint16_t bank = 0;
    uint32_t row = 0;
    uint64_t aux = 0;  ///< SLEEP duration, or WR payload slot

    static DramCommand act(uint16_t bank, uint32_t row) { return {CommandKind::ACT, bank, row, 0}; }
    static DramCommand pre(uint16_t bank, uint32_t row) { return {CommandKind::PRE, bank, row, 0}; }
    static DramCommand rd(uint16_t bank, uint32_t row) { return {CommandKind::RD, bank, row, 0}; }
    static DramCommand ref() { return {CommandKind::REF, 0, 0, 0}; }
    static DramCommand nrr(uint16_t bank, uint32_t row) { return {CommandKind::NRR, bank, row, 0}; }
    static DramCommand sleep(uint64_t cycles) { return {CommandKind::SLEEP, 0, 0, cycles}; }
};

/// Timestamp-ordered command sequence plus the WR payload pool.
struct CommandTrace {
    std::vector<DramCommand> commands;
    std::vector<std::vector<uint8_t>> payloads;

    void push(DramCommand c) { commands.push_back(c); }
    void push_wr(uint16_t bank, uint32_t row, std::vector<uint8_t> payload) {
        commands.push_back({CommandKind::WR, bank, row, payloads.size()});
        payloads.push_back(std::move(payload));
    }
    const std::vector<uint8_t>& payload_of(const DramCommand& c) const {
        return payloads[c.aux];
    }
    size_t size() const { return commands.size(); }
};

/// Text round trip. One command per line:
///   ACT <bank> <row> | PRE <bank> <row> | RD <bank> <row>
///   WR <bank> <row> <hex payload> | SLEEP <cycles> | REF | NRR <bank> <row>
/// WR payloads are hex with two digits per byte, byte 0 (columns 0..7) first,
/// column c stored at bit (c % 8) of byte (c / 8).
std::string format_trace(const CommandTrace& trace);
CommandTrace parse_trace(const std::string& text);
void save_trace(const CommandTrace& trace, const std::string& path);
CommandTrace load_trace(const std::string& path);

std::string payload_to_hex(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> hex_to_payload(const std::string& hex);

}  // namespace faultline::dram
