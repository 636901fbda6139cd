#include "faultline/dram/command.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace faultline::dram {

const char* to_string(CommandKind k) {
    switch (k) {
        case CommandKind::ACT: return "ACT";
        case CommandKind::PRE: return "PRE";
        case CommandKind::RD: return "RD";
        case CommandKind::WR: return "WR";
        case CommandKind::REF: return "REF";
        case CommandKind::NRR: return "NRR";
        case CommandKind::SLEEP: return "SLEEP";
    }
    return "?";
}

std::string payload_to_hex(const std::vector<uint8_t>& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

std::vector<uint8_t> hex_to_payload(const std::string& hex) {
    if (hex.size() % 2 != 0) throw ParseError("hex payload has odd length");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::vector<uint8_t> out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        const int hi = nibble(hex[2 * i]);
        const int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw ParseError("hex payload has non-hex character");
        out[i] = static_cast<uint8_t>(hi << 4 | lo);
    }
    return out;
}

std::string format_trace(const CommandTrace& trace) {
    std::ostringstream out;
    for (const DramCommand& c : trace.commands) {
        switch (c.kind) {
            case CommandKind::ACT:
            case CommandKind::PRE:
            case CommandKind::RD:
            case CommandKind::NRR:
                out << to_string(c.kind) << ' ' << c.bank << ' ' << c.row << '\n';
                break;
            case CommandKind::WR:
                out << "WR " << c.bank << ' ' << c.row << ' '
                    << payload_to_hex(trace.payload_of(c)) << '\n';
                break;
            case CommandKind::SLEEP:
                out << "SLEEP " << c.aux << '\n';
                break;
            case CommandKind::REF:
                out << "REF\n";
                break;
        }
    }
    return out.str();
}

namespace {

[[noreturn]] void bad_line(size_t line_no, const std::string& why) {
    throw ParseError("trace line " + std::to_string(line_no) + ": " + why);
}

uint64_t parse_u64(const std::string& tok, size_t line_no) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        bad_line(line_no, "expected unsigned integer, got '" + tok + "'");
    return v;
}

}  // namespace

CommandTrace parse_trace(const std::string& text) {
    CommandTrace trace;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok.empty() || tok[0].starts_with('#')) continue;

        const std::string& op = tok[0];
        auto expect = [&](size_t n) {
            if (tok.size() != n) bad_line(line_no, op + " expects " + std::to_string(n - 1) + " argument(s)");
        };
        if (op == "ACT" || op == "PRE" || op == "RD" || op == "NRR") {
            expect(3);
            const auto bank = static_cast<uint16_t>(parse_u64(tok[1], line_no));
            const auto row = static_cast<uint32_t>(parse_u64(tok[2], line_no));
            if (op == "ACT") trace.push(DramCommand::act(bank, row));
            else if (op == "PRE") trace.push(DramCommand::pre(bank, row));
            else if (op == "RD") trace.push(DramCommand::rd(bank, row));
            else trace.push(DramCommand::nrr(bank, row));
        } else if (op == "WR") {
            expect(4);
            const auto bank = static_cast<uint16_t>(parse_u64(tok[1], line_no));
            const auto row = static_cast<uint32_t>(parse_u64(tok[2], line_no));
            try {
                trace.push_wr(bank, row, hex_to_payload(tok[3]));
            } catch (const ParseError& e) {
                bad_line(line_no, e.what());
            }
        } else if (op == "SLEEP") {
            expect(2);
            trace.push(DramCommand::sleep(parse_u64(tok[1], line_no)));
        } else if (op == "REF") {
            expect(1);
            trace.push(DramCommand::ref());
        } else {
            bad_line(line_no, "unknown command '" + op + "'");
        }
    }
    return trace;
}

void save_trace(const CommandTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << format_trace(trace);
}

CommandTrace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trace(ss.str());
}

}  // namespace faultline::dram
