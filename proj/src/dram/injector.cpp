#include "faultline/dram/injector.hpp"

#include <cstdio>

namespace faultline::dram {

std::vector<BitDiff> detect_bitflips(std::span<const uint8_t> before,
                                     std::span<const uint8_t> after) {
    if (before.size() != after.size())
        throw ValidationError("detect_bitflips: length mismatch");
    std::vector<BitDiff> out;
    for (size_t byte = 0; byte < before.size(); ++byte) {
        const uint8_t diff = before[byte] ^ after[byte];
        if (diff == 0) continue;
        for (uint32_t bit = 0; bit < 8; ++bit) {
            if ((diff >> bit) & 1) {
                const auto col = static_cast<uint32_t>(byte * 8 + bit);
                out.push_back({col, static_cast<uint8_t>((before[byte] >> bit) & 1),
                               static_cast<uint8_t>((after[byte] >> bit) & 1)});
            }
        }
    }
    return out;
}

namespace {

std::vector<uint8_t> fill_payload(const ChipGeometry& g, uint8_t bit) {
    return std::vector<uint8_t>(g.bytes_per_row(), bit ? 0xff : 0x00);
}

void validate_common(const ChipState& chip, const InjectionSpec& spec) {
    const auto& g = chip.geometry();
    if (spec.bank >= g.banks) throw ValidationError("injection: bank out of range");
    if (spec.target_row >= g.rows_per_bank)
        throw ValidationError("injection: target_row out of range");
    if (spec.target_row == 0 || spec.target_row + 1 >= g.rows_per_bank)
        throw ValidationError("injection: target_row on bank edge (missing neighbor)");
}

// Emits the injection command sequence to an arbitrary sink so the streamed
// execution and the dumpable trace cannot drift apart.
template <typename Sink>
void emit_rowhammer(const ChipState& chip, const InjectionSpec& spec, Sink&& sink) {
    const auto& g = chip.geometry();
    const uint32_t r = spec.target_row;
    const auto pattern = fill_payload(g, spec.pattern_bit);
    const auto inverse = fill_payload(g, spec.pattern_bit ? 0 : 1);
    sink(DramCommand{CommandKind::WR, spec.bank, r - 1, 0}, &pattern);
    sink(DramCommand{CommandKind::WR, spec.bank, r + 1, 0}, &pattern);
    sink(DramCommand{CommandKind::WR, spec.bank, r, 0}, &inverse);
    for (uint64_t i = 0; i < spec.amount; ++i) {
        sink(DramCommand::act(spec.bank, r - 1), nullptr);
        sink(DramCommand::pre(spec.bank, r - 1), nullptr);
        sink(DramCommand::act(spec.bank, r + 1), nullptr);
        sink(DramCommand::pre(spec.bank, r + 1), nullptr);
    }
    sink(DramCommand::rd(spec.bank, r - 1), nullptr);
    sink(DramCommand::rd(spec.bank, r), nullptr);
    sink(DramCommand::rd(spec.bank, r + 1), nullptr);
}

template <typename Sink>
void emit_rowpress(const ChipState& chip, const InjectionSpec& spec, Sink&& sink) {
    const auto& g = chip.geometry();
    const uint32_t r = spec.target_row;
    const auto pattern = fill_payload(g, spec.pattern_bit);
    const auto inverse = fill_payload(g, spec.pattern_bit ? 0 : 1);
    sink(DramCommand{CommandKind::WR, spec.bank, r - 1, 0}, &pattern);
    sink(DramCommand{CommandKind::WR, spec.bank, r + 1, 0}, &pattern);
    sink(DramCommand{CommandKind::WR, spec.bank, r, 0}, &inverse);
    sink(DramCommand::act(spec.bank, r), nullptr);
    sink(DramCommand::sleep(spec.amount), nullptr);
    sink(DramCommand::pre(spec.bank, r), nullptr);
    sink(DramCommand::rd(spec.bank, r - 1), nullptr);
    sink(DramCommand::rd(spec.bank, r), nullptr);
    sink(DramCommand::rd(spec.bank, r + 1), nullptr);
}

std::vector<ObservedFlip> diff_row(const ChipState& chip, uint16_t bank, uint32_t row,
                                   const std::vector<uint8_t>& written) {
    std::vector<ObservedFlip> out;
    const auto now = read_row(chip, bank, row);
    for (const BitDiff& d : detect_bitflips(written, now))
        out.push_back({DramAddress{bank, row, d.column}, d.old_bit, d.new_bit});
    return out;
}

}  // namespace

InjectionResult rowhammer_inject(ChipState& chip, const InjectionSpec& spec,
                                 const DefenseConfig& defense) {
    validate_common(chip, spec);
    if (spec.kind != InjectionKind::Hammer)
        throw ValidationError("rowhammer_inject: spec kind is not Hammer");
    if (spec.amount < 1) throw ValidationError("rowhammer_inject: rounds must be >= 1");
    if (spec.amount > chip.timing().max_hc_per_window)
        std::fprintf(stderr,
                     "warning: hammer rounds %llu exceed max_hc_per_window %llu\n",
                     static_cast<unsigned long long>(spec.amount),
                     static_cast<unsigned long long>(chip.timing().max_hc_per_window));

    Engine engine(chip, defense);
    emit_rowhammer(chip, spec,
                   [&](const DramCommand& c, const std::vector<uint8_t>* p) { engine.step(c, p); });

    InjectionResult result;
    result.report = engine.take_report();
    result.flips = diff_row(chip, spec.bank, spec.target_row,
                            fill_payload(chip.geometry(), spec.pattern_bit ? 0 : 1));
    return result;
}

InjectionResult rowpress_inject(ChipState& chip, const InjectionSpec& spec,
                                const DefenseConfig& defense) {
    validate_common(chip, spec);
    if (spec.kind != InjectionKind::Press)
        throw ValidationError("rowpress_inject: spec kind is not Press");
    if (spec.amount >= chip.timing().refresh_window_cycles())
        throw ValidationError("rowpress_inject: open duration reaches the refresh window");

    Engine engine(chip, defense);
    emit_rowpress(chip, spec,
                  [&](const DramCommand& c, const std::vector<uint8_t>* p) { engine.step(c, p); });

    InjectionResult result;
    result.report = engine.take_report();
    const auto pattern = fill_payload(chip.geometry(), spec.pattern_bit);
    result.flips = diff_row(chip, spec.bank, spec.target_row - 1, pattern);
    for (auto& f : diff_row(chip, spec.bank, spec.target_row + 1, pattern))
        result.flips.push_back(f);
    return result;
}

CommandTrace build_rowhammer_trace(const ChipState& chip, const InjectionSpec& spec) {
    validate_common(chip, spec);
    CommandTrace t;
    emit_rowhammer(chip, spec, [&](const DramCommand& c, const std::vector<uint8_t>* p) {
        if (p)
            t.push_wr(c.bank, c.row, *p);
        else
            t.push(c);
    });
    return t;
}

CommandTrace build_rowpress_trace(const ChipState& chip, const InjectionSpec& spec) {
    validate_common(chip, spec);
    CommandTrace t;
    emit_rowpress(chip, spec, [&](const DramCommand& c, const std::vector<uint8_t>* p) {
        if (p)
            t.push_wr(c.bank, c.row, *p);
        else
            t.push(c);
    });
    return t;
}

}  // namespace faultline::dram
