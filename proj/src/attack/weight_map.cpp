#include "faultline/attack/weight_map.hpp"

#include <algorithm>

namespace faultline::attack {

size_t WeightMap::total_bits() const {
    size_t n = 0;
    for (const auto& l : addrs) n += l.size();
    return n;
}

WeightMap build_weight_map(const qnn::QuantizedModel& model, const dram::ChipState& chip,
                           MapLayout layout, uint64_t seed, uint16_t base_bank,
                           uint32_t base_row) {
    const auto& g = chip.geometry();
    if (g.rows_per_bank < 3)
        throw ValidationError("build_weight_map: chip needs at least 3 rows per bank");
    if (base_bank >= g.banks) throw ValidationError("build_weight_map: base_bank out of range");
    if (base_row < 1 || base_row + 1 >= g.rows_per_bank)
        throw ValidationError("build_weight_map: base_row must be an interior row");

    // Usable slots: interior rows from (base_bank, base_row) onwards.
    std::vector<std::pair<uint16_t, uint32_t>> rows;
    for (uint32_t b = base_bank; b < g.banks; ++b) {
        const uint32_t first = b == base_bank ? base_row : 1;
        for (uint32_t r = first; r + 1 < g.rows_per_bank; ++r)
            rows.emplace_back(static_cast<uint16_t>(b), r);
    }

    size_t total_bits = 0;
    for (size_t i = 0; i < model.layer_count(); ++i)
        total_bits += model.weight_count(i) * static_cast<size_t>(model.n_q());
    if (total_bits > rows.size() * static_cast<size_t>(g.bits_per_row))
        throw ValidationError("build_weight_map: model too large for chip");

    std::vector<uint32_t> rotation(rows.size(), 0);
    if (layout == MapLayout::SeededShuffle) {
        Rng rng(seed, 20);
        rng.shuffle(rows);
        for (auto& rot : rotation) rot = static_cast<uint32_t>(rng.uniform(g.bits_per_row));
    }

    WeightMap map;
    map.layout = layout;
    map.seed = seed;
    map.base_bank = base_bank;
    map.base_row = base_row;
    map.n_q = model.n_q();
    map.chip_fingerprint = chip.fingerprint();
    map.addrs.resize(model.layer_count());
    map.reverse.reserve(total_bits);

    size_t g_idx = 0;
    for (size_t layer = 0; layer < model.layer_count(); ++layer) {
        const size_t bits = model.weight_count(layer) * static_cast<size_t>(model.n_q());
        map.addrs[layer].resize(bits);
        for (size_t k = 0; k < bits; ++k, ++g_idx) {
            const size_t row_idx = g_idx / g.bits_per_row;
            const auto col_raw = static_cast<uint32_t>(g_idx % g.bits_per_row);
            const auto [bank, row] = rows[row_idx];
            const uint32_t col = (col_raw + rotation[row_idx]) % g.bits_per_row;
            const DramAddress addr{bank, row, col};
            map.addrs[layer][k] = addr;
            map.reverse.emplace(addr, BitRef{static_cast<uint32_t>(layer),
                                             static_cast<uint32_t>(k / model.n_q()),
                                             static_cast<uint8_t>(k % model.n_q())});
            map.mapped_rows.insert((static_cast<uint32_t>(bank) << 24) | row);
        }
    }
    return map;
}

}  // namespace faultline::attack
