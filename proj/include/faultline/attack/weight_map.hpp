#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "faultline/dram/chip.hpp"
#include "faultline/qnn/quant.hpp"

namespace faultline::attack {

using dram::DramAddress;

enum class MapLayout : uint8_t { Sequential, SeededShuffle };

struct BitRef {
    uint32_t layer = 0;
    uint32_t weight = 0;
    uint8_t bit = 0;
    bool operator==(const BitRef&) const = default;
};

/// Injective map from every weight bit to a distinct DRAM cell. Only rows
/// with two in-range neighbors are used, so every mapped bit is reachable by
/// both injection procedures. Weight bits are laid out layer-major, weight-
/// major, LSB first.
struct WeightMap {
    MapLayout layout = MapLayout::Sequential;
    uint64_t seed = 0;
    uint16_t base_bank = 0;
    uint32_t base_row = 1;
    int n_q = 8;
    std::string chip_fingerprint;

    std::vector<std::vector<DramAddress>> addrs;  ///< [layer][weight * n_q + bit]
    std::unordered_map<DramAddress, BitRef, dram::DramAddressHash> reverse;
    std::unordered_set<uint32_t> mapped_rows;  ///< rows holding at least one bit (bank 0 keying: bank<<24|row)

    const DramAddress& at(uint32_t layer, uint32_t weight, uint8_t bit) const {
        return addrs.at(layer).at(static_cast<size_t>(weight) * n_q + bit);
    }
    const BitRef* find(const DramAddress& a) const {
        auto it = reverse.find(a);
        return it == reverse.end() ? nullptr : &it->second;
    }
    bool row_mapped(uint16_t bank, uint32_t row) const {
        return mapped_rows.count((static_cast<uint32_t>(bank) << 24) | row) > 0;
    }
    size_t total_bits() const;
};

/// Deterministic in (model, chip, layout, seed). Sequential packs bits
/// row-major from (base_bank, base_row); SeededShuffle permutes the row order
/// and rotates columns within each row. Throws if the model does not fit.
WeightMap build_weight_map(const qnn::QuantizedModel& model, const dram::ChipState& chip,
                           MapLayout layout, uint64_t seed = 0, uint16_t base_bank = 0,
                           uint32_t base_row = 1);

}  // namespace faultline::attack
