#include "faultline/dram/chip.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace faultline::dram {

using nlohmann::json;

void ChipState::store_row(uint32_t bank, uint32_t row, std::span<const uint8_t> bytes) {
    if (bytes.size() != geometry_.bytes_per_row())
        throw ValidationError("store_row: payload size mismatch");
    std::copy(bytes.begin(), bytes.end(), row_bytes_mut(bank, row));
}

std::optional<CellTruth> ChipState::truth(const DramAddress& a) const {
    const auto& v = cells(a.bank, a.row);
    auto it = std::lower_bound(v.begin(), v.end(), a.column,
                               [](const VulnCell& c, uint32_t col) { return c.column < col; });
    if (it == v.end() || it->column != a.column) return std::nullopt;
    return CellTruth{it->mechanism, it->hc_threshold, it->press_threshold, it->direction};
}

void ChipState::reset_row_disturbance(uint32_t bank, uint32_t row) {
    RowState& s = state_[flat(bank, row)];
    s.disturb_hc = 0;
    s.press_max = 0;
    s.hammer.reset();
    s.press.reset();
    s.recheck_blocked = false;
}

bool ChipState::same_truth(const ChipState& other) const {
    if (geometry_ != other.geometry_) return false;
    for (uint32_t b = 0; b < geometry_.banks; ++b)
        for (uint32_t r = 0; r < geometry_.rows_per_bank; ++r) {
            const auto& a = cells(b, r);
            const auto& o = other.cells(b, r);
            if (a.size() != o.size()) return false;
            for (size_t i = 0; i < a.size(); ++i) {
                if (a[i].column != o[i].column || a[i].mechanism != o[i].mechanism ||
                    a[i].direction != o[i].direction ||
                    a[i].hc_threshold != o[i].hc_threshold ||
                    a[i].press_threshold != o[i].press_threshold)
                    return false;
            }
        }
    return true;
}

namespace {

// Splits `total` across `parts` deterministically so the shares sum exactly.
uint64_t share_of(uint64_t total, uint32_t part, uint32_t parts) {
    return total * (part + 1) / parts - total * part / parts;
}

// Draws `count` distinct values from [0, space) in a deterministic order.
std::vector<uint64_t> sample_distinct(Rng& rng, uint64_t space, uint64_t count,
                                      std::unordered_set<uint64_t>& used) {
    std::vector<uint64_t> out;
    out.reserve(count);
    while (out.size() < count) {
        uint64_t v = rng.uniform(space);
        if (used.insert(v).second) out.push_back(v);
    }
    return out;
}

}  // namespace

ChipState generate_chip(const ChipGeometry& geometry, const TimingParams& timing,
                        const VulnerabilityConfig& config) {
    geometry.validate();
    timing.validate();
    config.validate(geometry, timing);

    ChipState chip;
    chip.geometry_ = geometry;
    chip.timing_ = timing;
    chip.vuln_ = config;
    chip.fingerprint_ = hex64(fnv1a64(chip_descriptor_json(geometry, timing, config)));

    const size_t row_slots = static_cast<size_t>(geometry.banks) * geometry.rows_per_bank;
    chip.bits_.assign(row_slots * geometry.bytes_per_row(), 0);
    chip.cells_.resize(row_slots);
    chip.hammer_order_.resize(row_slots);
    chip.press_order_.resize(row_slots);
    chip.state_.assign(row_slots, RowState{});
    chip.open_row_.assign(geometry.banks, std::nullopt);

    const uint64_t total = geometry.total_cells();
    const auto n_rh = static_cast<uint64_t>(std::llround(config.rh_cell_density * total));
    const auto n_rp = static_cast<uint64_t>(std::llround(config.rp_cell_density * total));
    uint64_t n_both = static_cast<uint64_t>(
        std::llround(config.overlap_fraction * (n_rh + n_rp) / (1.0 + config.overlap_fraction)));
    n_both = std::min({n_both, n_rh, n_rp});

    const auto& hc_b = config.hc_threshold_distribution;
    const auto& press_b = config.press_threshold_distribution;
    // Hammer thresholds are sampled on the even lattice: a double-sided round
    // disturbs a victim twice, so even thresholds keep the minimal budget and
    // the crossing value identical.
    const uint64_t hc_half_lo = (hc_b.low + 1) / 2;
    const uint64_t hc_half_hi = hc_b.high / 2;

    {
        const uint64_t interior_per_bank =
            geometry.rows_per_bank >= 2
                ? static_cast<uint64_t>(geometry.rows_per_bank - 2) * geometry.bits_per_row
                : 0;
        for (uint32_t b = 0; b < geometry.banks; ++b)
            if (share_of(n_rh, b, geometry.banks) > interior_per_bank)
                throw ValidationError("generate_chip: not enough interior cells for rh density");
    }

    #pragma omp parallel for schedule(static)
    for (int64_t bank_i = 0; bank_i < static_cast<int64_t>(geometry.banks); ++bank_i) {
        const auto bank = static_cast<uint32_t>(bank_i);
        Rng rng(config.seed, 0x10000u + bank);

        const uint64_t rows = geometry.rows_per_bank;
        const uint64_t bits = geometry.bits_per_row;
        const uint64_t interior_rows = rows >= 2 ? rows - 2 : 0;
        const uint64_t interior_space = interior_rows * bits;

        const uint64_t bank_rh = share_of(n_rh, bank, geometry.banks);
        const uint64_t bank_rp = share_of(n_rp, bank, geometry.banks);
        const uint64_t bank_both = std::min({share_of(n_both, bank, geometry.banks),
                                             bank_rh, bank_rp});

        std::unordered_set<uint64_t> used;  // keyed by interior index space
        used.reserve(static_cast<size_t>(bank_rh + bank_rp));

        struct Placed {
            uint64_t cell;  // bank-local flat index: row * bits + column
            Mechanism mech;
        };
        std::vector<Placed> placed;
        placed.reserve(static_cast<size_t>(bank_rh + bank_rp - bank_both));

        // Hammer-capable cells live on interior rows only.
        auto rh_cells = sample_distinct(rng, interior_space, bank_rh, used);
        for (uint64_t i = 0; i < bank_rh; ++i) {
            const uint64_t row = rh_cells[i] / bits + 1;  // shift into [1, rows-2]
            const uint64_t col = rh_cells[i] % bits;
            placed.push_back({row * bits + col,
                              i < bank_both ? Mechanism::Both : Mechanism::RH});
        }

        // Press-only cells may land anywhere, including edge rows. The used
        // set is keyed by interior indices, so re-map candidates into that
        // space when they fall on interior rows.
        uint64_t need_rp = bank_rp - bank_both;
        std::unordered_set<uint64_t> used_full;
        used_full.reserve(placed.size() + need_rp);
        for (const Placed& p : placed) used_full.insert(p.cell);
        while (need_rp > 0) {
            const uint64_t v = rng.uniform(rows * bits);
            if (used_full.insert(v).second) {
                placed.push_back({v, Mechanism::RP});
                --need_rp;
            }
        }

        for (const Placed& p : placed) {
            VulnCell cell;
            cell.column = static_cast<uint32_t>(p.cell % bits);
            cell.mechanism = p.mech;
            if (is_hammer_capable(p.mech))
                cell.hc_threshold = 2 * rng.log_uniform(hc_half_lo, hc_half_hi);
            if (is_press_capable(p.mech))
                cell.press_threshold = rng.log_uniform(press_b.low, press_b.high);
            switch (p.mech) {
                case Mechanism::RH:
                    cell.direction = rng.coin(config.rh_direction_bias)
                                         ? FlipDirection::OneToZero
                                         : FlipDirection::ZeroToOne;
                    break;
                case Mechanism::RP:
                    cell.direction = rng.coin(config.rp_direction_bias)
                                         ? FlipDirection::ZeroToOne
                                         : FlipDirection::OneToZero;
                    break;
                default:
                    cell.direction = rng.coin(0.5) ? FlipDirection::OneToZero
                                                   : FlipDirection::ZeroToOne;
            }
            const auto row = static_cast<uint32_t>(p.cell / bits);
            chip.cells_[chip.flat(bank, row)].push_back(cell);
        }

        for (uint32_t r = 0; r < rows; ++r) {
            auto& v = chip.cells_[chip.flat(bank, r)];
            std::sort(v.begin(), v.end(),
                      [](const VulnCell& a, const VulnCell& b) { return a.column < b.column; });
            auto& ho = chip.hammer_order_[chip.flat(bank, r)];
            auto& po = chip.press_order_[chip.flat(bank, r)];
            for (uint32_t i = 0; i < v.size(); ++i) {
                if (is_hammer_capable(v[i].mechanism)) ho.push_back(i);
                if (is_press_capable(v[i].mechanism)) po.push_back(i);
            }
            std::stable_sort(ho.begin(), ho.end(), [&](uint32_t a, uint32_t b) {
                return v[a].hc_threshold < v[b].hc_threshold;
            });
            std::stable_sort(po.begin(), po.end(), [&](uint32_t a, uint32_t b) {
                return v[a].press_threshold < v[b].press_threshold;
            });
        }
    }

    return chip;
}

// ---------------------------------------------------------------------------
// Descriptor JSON
// ---------------------------------------------------------------------------

std::string chip_descriptor_json(const ChipGeometry& g, const TimingParams& t,
                                 const VulnerabilityConfig& v) {
    json j;
    j["format_version"] = kFormatVersion;
    j["geometry"] = {{"banks", g.banks},
                     {"rows_per_bank", g.rows_per_bank},
                     {"bits_per_row", g.bits_per_row}};
    j["timing"] = {{"freq_mhz", t.freq_mhz},
                   {"t_ras_cycles", t.t_ras_cycles},
                   {"t_rp_cycles", t.t_rp_cycles},
                   {"sleep_cycles", t.sleep_cycles},
                   {"t_refw_ms", t.t_refw_ms},
                   {"max_hc_per_window", t.max_hc_per_window}};
    j["vulnerability"] = {
        {"rh_cell_density", v.rh_cell_density},
        {"rp_cell_density", v.rp_cell_density},
        {"overlap_fraction", v.overlap_fraction},
        {"rh_direction_bias", v.rh_direction_bias},
        {"rp_direction_bias", v.rp_direction_bias},
        {"hc_threshold_log_uniform",
         {{"low", v.hc_threshold_distribution.low}, {"high", v.hc_threshold_distribution.high}}},
        {"press_threshold_log_uniform",
         {{"low", v.press_threshold_distribution.low},
          {"high", v.press_threshold_distribution.high}}}};
    j["seed"] = v.seed;
    return j.dump(2) + "\n";
}

void save_chip_descriptor(const ChipState& chip, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << chip_descriptor_json(chip.geometry(), chip.timing(), chip.vulnerability());
}

ChipState load_chip_descriptor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (j.at("format_version").get<int>() > kFormatVersion)
            throw ParseError(path + ": unsupported format_version");
        ChipGeometry g;
        g.banks = j.at("geometry").at("banks").get<uint32_t>();
        g.rows_per_bank = j.at("geometry").at("rows_per_bank").get<uint32_t>();
        g.bits_per_row = j.at("geometry").at("bits_per_row").get<uint32_t>();
        TimingParams t;
        const auto& jt = j.at("timing");
        t.freq_mhz = jt.at("freq_mhz").get<double>();
        t.t_ras_cycles = jt.at("t_ras_cycles").get<uint32_t>();
        t.t_rp_cycles = jt.at("t_rp_cycles").get<uint32_t>();
        t.sleep_cycles = jt.at("sleep_cycles").get<uint32_t>();
        t.t_refw_ms = jt.at("t_refw_ms").get<double>();
        t.max_hc_per_window = jt.at("max_hc_per_window").get<uint64_t>();
        VulnerabilityConfig v;
        const auto& jv = j.at("vulnerability");
        v.rh_cell_density = jv.at("rh_cell_density").get<double>();
        v.rp_cell_density = jv.at("rp_cell_density").get<double>();
        v.overlap_fraction = jv.at("overlap_fraction").get<double>();
        v.rh_direction_bias = jv.at("rh_direction_bias").get<double>();
        v.rp_direction_bias = jv.at("rp_direction_bias").get<double>();
        v.hc_threshold_distribution = {
            jv.at("hc_threshold_log_uniform").at("low").get<uint64_t>(),
            jv.at("hc_threshold_log_uniform").at("high").get<uint64_t>()};
        v.press_threshold_distribution = {
            jv.at("press_threshold_log_uniform").at("low").get<uint64_t>(),
            jv.at("press_threshold_log_uniform").at("high").get<uint64_t>()};
        v.seed = j.at("seed").get<uint64_t>();
        return generate_chip(g, t, v);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace faultline::dram
