#include "faultline/dram/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace faultline::dram {

using nlohmann::json;

namespace {

FlipDirection direction_of(uint8_t old_bit, uint8_t new_bit) {
    return old_bit == 1 && new_bit == 0 ? FlipDirection::OneToZero : FlipDirection::ZeroToOne;
}

std::vector<uint8_t> polarity_patterns(Polarity p) {
    return p == Polarity::Both ? std::vector<uint8_t>{1, 0} : std::vector<uint8_t>{1};
}

// Hammer thresholds for all cells of one victim row, read off the flip
// events of a full-budget double-sided run.
std::vector<ProfiledCell> profile_hammer_row(ChipState& chip, uint16_t bank, uint32_t victim,
                                             uint64_t rounds, Polarity polarity) {
    std::vector<ProfiledCell> out;
    for (uint8_t pattern : polarity_patterns(polarity)) {
        auto spec = InjectionSpec::hammer(bank, victim, rounds, pattern);
        InjectionResult res = rowhammer_inject(chip, spec);
        for (const FlipEvent& ev : res.report.flips) {
            if (ev.addr.row != victim || ev.via != Mechanism::RH) continue;
            out.push_back({ev.addr, ev.disturbance, direction_of(ev.old_bit, ev.new_bit)});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const ProfiledCell& a, const ProfiledCell& b) { return a.addr < b.addr; });
    return out;
}

// Press thresholds for all cells of one victim row. The canonical press
// target is the neighbor that itself has two neighbors; a discovery run
// finds the flipping cells and a per-cell binary search over the sleep
// budget pins the minimal open duration. The bisection probes replay the
// injector's exact command sequence through preallocated buffers and test a
// single bit, which keeps the million-probe sweeps cheap.
std::vector<ProfiledCell> profile_press_row(ChipState& chip, uint16_t bank, uint32_t victim,
                                            uint64_t max_open, Polarity polarity) {
    std::vector<ProfiledCell> out;
    const uint32_t rows = chip.geometry().rows_per_bank;
    const Cycles pair_open = chip.timing().pair_open_cycles();
    if (rows < 3 || max_open <= pair_open) return out;

    uint32_t target;
    if (victim + 1 <= rows - 2)
        target = victim + 1;
    else if (victim >= 2)
        target = victim - 1;
    else
        return out;

    const uint64_t sleep_budget = max_open - pair_open;
    const std::vector<uint8_t> ones(chip.geometry().bytes_per_row(), 0xff);
    const std::vector<uint8_t> zeros(chip.geometry().bytes_per_row(), 0x00);

    auto probe = [&](uint64_t sleep, uint8_t pattern, uint32_t column) {
        const auto& pat = pattern ? ones : zeros;
        const auto& inv = pattern ? zeros : ones;
        write_row(chip, bank, target - 1, pat);
        write_row(chip, bank, target + 1, pat);
        write_row(chip, bank, target, inv);
        Engine engine(chip, DefenseConfig::unlimited());
        engine.step(DramCommand::act(bank, target));
        engine.step(DramCommand::sleep(sleep));
        engine.step(DramCommand::pre(bank, target));
        return chip.bit(bank, victim, column) != pattern;
    };

    for (uint8_t pattern : polarity_patterns(polarity)) {
        auto res = rowpress_inject(chip, InjectionSpec::press(bank, target, sleep_budget, pattern));
        for (const ObservedFlip& f : res.flips) {
            if (f.addr.row != victim) continue;
            // flips(sleep) is monotone in sleep, so bisect the minimal sleep.
            uint64_t lo = 0, hi = sleep_budget;
            while (lo < hi) {
                const uint64_t mid = lo + (hi - lo) / 2;
                if (probe(mid, pattern, f.addr.column))
                    hi = mid;
                else
                    lo = mid + 1;
            }
            out.push_back({f.addr, lo + pair_open, direction_of(f.old_bit, f.new_bit)});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const ProfiledCell& a, const ProfiledCell& b) { return a.addr < b.addr; });
    return out;
}

}  // namespace

uint64_t default_max_budget(const ChipState& chip, Mechanism mechanism) {
    if (mechanism == Mechanism::RH) return chip.timing().max_hc_per_window;
    return chip.timing().refresh_window_cycles() - 1;
}

VulnProfile profile_chip(const ChipState& chip, Mechanism mechanism, uint64_t max_budget,
                         Polarity polarity) {
    if (mechanism != Mechanism::RH && mechanism != Mechanism::RP)
        throw ValidationError("profile_chip: mechanism must be RH or RP");
    if (mechanism == Mechanism::RH && max_budget > chip.timing().max_hc_per_window)
        throw ValidationError("profile_chip: budget above max_hc_per_window");
    if (mechanism == Mechanism::RP && max_budget >= chip.timing().refresh_window_cycles())
        throw ValidationError("profile_chip: budget reaches the refresh window");

    const auto& g = chip.geometry();
    const auto total_rows = static_cast<int64_t>(g.banks) * g.rows_per_bank;
    std::vector<std::vector<ProfiledCell>> per_row(static_cast<size_t>(total_rows));

    const uint64_t hammer_rounds = mechanism == Mechanism::RH ? max_budget / 2 : 0;

    #pragma omp parallel
    {
        ChipState clone = chip;  // per-thread working copy; the input stays intact
        #pragma omp for schedule(dynamic, 4)
        for (int64_t i = 0; i < total_rows; ++i) {
            const auto bank = static_cast<uint16_t>(i / g.rows_per_bank);
            const auto row = static_cast<uint32_t>(i % g.rows_per_bank);
            if (mechanism == Mechanism::RH) {
                const bool interior = row >= 1 && row + 1 < g.rows_per_bank;
                if (interior && hammer_rounds > 0)
                    per_row[static_cast<size_t>(i)] =
                        profile_hammer_row(clone, bank, row, hammer_rounds, polarity);
            } else {
                per_row[static_cast<size_t>(i)] =
                    profile_press_row(clone, bank, row, max_budget, polarity);
            }
        }
    }

    VulnProfile profile;
    profile.mechanism = mechanism;
    profile.chip_fingerprint = chip.fingerprint();
    profile.max_budget = max_budget;
    profile.polarity = polarity;
    for (auto& cells : per_row)
        profile.cells.insert(profile.cells.end(), cells.begin(), cells.end());
    return profile;
}

FlipCurve flip_curve(const VulnProfile& profile, const std::vector<uint64_t>& budget_grid) {
    for (size_t i = 1; i < budget_grid.size(); ++i)
        if (budget_grid[i] < budget_grid[i - 1])
            throw ValidationError("flip_curve: budget grid must be sorted ascending");
    std::vector<uint64_t> thresholds;
    thresholds.reserve(profile.cells.size());
    for (const ProfiledCell& c : profile.cells) thresholds.push_back(c.threshold);
    std::sort(thresholds.begin(), thresholds.end());

    FlipCurve curve;
    curve.mechanism = profile.mechanism;
    for (uint64_t budget : budget_grid) {
        const auto n = static_cast<uint64_t>(
            std::upper_bound(thresholds.begin(), thresholds.end(), budget) - thresholds.begin());
        curve.points.emplace_back(budget, n);
    }
    return curve;
}

FlipCurve flip_curve(const ChipState& chip, Mechanism mechanism,
                     const std::vector<uint64_t>& budget_grid) {
    return flip_curve(profile_chip(chip, mechanism, default_max_budget(chip, mechanism)),
                      budget_grid);
}

std::vector<uint64_t> log_budget_grid(const ChipState& chip, Mechanism mechanism,
                                      size_t points) {
    if (points < 2) throw ValidationError("log_budget_grid: need at least 2 points");
    const auto& vuln = chip.vulnerability();
    const uint64_t lo = mechanism == Mechanism::RH ? vuln.hc_threshold_distribution.low
                                                   : vuln.press_threshold_distribution.low;
    const uint64_t hi = default_max_budget(chip, mechanism);
    std::vector<uint64_t> grid;
    grid.reserve(points);
    const double llo = std::log(static_cast<double>(std::max<uint64_t>(lo, 1)));
    const double lhi = std::log(static_cast<double>(hi));
    for (size_t i = 0; i < points; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(points - 1);
        auto b = static_cast<uint64_t>(std::llround(std::exp(llo + f * (lhi - llo))));
        if (!grid.empty() && b <= grid.back()) b = grid.back() + 1;
        grid.push_back(b);
    }
    grid.back() = hi;
    return grid;
}

EqualTimeBudgets equal_time_budgets(const TimingParams& timing, double duration_ms) {
    return {timing.hc_equivalent(duration_ms), timing.ms_to_cycles(duration_ms)};
}

OverlapStats overlap_stats(const VulnProfile& rh, const VulnProfile& rp) {
    if (rh.chip_fingerprint != rp.chip_fingerprint)
        throw FingerprintMismatch("overlap_stats: profiles come from different chips");
    OverlapStats stats;
    std::unordered_set<DramAddress, DramAddressHash> rh_addrs;
    rh_addrs.reserve(rh.cells.size());
    for (const ProfiledCell& c : rh.cells) {
        rh_addrs.insert(c.addr);
        stats.rh_direction_histogram[static_cast<size_t>(c.direction)] += 1;
    }
    uint64_t both = 0;
    for (const ProfiledCell& c : rp.cells) {
        if (rh_addrs.count(c.addr)) ++both;
        stats.rp_direction_histogram[static_cast<size_t>(c.direction)] += 1;
    }
    const uint64_t uni = rh.cells.size() + rp.cells.size() - both;
    stats.overlap_fraction = uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
    return stats;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

const char* mech_name(Mechanism m) { return m == Mechanism::RH ? "rh" : "rp"; }

Mechanism mech_from(const std::string& s) {
    if (s == "rh") return Mechanism::RH;
    if (s == "rp") return Mechanism::RP;
    throw ParseError("unknown mechanism '" + s + "'");
}

const char* dir_name(FlipDirection d) {
    return d == FlipDirection::OneToZero ? "1to0" : "0to1";
}

FlipDirection dir_from(const std::string& s) {
    if (s == "1to0") return FlipDirection::OneToZero;
    if (s == "0to1") return FlipDirection::ZeroToOne;
    throw ParseError("unknown direction '" + s + "'");
}

}  // namespace

void save_profile(const VulnProfile& profile, const std::string& csv_path) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + csv_path);
    out << "bank,row,column,mechanism,threshold,direction\n";
    for (const ProfiledCell& c : profile.cells)
        out << c.addr.bank << ',' << c.addr.row << ',' << c.addr.column << ','
            << mech_name(profile.mechanism) << ',' << c.threshold << ','
            << dir_name(c.direction) << '\n';

    json side;
    side["format_version"] = kFormatVersion;
    side["tool_version"] = kToolVersion;
    side["chip_fingerprint"] = profile.chip_fingerprint;
    side["mechanism"] = mech_name(profile.mechanism);
    side["max_budget"] = profile.max_budget;
    side["polarity"] = profile.polarity == Polarity::Both ? "both" : "single";
    std::ofstream sout(csv_path + ".json", std::ios::binary);
    if (!sout) throw IoError("cannot write " + csv_path + ".json");
    sout << side.dump(2) << '\n';
}

VulnProfile load_profile(const std::string& csv_path) {
    std::ifstream side_in(csv_path + ".json", std::ios::binary);
    if (!side_in) throw IoError("cannot read " + csv_path + ".json");
    json side;
    try {
        side_in >> side;
    } catch (const json::exception& e) {
        throw ParseError(csv_path + ".json: " + e.what());
    }
    VulnProfile profile;
    try {
        if (side.at("format_version").get<int>() > kFormatVersion)
            throw ParseError(csv_path + ".json: unsupported format_version");
        profile.mechanism = mech_from(side.at("mechanism").get<std::string>());
        profile.chip_fingerprint = side.at("chip_fingerprint").get<std::string>();
        profile.max_budget = side.at("max_budget").get<uint64_t>();
        profile.polarity =
            side.at("polarity").get<std::string>() == "both" ? Polarity::Both : Polarity::Single;
    } catch (const json::exception& e) {
        throw ParseError(csv_path + ".json: " + e.what());
    }

    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot read " + csv_path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "bank,row,column,mechanism,threshold,direction")
                throw ParseError(csv_path + ": unexpected header");
            continue;
        }
        std::istringstream ls(line);
        std::string tok;
        std::vector<std::string> fields;
        while (std::getline(ls, tok, ',')) fields.push_back(tok);
        if (fields.size() != 6)
            throw ParseError(csv_path + " line " + std::to_string(line_no) + ": expected 6 fields");
        try {
            ProfiledCell cell;
            cell.addr = {static_cast<uint32_t>(std::stoul(fields[0])),
                         static_cast<uint32_t>(std::stoul(fields[1])),
                         static_cast<uint32_t>(std::stoul(fields[2]))};
            if (mech_from(fields[3]) != profile.mechanism)
                throw ParseError("mechanism mismatch with sidecar");
            cell.threshold = std::stoull(fields[4]);
            cell.direction = dir_from(fields[5]);
            profile.cells.push_back(cell);
        } catch (const std::exception& e) {
            throw ParseError(csv_path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return profile;
}

}  // namespace faultline::dram
