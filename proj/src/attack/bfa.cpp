#include "faultline/attack/bfa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace faultline::attack {

using dram::Cycles;
using dram::DefenseConfig;
using dram::Mechanism;
using nlohmann::json;

FeasibleBitSet feasible_bits(const qnn::QuantizedModel& model, const WeightMap& map,
                             const VulnProfile& profile, bool direction_aware) {
    if (profile.chip_fingerprint != map.chip_fingerprint)
        throw FingerprintMismatch("feasible_bits: profile and map target different chips");

    std::unordered_map<DramAddress, const dram::ProfiledCell*, dram::DramAddressHash> cells;
    cells.reserve(profile.cells.size());
    for (const auto& c : profile.cells) cells.emplace(c.addr, &c);

    FeasibleBitSet out;
    out.direction_aware = direction_aware;
    out.by_layer.resize(model.layer_count());
    const auto n_q = static_cast<uint32_t>(model.n_q());
    for (size_t layer = 0; layer < model.layer_count(); ++layer) {
        for (size_t w = 0; w < model.weight_count(layer); ++w)
            for (uint32_t b = 0; b < n_q; ++b) {
                auto it = cells.find(map.at(static_cast<uint32_t>(layer),
                                            static_cast<uint32_t>(w),
                                            static_cast<uint8_t>(b)));
                if (it == cells.end()) continue;
                const dram::ProfiledCell& cell = *it->second;
                if (direction_aware &&
                    model.bit(layer, w, b) != dram::from_value(cell.direction))
                    continue;
                out.by_layer[layer].push_back({static_cast<uint32_t>(w),
                                               static_cast<uint8_t>(b), cell.direction,
                                               cell.threshold});
            }
    }
    return out;
}

AttackBatch make_attack_batch(const qnn::Dataset& data, size_t size, uint64_t seed) {
    AttackBatch batch;
    const auto idx = qnn::select_batch(data, size, seed);
    batch.batch = static_cast<int>(idx.size());
    batch.x.reserve(idx.size() * static_cast<size_t>(data.features));
    for (size_t i : idx) {
        const double* x = data.test_x.data() + i * data.features;
        batch.x.insert(batch.x.end(), x, x + data.features);
        batch.labels.push_back(data.test_y[i]);
    }
    return batch;
}

namespace {

struct Candidate {
    bool valid = false;
    uint32_t index = 0;  ///< position in the layer's feasible list
    FeasibleBit bit;
    double trial_loss = 0.0;
};

// Per-layer intra-search: pools the feasible bits with the largest |bit
// gradient| whose flip moves the loss uphill to first order, trial-flips
// each and keeps the one inducing the highest loss. Pure gradient ranking
// tunnels into already-wrecked logits; the trial pool lets globally
// disruptive flips win on their recorded loss.
std::vector<Candidate> select_candidates(qnn::QuantizedModel& model,
                                         const FeasibleBitSet& feasible,
                                         const AttackBatch& batch, size_t pool) {
    const qnn::BitGradients grads = bit_gradients(model, batch.x, batch.batch, batch.labels);
    const auto n_q = static_cast<uint32_t>(model.n_q());

    std::vector<Candidate> candidates(feasible.by_layer.size());
    for (int pass = 0; pass < 2; ++pass) {
        bool any = false;
        for (size_t layer = 0; layer < feasible.by_layer.size(); ++layer) {
            const auto& list = feasible.by_layer[layer];
            if (list.empty() || candidates[layer].valid) continue;

            // Indices of the pool, ranked by |gradient| with deterministic
            // lexicographic tie-breaks. pass 0 keeps only first-order ascent
            // flips; pass 1 (reached only when no layer has one) lifts that.
            std::vector<std::pair<double, uint32_t>> ranked;
            for (uint32_t i = 0; i < list.size(); ++i) {
                const FeasibleBit& fb = list[i];
                const double g =
                    grads.by_layer[layer][static_cast<size_t>(fb.weight) * n_q + fb.bit];
                // Flipping a 0 raises the encoding bit, flipping a 1 lowers
                // it; the first-order loss change is g times that sign.
                const double ascent =
                    g * (model.bit(layer, fb.weight, fb.bit) ? -1.0 : 1.0);
                if (pass == 0 && ascent <= 0.0) continue;
                ranked.emplace_back(-std::fabs(g), i);
            }
            if (ranked.empty()) continue;
            const size_t take = std::min(pool, ranked.size());
            std::partial_sort(ranked.begin(), ranked.begin() + take, ranked.end());

            Candidate& c = candidates[layer];
            for (size_t r = 0; r < take; ++r) {
                const uint32_t idx = ranked[r].second;
                const FeasibleBit& fb = list[idx];
                model.flip_bit(layer, fb.weight, fb.bit);
                const double loss =
                    forward_loss(model, batch.x, batch.batch, batch.labels).loss;
                model.flip_bit(layer, fb.weight, fb.bit);  // restore
                if (!c.valid || loss > c.trial_loss) {
                    c.valid = true;
                    c.index = idx;
                    c.bit = fb;
                    c.trial_loss = loss;
                }
            }
            any = true;
        }
        if (any) break;
    }
    return candidates;
}

size_t elect_layer(const std::vector<Candidate>& candidates) {
    size_t best = candidates.size();
    for (size_t l = 0; l < candidates.size(); ++l) {
        if (!candidates[l].valid) continue;
        if (best == candidates.size() || candidates[l].trial_loss > candidates[best].trial_loss)
            best = l;
    }
    if (best == candidates.size())
        throw ProfileExhausted("no feasible weight bits remain in any layer");
    return best;
}

void remove_feasible(FeasibleBitSet& feasible, size_t layer, uint32_t index) {
    auto& list = feasible.by_layer[layer];
    list.erase(list.begin() + index);
}

// Drops direction-aware entries whose stored bit no longer matches the cell's
// flip source (collateral flips can invalidate them).
void refilter_directions(const qnn::QuantizedModel& model, FeasibleBitSet& feasible) {
    if (!feasible.direction_aware) return;
    for (size_t layer = 0; layer < feasible.by_layer.size(); ++layer) {
        auto& list = feasible.by_layer[layer];
        std::erase_if(list, [&](const FeasibleBit& fb) {
            return model.bit(layer, fb.weight, fb.bit) != dram::from_value(fb.cell_direction);
        });
    }
}

}  // namespace

IterationOutcome bfa_iteration(qnn::QuantizedModel& model, FeasibleBitSet& feasible,
                               const AttackBatch& batch, size_t candidate_pool) {
    if (feasible.empty()) throw ProfileExhausted("feasible bit set is empty");
    const auto candidates = select_candidates(model, feasible, batch, candidate_pool);
    const size_t layer = elect_layer(candidates);
    const Candidate& chosen = candidates[layer];

    IterationOutcome out;
    out.trial_losses.assign(candidates.size(), std::numeric_limits<double>::quiet_NaN());
    for (size_t l = 0; l < candidates.size(); ++l)
        if (candidates[l].valid) out.trial_losses[l] = candidates[l].trial_loss;

    out.committed.layer = static_cast<uint32_t>(layer);
    out.committed.weight = chosen.bit.weight;
    out.committed.bit = chosen.bit.bit;
    out.committed.pre_bit = model.bit(layer, chosen.bit.weight, chosen.bit.bit);
    model.flip_bit(layer, chosen.bit.weight, chosen.bit.bit);
    out.committed.post_bit = model.bit(layer, chosen.bit.weight, chosen.bit.bit);
    out.committed_loss = chosen.trial_loss;
    remove_feasible(feasible, layer, chosen.index);
    refilter_directions(model, feasible);
    return out;
}

// ---------------------------------------------------------------------------
// Physical commits
// ---------------------------------------------------------------------------

namespace {

struct CommitOutcome {
    std::vector<dram::FlipEvent> flips;
    Cycles cycles = 0;
};

std::vector<uint8_t> with_bit_toggled(std::vector<uint8_t> bytes, uint32_t col) {
    bytes[col >> 3] ^= static_cast<uint8_t>(1u << (col & 7));
    return bytes;
}

// Lands one targeted flip by disturbing the victim's neighbor rows. Pattern
// payloads equal the victim's contents except at the target column, so no
// other cell of the victim row passes the data-pattern gate. Aggressor rows
// are saved and rewritten afterwards.
CommitOutcome physical_commit(dram::ChipState& chip, const WeightMap& map,
                              Mechanism mechanism, const DramAddress& addr,
                              uint64_t threshold, const DefenseConfig& defense) {
    const auto bank = static_cast<uint16_t>(addr.bank);
    const uint32_t v = addr.row;
    const auto victim = dram::read_row(chip, bank, v);
    const auto pattern = with_bit_toggled(victim, addr.column);

    dram::Engine engine(chip, defense);
    auto wr = [&](uint32_t row, const std::vector<uint8_t>& payload) {
        engine.step(dram::DramCommand{dram::CommandKind::WR, bank, row, 0}, &payload);
    };

    if (mechanism == Mechanism::RH) {
        const uint32_t a1 = v - 1, a2 = v + 1;
        const auto save1 = dram::read_row(chip, bank, a1);
        const auto save2 = dram::read_row(chip, bank, a2);
        wr(a1, pattern);
        wr(a2, pattern);
        const uint64_t rounds = (threshold + 1) / 2;
        for (uint64_t i = 0; i < rounds; ++i) {
            engine.step(dram::DramCommand::act(bank, a1));
            engine.step(dram::DramCommand::pre(bank, a1));
            engine.step(dram::DramCommand::act(bank, a2));
            engine.step(dram::DramCommand::pre(bank, a2));
        }
        wr(a1, save1);
        wr(a2, save2);
    } else {
        // Press from the side whose far neighbor holds no mapped bits, when
        // possible; collateral can then only land off-map.
        const uint32_t rows = chip.geometry().rows_per_bank;
        uint32_t aggressor = v - 1;
        const bool low_clean = v < 2 || !map.row_mapped(bank, v - 2);
        const bool high_clean = v + 2 >= rows || !map.row_mapped(bank, v + 2);
        if (!low_clean && high_clean) aggressor = v + 1;
        const auto save = dram::read_row(chip, bank, aggressor);
        const Cycles pair_open = chip.timing().pair_open_cycles();
        const uint64_t sleep = threshold > pair_open ? threshold - pair_open : 0;
        wr(aggressor, pattern);
        engine.step(dram::DramCommand::act(bank, aggressor));
        engine.step(dram::DramCommand::sleep(sleep));
        engine.step(dram::DramCommand::pre(bank, aggressor));
        wr(aggressor, save);
    }

    auto report = engine.take_report();
    return {std::move(report.flips), report.total_cycles};
}

// Writes the model's weight bits into their mapped cells.
void sync_chip_with_model(dram::ChipState& chip, const qnn::QuantizedModel& model,
                          const WeightMap& map) {
    const auto n_q = static_cast<uint32_t>(model.n_q());
    std::unordered_map<uint64_t, std::vector<uint8_t>> rows;
    for (size_t layer = 0; layer < model.layer_count(); ++layer)
        for (size_t w = 0; w < model.weight_count(layer); ++w)
            for (uint32_t b = 0; b < n_q; ++b) {
                const DramAddress& a = map.at(static_cast<uint32_t>(layer),
                                              static_cast<uint32_t>(w),
                                              static_cast<uint8_t>(b));
                const uint64_t key = (static_cast<uint64_t>(a.bank) << 32) | a.row;
                auto it = rows.find(key);
                if (it == rows.end())
                    it = rows.emplace(key, dram::read_row(chip, static_cast<uint16_t>(a.bank),
                                                          a.row))
                             .first;
                auto& bytes = it->second;
                const uint8_t mask = static_cast<uint8_t>(1u << (a.column & 7));
                if (model.bit(layer, w, b))
                    bytes[a.column >> 3] |= mask;
                else
                    bytes[a.column >> 3] &= static_cast<uint8_t>(~mask);
            }
    std::vector<uint64_t> keys;
    keys.reserve(rows.size());
    for (const auto& [k, _] : rows) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (uint64_t k : keys)
        dram::write_row(chip, static_cast<uint16_t>(k >> 32), static_cast<uint32_t>(k),
                        rows[k]);
}

}  // namespace

AttackResult run_attack(qnn::QuantizedModel& model, dram::ChipState& chip,
                        const VulnProfile& profile, const WeightMap& map,
                        const AttackConfig& config, const AttackBatch& batch,
                        const qnn::Dataset& data) {
    if (profile.chip_fingerprint != chip.fingerprint())
        throw FingerprintMismatch("run_attack: profile was measured on a different chip");
    if (map.chip_fingerprint != chip.fingerprint())
        throw FingerprintMismatch("run_attack: weight map targets a different chip");

    AttackResult res;
    res.objective_accuracy = config.objective_accuracy >= 0.0
                                 ? config.objective_accuracy
                                 : data.random_guess() + 0.02;
    res.baseline_accuracy = accuracy(model, data).accuracy;
    res.loss_trajectory.push_back(
        forward_loss(model, batch.x, batch.batch, batch.labels).loss);
    res.accuracy_trajectory.push_back(res.baseline_accuracy);
    res.final_accuracy = res.baseline_accuracy;
    if (res.baseline_accuracy <= res.objective_accuracy) {
        res.succeeded = true;
        return res;
    }

    FeasibleBitSet feasible = feasible_bits(model, map, profile, config.direction_aware);
    if (config.commit_mode == CommitMode::Physical) sync_chip_with_model(chip, model, map);

    double acc = res.baseline_accuracy;
    while (acc > res.objective_accuracy && res.flips.size() < config.max_flips) {
        if (feasible.empty()) {
            // Nothing was ever attackable: that is an error. Running dry
            // mid-attack is a legitimate (failed) outcome.
            if (res.flips.empty())
                throw ProfileExhausted("run_attack: no feasible weight bits for this profile");
            res.exhausted = true;
            break;
        }

        const auto candidates = select_candidates(model, feasible, batch, config.candidate_pool);
        const size_t layer = elect_layer(candidates);
        const Candidate& chosen = candidates[layer];
        const DramAddress target =
            map.at(static_cast<uint32_t>(layer), chosen.bit.weight, chosen.bit.bit);

        AttackFlip flip;
        flip.layer = static_cast<uint32_t>(layer);
        flip.weight = chosen.bit.weight;
        flip.bit = chosen.bit.bit;
        flip.addr = target;
        flip.pre_bit = model.bit(layer, chosen.bit.weight, chosen.bit.bit);

        std::vector<dram::FlipEvent> collateral;
        if (config.commit_mode == CommitMode::Logical) {
            model.flip_bit(layer, chosen.bit.weight, chosen.bit.bit);
        } else {
            CommitOutcome outcome = physical_commit(chip, map, profile.mechanism, target,
                                                    chosen.bit.threshold, config.defense);
            res.time_budget_cycles += outcome.cycles;
            const uint8_t landed = chip.bit(target.bank, target.row, target.column);
            if (landed != dram::to_value(chosen.bit.cell_direction) || landed == flip.pre_bit)
                throw PhysicalFlipMismatch(
                    "run_attack: committed flip did not land as intended (defense "
                    "interference or mapping drift)");
            model.flip_bit(layer, chosen.bit.weight, chosen.bit.bit);
            for (const dram::FlipEvent& ev : outcome.flips)
                if (!(ev.addr == target)) collateral.push_back(ev);
            if (!collateral.empty() && !config.allow_collateral)
                throw CollateralForbidden("run_attack: collateral flips occurred");
        }
        flip.post_bit = model.bit(layer, chosen.bit.weight, chosen.bit.bit);
        remove_feasible(feasible, layer, chosen.index);

        const double post_loss =
            forward_loss(model, batch.x, batch.batch, batch.labels).loss;
        if (post_loss != chosen.trial_loss) res.greedy_invariant_held = false;
        acc = accuracy(model, data).accuracy;
        res.flips.push_back(flip);
        res.loss_trajectory.push_back(post_loss);
        res.accuracy_trajectory.push_back(acc);

        // Collateral lands after the elected flip, in address order.
        std::sort(collateral.begin(), collateral.end(),
                  [](const dram::FlipEvent& a, const dram::FlipEvent& b) {
                      return a.addr < b.addr;
                  });
        for (const dram::FlipEvent& ev : collateral) {
            const BitRef* ref = map.find(ev.addr);
            if (ref == nullptr) {
                res.offmap_flips.push_back(ev.addr);
                continue;
            }
            AttackFlip cf;
            cf.layer = ref->layer;
            cf.weight = ref->weight;
            cf.bit = ref->bit;
            cf.addr = ev.addr;
            cf.pre_bit = model.bit(ref->layer, ref->weight, ref->bit);
            cf.collateral = true;
            model.flip_bit(ref->layer, ref->weight, ref->bit);
            cf.post_bit = model.bit(ref->layer, ref->weight, ref->bit);
            res.flips.push_back(cf);
            res.loss_trajectory.push_back(
                forward_loss(model, batch.x, batch.batch, batch.labels).loss);
            acc = accuracy(model, data).accuracy;
            res.accuracy_trajectory.push_back(acc);
        }
        if (!collateral.empty()) refilter_directions(model, feasible);
    }

    res.total_flips = res.flips.size();
    res.final_accuracy = acc;
    res.succeeded = acc <= res.objective_accuracy;
    return res;
}

bool flips_within_profile(const AttackResult& result, const VulnProfile& profile) {
    std::unordered_set<DramAddress, dram::DramAddressHash> cells;
    cells.reserve(profile.cells.size());
    for (const auto& c : profile.cells) cells.insert(c.addr);
    for (const AttackFlip& f : result.flips)
        if (!cells.count(f.addr)) return false;
    return true;
}

uint64_t bit_distance(const qnn::QuantizedModel& a, const qnn::QuantizedModel& b) {
    if (a.layer_count() != b.layer_count() || a.n_q() != b.n_q())
        throw ValidationError("bit_distance: model shapes differ");
    uint64_t d = 0;
    const uint16_t mask = static_cast<uint16_t>((1u << a.n_q()) - 1u);
    for (size_t layer = 0; layer < a.layer_count(); ++layer) {
        if (a.weight_count(layer) != b.weight_count(layer))
            throw ValidationError("bit_distance: layer sizes differ");
        for (size_t w = 0; w < a.weight_count(layer); ++w) {
            auto x = static_cast<uint16_t>(
                (static_cast<uint16_t>(a.code(layer, w)) ^
                 static_cast<uint16_t>(b.code(layer, w))) & mask);
            d += static_cast<uint64_t>(__builtin_popcount(x));
        }
    }
    return d;
}

void save_attack_result(const AttackResult& result, const std::string& json_path,
                        const std::string& csv_path) {
    json j;
    j["format_version"] = kFormatVersion;
    j["tool_version"] = kToolVersion;
    j["succeeded"] = result.succeeded;
    j["baseline_accuracy"] = result.baseline_accuracy;
    j["final_accuracy"] = result.final_accuracy;
    j["objective_accuracy"] = result.objective_accuracy;
    j["total_flips"] = result.total_flips;
    j["time_budget_cycles"] = result.time_budget_cycles;
    j["exhausted"] = result.exhausted;
    j["greedy_invariant_held"] = result.greedy_invariant_held;
    json flips = json::array();
    for (const AttackFlip& f : result.flips)
        flips.push_back({{"layer", f.layer},
                         {"weight", f.weight},
                         {"bit", f.bit},
                         {"bank", f.addr.bank},
                         {"row", f.addr.row},
                         {"column", f.addr.column},
                         {"pre_bit", f.pre_bit},
                         {"post_bit", f.post_bit},
                         {"collateral", f.collateral}});
    j["flips"] = flips;
    j["loss_trajectory"] = result.loss_trajectory;
    j["accuracy_trajectory"] = result.accuracy_trajectory;
    json offmap = json::array();
    for (const DramAddress& a : result.offmap_flips)
        offmap.push_back({{"bank", a.bank}, {"row", a.row}, {"column", a.column}});
    j["offmap_flips"] = offmap;

    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + json_path);
    out << j.dump(2) << '\n';

    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv.precision(17);
    csv << "iteration,loss,accuracy,cumulative_flips\n";
    for (size_t i = 0; i < result.loss_trajectory.size(); ++i) {
        csv << i << ',' << result.loss_trajectory[i] << ',' << result.accuracy_trajectory[i]
            << ',' << i << '\n';
    }
}

}  // namespace faultline::attack
