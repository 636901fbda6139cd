#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "faultline/attack/weight_map.hpp"
#include "faultline/dram/profiler.hpp"

namespace faultline::attack {

using dram::FlipDirection;
using dram::VulnProfile;

/// One feasible weight bit: its mapped cell is in the profile; when
/// direction-aware, the stored bit currently equals the cell's flip source.
struct FeasibleBit {
    uint32_t weight = 0;
    uint8_t bit = 0;
    FlipDirection cell_direction = FlipDirection::OneToZero;
    uint64_t threshold = 0;  ///< measured disturbance cost of the mapped cell
};

struct FeasibleBitSet {
    std::vector<std::vector<FeasibleBit>> by_layer;
    bool direction_aware = true;

    size_t total() const {
        size_t n = 0;
        for (const auto& l : by_layer) n += l.size();
        return n;
    }
    bool empty() const { return total() == 0; }
};

/// Intersects the mapped weight bits with the profile cells; with
/// direction_aware, also requires the current stored bit to match the cell's
/// flip source value.
FeasibleBitSet feasible_bits(const qnn::QuantizedModel& model, const WeightMap& map,
                             const VulnProfile& profile, bool direction_aware = true);

/// Fixed attack mini-batch drawn from the test split.
struct AttackBatch {
    std::vector<double> x;
    std::vector<int> labels;
    int batch = 0;
};
AttackBatch make_attack_batch(const qnn::Dataset& data, size_t size, uint64_t seed);

enum class CommitMode : uint8_t { Logical, Physical };

struct AttackConfig {
    double objective_accuracy = -1.0;  ///< < 0: random guess + 0.02
    uint32_t max_flips = 500;
    uint32_t candidate_pool = 20;  ///< intra-layer trial pool size
    CommitMode commit_mode = CommitMode::Logical;
    bool direction_aware = true;
    bool allow_collateral = true;  ///< Physical mode: false aborts on collateral
    dram::DefenseConfig defense;   ///< applied to Physical commits
};

struct AttackFlip {
    uint32_t layer = 0;
    uint32_t weight = 0;
    uint8_t bit = 0;
    DramAddress addr;
    uint8_t pre_bit = 0;
    uint8_t post_bit = 0;
    bool collateral = false;
};

struct AttackResult {
    std::vector<AttackFlip> flips;
    std::vector<double> loss_trajectory;      ///< flips+1 entries, index 0 pre-attack
    std::vector<double> accuracy_trajectory;  ///< same shape
    uint64_t total_flips = 0;
    dram::Cycles time_budget_cycles = 0;
    bool succeeded = false;
    bool exhausted = false;  ///< feasible bits ran out before the objective
    bool greedy_invariant_held = true;  ///< post-commit loss == max trial loss, each iteration
    double baseline_accuracy = 0.0;
    double final_accuracy = 0.0;
    double objective_accuracy = 0.0;
    std::vector<DramAddress> offmap_flips;  ///< Physical collateral outside the map
};

/// One search iteration: per layer, the feasible bit with the largest
/// absolute bit gradient is trial-flipped (and restored) to record the loss;
/// the candidate of the layer with the maximum recorded loss is committed to
/// the model and retired from the feasible set. Ties break toward the lowest
/// layer, weight index, then bit position.
struct IterationOutcome {
    AttackFlip committed;
    std::vector<double> trial_losses;  ///< per layer; NaN where no candidate
    double committed_loss = 0.0;
};
IterationOutcome bfa_iteration(qnn::QuantizedModel& model, FeasibleBitSet& feasible,
                               const AttackBatch& batch, size_t candidate_pool = 20);

/// Full attack loop: iterates until the test accuracy reaches the objective
/// or the flip budget is exhausted. Physical mode lands every flip through an
/// injection run on the chip (verifying it), applies any collateral to the
/// model, and accounts the cycle cost.
AttackResult run_attack(qnn::QuantizedModel& model, dram::ChipState& chip,
                        const VulnProfile& profile, const WeightMap& map,
                        const AttackConfig& config, const AttackBatch& batch,
                        const qnn::Dataset& data);

/// Post-hoc audit: every flip address belongs to the profile.
bool flips_within_profile(const AttackResult& result, const VulnProfile& profile);

/// Hamming distance between two models' code tensors.
uint64_t bit_distance(const qnn::QuantizedModel& a, const qnn::QuantizedModel& b);

void save_attack_result(const AttackResult& result, const std::string& json_path,
                        const std::string& csv_path);

}  // namespace faultline::attack
