#pragma once

// Offline dataset generation: every (traffic level, allocation) cell of a
// plan runs on a fresh simulator for a fixed number of windows.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/costmodel.hpp"
#include "safeslice/kv.hpp"

namespace safeslice {

struct DrPlan {
  std::vector<TrafficLevel> levels;
  std::vector<std::size_t> actions;  // action-space indices; empty means all
  std::size_t windows = 50;
  std::uint64_t seed = 1;
  /// Chance that a recorded window after the first is preceded by an
  /// unrecorded window under a random allocation, so the previous cost comes
  /// from another action.
  double lead_in_probability = 0.5;
  /// Redraw the cell's user population (cold restart) every this many
  /// recorded windows; 0 keeps one population per cell.
  std::size_t population_windows = 25;
};

/// Keys: plan.levels (names), plan.actions ("all" or indices), plan.windows,
/// plan.seed, plan.lead_in_probability,
/// plan.population_windows. level.NAME.* entries in the plan file add or replace levels.
DrPlan plan_from_kv(const KeyValueFile& kv, const ExperimentConfig& config);
DrPlan load_plan(const std::filesystem::path& path, const ExperimentConfig& config);

/// Cell `c` = level (c / actions) x action (c % actions) runs with seed
/// derive_seed(plan.seed, {c}). The first window of a cell sees a uniform
/// kappa and zero previous cost. Lead-in draws use derive_seed(plan.seed, {c, 1}). Rows come out in cell order.
CostDataset run_dr_plan(const DrPlan& plan, const ExperimentConfig& config, unsigned threads = 0);

/// Seeded split, stratified by level: each level contributes
/// floor(fraction * n) rows to train, kept within [1, n - 1] when n >= 2.
std::pair<CostDataset, CostDataset> split_dataset(const CostDataset& data, double train_fraction, std::uint64_t seed);

}  // namespace safeslice
