#include "safeslice/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include "safeslice/errors.hpp"
#include "safeslice/simenv.hpp"

namespace safeslice {

DrPlan plan_from_kv(const KeyValueFile& kv, const ExperimentConfig& config) {
  auto merged = config_to_kv(config);
  for (const auto& key : kv.keys_with_prefix("level.")) merged.set(key, *kv.get(key));
  const auto cfg = config_from_kv(merged);

  DrPlan plan;
  std::vector<std::string> names;
  for (const auto& [name, level] : cfg.levels) names.push_back(name);
  names = kv.get_strings("plan.levels", names);
  if (names.empty()) throw ValidationError("plan.levels must name at least one traffic level");
  for (const auto& name : names) plan.levels.push_back(cfg.level(name));

  const auto actions = kv.get_string("plan.actions", "all");
  if (actions != "all") {
    const ActionSpace space(config.slice_count(), config.sim.allocation_step, config.sim.allow_underallocation);
    for (const auto& item : split(actions, ',')) {
      const auto t = trim(item);
      std::size_t used = 0;
      unsigned long long idx = 0;
      try {
        idx = std::stoull(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != t.size()) throw ParseError("plan.actions: '" + t + "' is not an action index");
      if (idx >= space.size()) throw ValidationError("plan.actions: index " + t + " is outside the action space");
      plan.actions.push_back(static_cast<std::size_t>(idx));
    }
  }
  const auto windows = kv.get_int("plan.windows", static_cast<std::int64_t>(plan.windows));
  if (windows < 1) throw ValidationError("plan.windows must be at least 1");
  plan.windows = static_cast<std::size_t>(windows);
  plan.seed = kv.get_uint("plan.seed", plan.seed);
  const auto population = kv.get_int("plan.population_windows", static_cast<std::int64_t>(plan.population_windows));
  if (population < 0) throw ValidationError("plan.population_windows must not be negative");
  plan.population_windows = static_cast<std::size_t>(population);
  plan.lead_in_probability = kv.get_double("plan.lead_in_probability", plan.lead_in_probability);
  if (!(plan.lead_in_probability >= 0.0 && plan.lead_in_probability <= 1.0)) {
    throw ValidationError("plan.lead_in_probability must lie in [0, 1]");
  }
  return plan;
}

DrPlan load_plan(const std::filesystem::path& path, const ExperimentConfig& config) {
  return plan_from_kv(KeyValueFile::load(path), config);
}

CostDataset run_dr_plan(const DrPlan& plan, const ExperimentConfig& config, unsigned threads) {
  if (plan.levels.empty()) throw ValidationError("plan needs at least one traffic level");
  if (plan.windows < 1) throw ValidationError("plan.windows must be at least 1");
  if (!(plan.lead_in_probability >= 0.0 && plan.lead_in_probability <= 1.0)) {
    throw ValidationError("plan.lead_in_probability must lie in [0, 1]");
  }
  const ActionSpace space(config.slice_count(), config.sim.allocation_step, config.sim.allow_underallocation);
  std::vector<std::size_t> actions = plan.actions;
  if (actions.empty()) {
    actions.resize(space.size());
    for (std::size_t a = 0; a < actions.size(); ++a) actions[a] = a;
  }
  const std::size_t cells = plan.levels.size() * actions.size();
  const auto s = static_cast<Eigen::Index>(config.slice_count());
  const auto rows = static_cast<Eigen::Index>(cells * plan.windows);

  CostDataset data;
  data.slices = config.slice_count();
  data.features.resize(rows, 3 * s);
  data.costs.resize(rows, s);
  data.rewards.resize(rows);
  data.levels.resize(static_cast<std::size_t>(rows));

  auto shared = std::make_shared<const ExperimentConfig>(config);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next++; c < cells; c = next++) {
      const auto& level = plan.levels[c / actions.size()];
      const auto action = space.action(actions[c % actions.size()]);
      SlicingEnv env(shared, level, derive_seed(plan.seed, {c}));
      Rng lead(derive_seed(plan.seed, {c, 1}));
      std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      for (std::size_t w = 0; w < plan.windows; ++w) {
        const bool restart = w > 0 && plan.population_windows > 0 && w % plan.population_windows == 0;
        if (restart) env.resample_population();
        if (w > 0 && !restart && coin(lead) < plan.lead_in_probability) env.step(space.action(pick(lead)));
        const auto r = static_cast<Eigen::Index>(c * plan.windows + w);
        data.features.row(r) = cost_features(env.state(), action.shares, env.previous_cost()).transpose();
        const auto m = env.step(action);
        data.costs.row(r) = m.cost_ms.transpose();
        data.rewards[r] = m.reward;
        data.levels[static_cast<std::size_t>(r)] = level.name;
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cells));
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      try {
        work();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = cells;
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return data;
}

std::pair<CostDataset, CostDataset> split_dataset(const CostDataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < data.size(); ++r) groups[data.levels.empty() ? std::string() : data.levels[r]].push_back(r);

  Rng rng(seed);
  std::vector<std::size_t> train, test;
  for (auto& [name, rows] : groups) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n = rows.size();
    auto k = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (n >= 2) k = std::clamp<std::size_t>(k, 1, n - 1);
    train.insert(train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

}  // namespace safeslice
