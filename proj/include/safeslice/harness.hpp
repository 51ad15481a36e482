#pragma once

// Pre-training, scenario runs for SafeSlice and the baselines, and
// comparison reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "safeslice/agents.hpp"
#include "safeslice/config.hpp"
#include "safeslice/costmodel.hpp"
#include "safeslice/kv.hpp"
#include "safeslice/safety.hpp"

namespace safeslice {

enum class AgentKind { SafeSlice, UnconstrainedA2C, SacL, SafeSlicePerfectPredictor };

std::string to_string(AgentKind kind);
AgentKind parse_agent_kind(const std::string& text);
bool uses_safety_layer(AgentKind kind);
bool uses_learned_cost_model(AgentKind kind);

struct Scenario {
  int category = 1;
  std::string train_level = "high";
  std::string test_level = "high";
  double train_threshold_ms = 10.0;  // epsilon = omega for the constrained slices
  double test_threshold_ms = 10.0;
  AgentKind agent = AgentKind::SafeSlice;
  std::size_t pretrain_steps = 20000;
  std::size_t test_steps = 2000;
  std::uint64_t seed = 1;
  std::filesystem::path cost_model;  // required by SafeSlice

  /// Same scenario apart from the agent.
  bool paired_with(const Scenario& other) const;
};

/// Keys under `scenario.`: category, train_level, test_level,
/// train_threshold_ms, test_threshold_ms, agent, pretrain_steps, test_steps,
/// seed, cost_model. Step counts default to the config's harness section.
Scenario scenario_from_kv(const KeyValueFile& kv, const ExperimentConfig& config);
KeyValueFile scenario_to_kv(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path, const ExperimentConfig& config);

/// Category 1: same traffic and threshold; 2: same traffic, stricter
/// threshold; 3: different traffic, same threshold; 4: different traffic,
/// stricter threshold.
void validate_scenario(const Scenario& s, const ExperimentConfig& config);

/// Copy of `config` whose constrained slices use `threshold_ms` as both the
/// cumulative and instantaneous threshold and as the reward's inflection.
ExperimentConfig with_constrained_threshold(const ExperimentConfig& config, double threshold_ms);

/// Environment seeds. Pre-training and test traffic use separate streams;
/// every agent of a seed sees the same test traffic.
std::uint64_t pretrain_env_seed(std::uint64_t seed);
std::uint64_t test_env_seed(std::uint64_t seed);
std::uint64_t agent_seed(std::uint64_t seed);

/// Plain A2C on the train level; SafeSlice variants start from this policy.
A2cAgent pretrain_a2c(const ExperimentConfig& config, const TrafficLevel& level, std::size_t steps, std::uint64_t seed);

/// SAC-L trained on the resource-only reward with the VR cost constrained.
SacLagrangianAgent pretrain_sacl(const ExperimentConfig& config, const TrafficLevel& level, std::size_t steps,
                                 std::uint64_t seed);

struct RunReport {
  Scenario scenario;
  std::vector<std::size_t> action;   // executed action index per window
  std::vector<double> cost_ms;       // constrained-slice cost per window (max over constrained)
  std::vector<char> violation;       // cost > instantaneous threshold
  std::vector<double> consumption;   // sum b / 100
  std::vector<double> reward;
  std::vector<char> overridden;
  std::vector<char> fallback;

  std::size_t windows() const { return cost_ms.size(); }
  std::vector<double> cumulative_average_cost() const;
  std::vector<std::size_t> accumulated_violations() const;
  double average_cost() const;
  std::size_t total_violations() const;
  double violation_rate() const;
  double average_consumption() const;
  std::size_t override_count() const;
  std::size_t fallback_count() const;
};

/// Pre-trained agents reused across scenarios that share a training setup.
struct PretrainedAgents {
  std::optional<A2cAgent> a2c;
  std::optional<SacLagrangianAgent> sacl;
};

struct RunOptions {
  /// Written when set: per-step safety decisions.
  std::ostream* decision_log = nullptr;
  /// Reused instead of pre-training when present.
  const PretrainedAgents* pretrained = nullptr;
  /// Overrides scenario.cost_model when set.
  std::shared_ptr<const CostModelSet> cost_models;
};

/// Pre-trains (unless supplied), then runs the test environment with online
/// updates. Throws ValidationError when a SafeSlice scenario has no model.
RunReport run_scenario(const Scenario& scenario, const ExperimentConfig& config, const RunOptions& options = {});

/// Pre-trains the agent kinds needed by `kind` for the scenario's training side.
PretrainedAgents pretrain_for(const Scenario& scenario, const ExperimentConfig& config, AgentKind kind);

/// 100 (baseline - safeslice) / baseline; 0 when both are 0, NaN when only
/// the baseline is.
double relative_reduction(double baseline, double safeslice);

struct ComparisonRow {
  std::string baseline;
  std::optional<std::uint64_t> seed;  // empty for the mean over seeds
  std::string metric;
  double baseline_value = 0.0;
  double safeslice_value = 0.0;
  double reduction_pct = 0.0;
};

/// Compares SafeSlice with every other agent on each seed (metrics:
/// average_cost, violations, consumption). Throws ValidationError on
/// unpaired scenarios or a missing SafeSlice report.
std::vector<ComparisonRow> compare(const std::vector<RunReport>& reports);

/// `dir/windows.csv` (raw series), `dir/scenario.cfg` and `dir/summary.csv`.
void save_report(const RunReport& report, const std::filesystem::path& dir);
RunReport load_report(const std::filesystem::path& dir);
/// Every subdirectory of `dir` holding a report, in path order.
std::vector<RunReport> load_reports(const std::filesystem::path& dir);

/// Per-metric CSVs (cumulative_cost.csv, violations.csv, consumption.csv):
/// one column per report. Returns the written paths.
std::vector<std::filesystem::path> write_metric_csvs(const std::vector<RunReport>& reports,
                                                     const std::filesystem::path& dir);
/// Matching SVG line charts. Returns the written paths.
std::vector<std::filesystem::path> write_metric_charts(const std::vector<RunReport>& reports,
                                                       const std::filesystem::path& dir);
void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::filesystem::path& path);

/// "<agent>-seed<k>" label used for columns and series.
std::string report_label(const RunReport& report);

}  // namespace safeslice
