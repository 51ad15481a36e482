#pragma once

// Typed experiment configuration and the discrete allocation action space.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "safeslice/kv.hpp"

namespace safeslice {

enum class ServiceKind { Video, VoNR, VrGaming };

std::string to_string(ServiceKind kind);
ServiceKind parse_service_kind(const std::string& text);

/// Latency SLA of one slice. `sigmoid_inflection_ms` defaults to the
/// cumulative threshold.
struct SlaConfig {
  double cumulative_threshold_ms = 10.0;
  double instantaneous_threshold_ms = 10.0;
  double sigmoid_steepness = 2.0;  // per ms
  double sigmoid_inflection_ms = 10.0;

  bool operator==(const SlaConfig&) const = default;
};

struct SliceSpec {
  std::size_t id = 1;  // 1-based
  ServiceKind service_kind = ServiceKind::Video;
  double priority_weight = 1.0;
  SlaConfig sla;
  std::size_t queue_capacity = 2000;  // packets
  /// Whether the safety layer and the Lagrangian baseline gate on this slice.
  bool constrained = false;

  bool operator==(const SliceSpec&) const = default;
};

struct SimParams {
  double total_bandwidth_bytes = 18750.0;  // per TTI
  double tti_ms = 1.0;
  int window_ttis = 100;
  int allocation_step = 10;  // percent
  bool allow_underallocation = true;
  double latency_cap_ms = 50.0;
  std::uint64_t seed = 1;

  bool operator==(const SimParams&) const = default;
};

struct RewardWeights {
  double resource = 0.5;  // W_u
  double latency = 0.5;   // W_l

  bool operator==(const RewardWeights&) const = default;
};

/// Per-slice user-count means plus the VR demand profile of one traffic level.
struct TrafficLevel {
  std::string name;
  std::vector<double> user_means;      // one per slice
  double vr_interarrival_ms = 11.1;
  double vr_size_bytes = 43730.0;

  bool operator==(const TrafficLevel&) const = default;
};

struct A2cSettings {
  double gamma = 0.9;
  std::size_t batch_size = 200;
  double entropy_coef = 0.01;
  double actor_lr = 0.005;
  double critic_lr = 0.01;
  std::vector<int> hidden = {64, 64};

  bool operator==(const A2cSettings&) const = default;
};

struct SacSettings {
  double gamma = 0.9;
  std::size_t minibatch = 64;
  std::size_t buffer_capacity = 20000;
  std::size_t update_every = 4;
  double actor_lr = 0.001;
  double critic_lr = 0.005;
  double temperature_lr = 0.005;
  double initial_temperature = 0.2;
  double target_entropy_scale = 0.5;  // target entropy = scale * ln A
  double polyak = 0.01;
  double lambda_lr = 0.002;
  std::vector<int> hidden = {64, 64};

  bool operator==(const SacSettings&) const = default;
};

struct CostModelParams {
  int estimators = 100;
  double learning_rate = 0.5;
  int max_depth = 9;
  int min_child_weight = 14;
  double alpha = 10.0;  // L2 penalty on leaf values
  double subsample = 1.0;

  bool operator==(const CostModelParams&) const = default;
};

struct HarnessSettings {
  std::size_t pretrain_steps = 20000;
  std::size_t test_steps = 2000;
  /// Pre-training resamples user populations every this many windows.
  std::size_t episode_windows = 200;

  bool operator==(const HarnessSettings&) const = default;
};

struct ExperimentConfig {
  std::vector<SliceSpec> slices;
  SimParams sim;
  RewardWeights reward;
  A2cSettings a2c;
  SacSettings sac;
  CostModelParams cost;
  HarnessSettings harness;
  std::map<std::string, TrafficLevel> levels;

  std::size_t slice_count() const { return slices.size(); }
  std::vector<std::size_t> constrained_slices() const;
  const TrafficLevel& level(const std::string& name) const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Builds a validated config from parsed key-values. Missing keys take the
/// documented defaults (three slices: video, VoNR, VR gaming).
ExperimentConfig config_from_kv(const KeyValueFile& kv);
KeyValueFile config_to_kv(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// Throws ValidationError naming the first violated invariant.
void validate(const ExperimentConfig& config);

/// Reference three-slice configuration with the default traffic levels.
ExperimentConfig default_config();

/// Per-slice bandwidth percentages; each a multiple of the allocation step.
struct AllocationAction {
  Eigen::VectorXi shares;

  int total() const { return shares.sum(); }
  bool operator==(const AllocationAction& other) const { return shares == other.shares; }
};

/// All admissible allocations in lexicographic order of their share tuples.
class ActionSpace {
 public:
  ActionSpace() = default;
  ActionSpace(std::size_t slices, int step, bool allow_underallocation);

  std::size_t size() const { return static_cast<std::size_t>(shares_.rows()); }
  std::size_t slices() const { return static_cast<std::size_t>(shares_.cols()); }
  int step() const { return step_; }

  AllocationAction action(std::size_t index) const { return {shares_.row(static_cast<Eigen::Index>(index)).transpose()}; }
  /// Row `i` holds the shares of action `i`.
  const Eigen::MatrixXi& shares() const { return shares_; }

  /// Index of `action`, or size() when it is not a member.
  std::size_t index_of(const AllocationAction& action) const;

 private:
  Eigen::MatrixXi shares_;
  int step_ = 10;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

ActionSpace enumerate_action_space(std::size_t slices, int step, bool allow_underallocation);

/// Closed-form count: C(n + S - 1, S - 1) for exact sums, C(n + S, S) with slack,
/// where n = 100 / step.
std::size_t action_space_size(std::size_t slices, int step, bool allow_underallocation);

}  // namespace safeslice
