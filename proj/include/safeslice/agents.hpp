#pragma once

// Advantage actor-critic (the policy inside SafeSlice and the unconstrained
// baseline) and a discrete-action SAC-Lagrangian baseline.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/neural.hpp"
#include "safeslice/rng.hpp"

namespace safeslice {

using Network = nn::Mlp<double>;
using Optimizer = nn::Adam<double>;

struct Transition {
  Eigen::VectorXd state;
  std::size_t action = 0;
  double reward = 0.0;
  Eigen::VectorXd cost;  // per slice, ms
  Eigen::VectorXd next_state;
  bool terminal = false;
};

enum class SelectionMode { Sample, Greedy };

/// Index of the largest probability; the lowest index wins ties.
std::size_t greedy_index(const Eigen::Ref<const Eigen::VectorXd>& probabilities);

/// Inverse-CDF draw from a probability vector.
std::size_t sample_index(const Eigen::Ref<const Eigen::VectorXd>& probabilities, Rng& rng);

/// r + gamma V(s') - V(s), with V(s') dropped on terminal transitions.
inline double one_step_advantage(double reward, double gamma, double next_value, double value, bool terminal = false) {
  return reward + (terminal ? 0.0 : gamma * next_value) - value;
}

struct A2cDiagnostics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
};

class A2cAgent {
 public:
  A2cAgent() = default;
  A2cAgent(std::size_t state_dim, std::size_t action_count, const A2cSettings& settings, std::uint64_t seed);

  Eigen::VectorXd policy(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  double value(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  std::size_t select_action(const Eigen::Ref<const Eigen::VectorXd>& state, SelectionMode mode);

  /// Buffers `t`; once a full batch is collected, updates and clears it.
  std::optional<A2cDiagnostics> observe(const Transition& t);

  /// One actor and one critic step on `batch`.
  A2cDiagnostics update(std::span<const Transition> batch);

  const A2cSettings& settings() const { return settings_; }
  std::size_t action_count() const { return static_cast<std::size_t>(actor_.output_size()); }
  Network& actor() { return actor_; }
  Network& critic() { return critic_; }
  const Network& actor() const { return actor_; }
  const Network& critic() const { return critic_; }
  std::size_t pending() const { return rollout_.size(); }

  nlohmann::json to_json() const;
  static A2cAgent from_json(const nlohmann::json& j);

 private:
  A2cSettings settings_;
  Network actor_;
  Network critic_;
  Optimizer actor_opt_;
  Optimizer critic_opt_;
  std::vector<Transition> rollout_;
  Rng rng_;
};

struct SacDiagnostics {
  double critic_loss = 0.0;
  double cost_loss = 0.0;
  double actor_loss = 0.0;
  double entropy = 0.0;
  double temperature = 0.0;
  Eigen::VectorXd lambdas;
};

/// max(0, lambda + lr * (mean_cost - threshold)).
inline double lagrange_step(double lambda, double lr, double mean_cost, double threshold) {
  const double next = lambda + lr * (mean_cost - threshold);
  return next > 0.0 ? next : 0.0;
}

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}
  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::vector<Transition> sample(std::size_t count, Rng& rng) const;
  const std::vector<Transition>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

class SacLagrangianAgent {
 public:
  SacLagrangianAgent() = default;
  /// `constrained` lists slice indices gated by a multiplier; `thresholds`
  /// holds one instantaneous threshold (ms) per entry of `constrained`.
  SacLagrangianAgent(std::size_t state_dim, std::size_t action_count, std::vector<std::size_t> constrained,
                     Eigen::VectorXd thresholds, const SacSettings& settings, std::uint64_t seed);

  Eigen::VectorXd policy(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  std::size_t select_action(const Eigen::Ref<const Eigen::VectorXd>& state, SelectionMode mode);

  /// Stores `t` and runs an update on a replay minibatch when due.
  std::optional<SacDiagnostics> observe(const Transition& t);
  SacDiagnostics update(std::span<const Transition> minibatch);

  const Eigen::VectorXd& lambdas() const { return lambdas_; }
  void set_lambdas(const Eigen::VectorXd& l) { lambdas_ = l; }
  const Eigen::VectorXd& thresholds() const { return thresholds_; }
  void set_thresholds(const Eigen::VectorXd& thresholds);
  double temperature() const { return std::exp(log_temperature_); }
  double target_entropy() const { return target_entropy_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const SacSettings& settings() const { return settings_; }
  std::size_t action_count() const { return static_cast<std::size_t>(actor_.output_size()); }
  const std::vector<std::size_t>& constrained() const { return constrained_; }

  /// Expected immediate cost of every action for constrained slice `k`.
  Eigen::VectorXd predicted_cost(std::size_t k, const Eigen::Ref<const Eigen::VectorXd>& state) const;

  nlohmann::json to_json() const;
  static SacLagrangianAgent from_json(const nlohmann::json& j);

 private:
  SacSettings settings_;
  std::vector<std::size_t> constrained_;
  Eigen::VectorXd thresholds_;
  Eigen::VectorXd lambdas_;
  Network actor_;
  Network q1_, q2_, q1_target_, q2_target_;
  std::vector<Network> cost_critics_;
  Optimizer actor_opt_, q1_opt_, q2_opt_;
  std::vector<Optimizer> cost_opts_;
  double log_temperature_ = 0.0;
  double target_entropy_ = 0.0;
  ReplayBuffer buffer_;
  std::size_t observed_ = 0;
  Rng rng_;
};

}  // namespace safeslice
