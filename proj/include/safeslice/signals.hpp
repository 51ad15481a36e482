#pragma once

// Risk-sensitive multi-objective reward and per-window cost signals.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "safeslice/config.hpp"

namespace safeslice {

/// 1 / (1 + exp(steepness * (latency - inflection))), saturating to {0, 1}.
template <typename Scalar>
Scalar sigmoid_latency_term(Scalar latency_ms, Scalar steepness, Scalar inflection_ms) {
  const Scalar z = steepness * (latency_ms - inflection_ms);
  if (z >= Scalar(0)) {
    const Scalar e = std::exp(-z);  // underflows to 0 for large z
    return e / (Scalar(1) + e);
  }
  return Scalar(1) / (Scalar(1) + std::exp(z));
}

/// Reward of one window:
///   W_u (1 - sum b / 100) + W_l sum_s W_s sigmoid(l_s; c1_s, c2_s)
/// with shares in percent and latencies in ms.
double compute_reward(const RewardWeights& weights, std::span<const SliceSpec> slices,
                      const Eigen::Ref<const Eigen::VectorXi>& shares,
                      const Eigen::Ref<const Eigen::VectorXd>& latency_ms);

/// Continuous-share variant used for finite-difference checks.
double compute_reward(const RewardWeights& weights, std::span<const SliceSpec> slices,
                      const Eigen::Ref<const Eigen::VectorXd>& shares,
                      const Eigen::Ref<const Eigen::VectorXd>& latency_ms);

/// Resource-only part of the reward, W_u (1 - sum b / 100).
double resource_reward(const RewardWeights& weights, const Eigen::Ref<const Eigen::VectorXi>& shares);

/// Per-slice window cost C_{Omega,s} in ms.
struct CostSignal {
  std::size_t window_id = 0;
  Eigen::VectorXd cost_ms;
};

}  // namespace safeslice
