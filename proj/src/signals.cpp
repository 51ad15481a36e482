#include "safeslice/signals.hpp"

#include "safeslice/errors.hpp"

namespace safeslice {

double compute_reward(const RewardWeights& weights, std::span<const SliceSpec> slices,
                      const Eigen::Ref<const Eigen::VectorXd>& shares,
                      const Eigen::Ref<const Eigen::VectorXd>& latency_ms) {
  const auto n = static_cast<Eigen::Index>(slices.size());
  if (shares.size() != n || latency_ms.size() != n) throw ShapeError("reward inputs must have one entry per slice");
  double latency_term = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto& sla = slices[static_cast<std::size_t>(s)].sla;
    latency_term += slices[static_cast<std::size_t>(s)].priority_weight *
                    sigmoid_latency_term(latency_ms[s], sla.sigmoid_steepness, sla.sigmoid_inflection_ms);
  }
  return weights.resource * (1.0 - shares.sum() / 100.0) + weights.latency * latency_term;
}

double compute_reward(const RewardWeights& weights, std::span<const SliceSpec> slices,
                      const Eigen::Ref<const Eigen::VectorXi>& shares,
                      const Eigen::Ref<const Eigen::VectorXd>& latency_ms) {
  const Eigen::VectorXd continuous = shares.cast<double>();
  return compute_reward(weights, slices, continuous, latency_ms);
}

double resource_reward(const RewardWeights& weights, const Eigen::Ref<const Eigen::VectorXi>& shares) {
  return weights.resource * (1.0 - shares.sum() / 100.0);
}

}  // namespace safeslice
