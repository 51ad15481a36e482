#pragma once

#include <limits>

#include "safeslice/safety.hpp"

// Independent brute-force projection: nearest feasible action, lowest index on
// ties; empty set falls back to min over max predicted cost, then nearest,
// then lowest index.
inline std::size_t brute_force_projection(std::size_t original, const safeslice::ActionSpace& space,
                                          const Eigen::MatrixXd& predicted, const Eigen::VectorXd& thresholds) {
  const auto& shares = space.shares();
  const auto a = static_cast<Eigen::Index>(original);
  auto dist = [&](Eigen::Index j) { return (shares.row(j) - shares.row(a)).squaredNorm(); };
  bool any = false;
  std::size_t best = 0;
  int best_d = std::numeric_limits<int>::max();
  for (Eigen::Index j = 0; j < shares.rows(); ++j) {
    bool ok = true;
    for (Eigen::Index k = 0; k < thresholds.size(); ++k) ok = ok && predicted(j, k) <= thresholds[k];
    if (!ok) continue;
    if (j == a) return original;
    any = true;
    if (dist(j) < best_d) best_d = dist(j), best = static_cast<std::size_t>(j);
  }
  if (any) return best;
  double best_c = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < shares.rows(); ++j) {
    const double c = predicted.row(j).maxCoeff();
    if (c < best_c || (c == best_c && dist(j) < best_d)) {
      best_c = c;
      best_d = dist(j);
      best = static_cast<std::size_t>(j);
    }
  }
  return best;
}
