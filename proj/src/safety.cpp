#include "safeslice/safety.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "safeslice/errors.hpp"
#include "safeslice/kv.hpp"

namespace safeslice {

Eigen::MatrixXd CostPredictor::predict_all(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                                           const ActionSpace& space) {
  Eigen::MatrixXd out;
  for (std::size_t a = 0; a < space.size(); ++a) {
    const auto p = predict(kappa, previous_cost, space.action(a));
    if (a == 0) out.resize(static_cast<Eigen::Index>(space.size()), p.size());
    out.row(static_cast<Eigen::Index>(a)) = p.transpose();
  }
  return out;
}

LearnedCostPredictor::LearnedCostPredictor(std::shared_ptr<const CostModelSet> models, std::vector<std::size_t> constrained)
    : models_(std::move(models)), constrained_(std::move(constrained)) {
  if (!models_) throw ValidationError("learned predictor needs a cost model");
  for (auto s : constrained_) {
    if (s >= models_->models.size()) throw ValidationError("cost model has no entry for slice " + std::to_string(s + 1));
  }
}

Eigen::VectorXd LearnedCostPredictor::predict(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                                              const AllocationAction& action) {
  const auto features = cost_features(kappa, action.shares, previous_cost);
  Eigen::VectorXd out(static_cast<Eigen::Index>(constrained_.size()));
  for (std::size_t k = 0; k < constrained_.size(); ++k) out[static_cast<Eigen::Index>(k)] = models_->predict(constrained_[k], features);
  return out;
}

PerfectCostPredictor::PerfectCostPredictor(const SlicingEnv& env, std::vector<std::size_t> constrained)
    : env_(env), constrained_(std::move(constrained)) {}

double PerfectCostPredictor::slice_cost(std::size_t slice, int share) {
  if (env_.windows_run() != cached_window_) {
    cache_.clear();
    cached_window_ = env_.windows_run();
  }
  const auto key = std::make_pair(slice, share);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  SlicingEnv copy = env_;
  AllocationAction probe{Eigen::VectorXi::Zero(static_cast<Eigen::Index>(env_.config().slice_count()))};
  probe.shares[static_cast<Eigen::Index>(slice)] = share;
  const auto m = copy.step(probe);
  ++rollouts_;
  return cache_[key] = m.cost_ms[static_cast<Eigen::Index>(slice)];
}

Eigen::VectorXd PerfectCostPredictor::predict(const StateVector&, const Eigen::VectorXd&, const AllocationAction& action) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(constrained_.size()));
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = slice_cost(constrained_[k], action.shares[static_cast<Eigen::Index>(constrained_[k])]);
  }
  return out;
}

Eigen::MatrixXd PerfectCostPredictor::predict_all(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                                                  const ActionSpace& space) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(constrained_.size()));
  for (std::size_t a = 0; a < space.size(); ++a) {
    out.row(static_cast<Eigen::Index>(a)) = predict(kappa, previous_cost, space.action(a)).transpose();
  }
  return out;
}

bool FeasibleActionSet::contains(std::size_t action) const {
  return std::binary_search(members.begin(), members.end(), action);
}

FeasibleActionSet build_feasible_set(const Eigen::Ref<const Eigen::MatrixXd>& predicted,
                                     const Eigen::Ref<const Eigen::VectorXd>& thresholds) {
  if (predicted.cols() != thresholds.size()) throw ShapeError("one threshold per predicted cost column is required");
  FeasibleActionSet set;
  set.predicted = predicted;
  set.thresholds = thresholds;
  for (Eigen::Index a = 0; a < predicted.rows(); ++a) {
    if ((predicted.row(a).transpose().array() <= thresholds.array()).all()) set.members.push_back(static_cast<std::size_t>(a));
  }
  return set;
}

FeasibleActionSet build_feasible_set(CostPredictor& predictor, const StateVector& kappa,
                                     const Eigen::VectorXd& previous_cost, const ActionSpace& space,
                                     const Eigen::VectorXd& thresholds) {
  return build_feasible_set(predictor.predict_all(kappa, previous_cost, space), thresholds);
}

SafetyDecision project_action(std::size_t original, const ActionSpace& space, const FeasibleActionSet& feasible) {
  if (original >= space.size()) throw ShapeError("action index out of range");
  if (static_cast<std::size_t>(feasible.predicted.rows()) != space.size()) {
    throw ShapeError("feasible set was built for a different action space");
  }
  SafetyDecision d;
  d.original = original;
  const auto& shares = space.shares();
  const auto a = static_cast<Eigen::Index>(original);

  if (feasible.contains(original)) {
    d.executed = original;
  } else if (!feasible.empty()) {
    int best = std::numeric_limits<int>::max();
    for (auto m : feasible.members) {
      const int dist = (shares.row(static_cast<Eigen::Index>(m)) - shares.row(a)).squaredNorm();
      if (dist < best) best = dist, d.executed = m;
    }
    d.overridden = true;
  } else {
    const Eigen::VectorXd worst = feasible.predicted.rowwise().maxCoeff();
    const double lowest = worst.minCoeff();
    int best = std::numeric_limits<int>::max();
    for (Eigen::Index i = 0; i < worst.size(); ++i) {
      if (worst[i] != lowest) continue;
      const int dist = (shares.row(i) - shares.row(a)).squaredNorm();
      if (dist < best) best = dist, d.executed = static_cast<std::size_t>(i);
    }
    d.overridden = d.executed != original;
    d.fallback_used = true;
  }
  d.squared_distance = (shares.row(static_cast<Eigen::Index>(d.executed)) - shares.row(a)).squaredNorm();
  d.distance = std::sqrt(static_cast<double>(d.squared_distance));
  d.predicted_cost = feasible.predicted.cols() ? feasible.predicted.row(static_cast<Eigen::Index>(d.executed)).maxCoeff() : 0.0;
  return d;
}

SafetyDecision safe_step(std::size_t proposed, CostPredictor& predictor, const StateVector& kappa,
                         const Eigen::VectorXd& previous_cost, const ActionSpace& space,
                         const Eigen::VectorXd& thresholds) {
  const auto predicted = predictor.predict(kappa, previous_cost, space.action(proposed));
  if (predicted.size() != thresholds.size()) throw ShapeError("one threshold per constrained slice is required");
  if ((predicted.array() <= thresholds.array()).all()) {
    SafetyDecision d;
    d.original = d.executed = proposed;
    d.predicted_cost = predicted.size() ? predicted.maxCoeff() : 0.0;
    return d;
  }
  return project_action(proposed, space, build_feasible_set(predictor, kappa, previous_cost, space, thresholds));
}

SafetyDecision safe_step(const std::function<std::size_t(const StateVector&)>& policy, CostPredictor& predictor,
                         const StateVector& kappa, const Eigen::VectorXd& previous_cost, const ActionSpace& space,
                         const Eigen::VectorXd& thresholds) {
  return safe_step(policy(kappa), predictor, kappa, previous_cost, space, thresholds);
}

void write_decision_log_header(std::ostream& out) {
  out << "step,original_action,executed_action,overridden,fallback,distance,predicted_cost\n";
}

void write_decision(std::ostream& out, std::size_t step, const SafetyDecision& d) {
  out << step << ',' << d.original << ',' << d.executed << ',' << (d.overridden ? 1 : 0) << ','
      << (d.fallback_used ? 1 : 0) << ',' << format_double(d.distance) << ',' << format_double(d.predicted_cost) << '\n';
}

}  // namespace safeslice
