#pragma once

// Safety layer: predicted-cost checks, feasible-set construction and
// nearest-feasible projection of the policy's allocation.

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/costmodel.hpp"
#include "safeslice/simenv.hpp"

namespace safeslice {

/// Predicted window cost (ms) of every constrained slice, in the order of
/// ExperimentConfig::constrained_slices().
class CostPredictor {
 public:
  virtual ~CostPredictor() = default;

  virtual Eigen::VectorXd predict(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                                  const AllocationAction& action) = 0;

  /// Row `a` holds the prediction for action `a` of `space`.
  virtual Eigen::MatrixXd predict_all(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                                      const ActionSpace& space);
};

class LearnedCostPredictor : public CostPredictor {
 public:
  LearnedCostPredictor(std::shared_ptr<const CostModelSet> models, std::vector<std::size_t> constrained);

  Eigen::VectorXd predict(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                          const AllocationAction& action) override;

 private:
  std::shared_ptr<const CostModelSet> models_;
  std::vector<std::size_t> constrained_;
};

/// Ground truth by lookahead: each candidate runs one window on a copy of
/// the live environment, so it sees exactly the traffic the real step will.
class PerfectCostPredictor : public CostPredictor {
 public:
  PerfectCostPredictor(const SlicingEnv& env, std::vector<std::size_t> constrained);

  Eigen::VectorXd predict(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                          const AllocationAction& action) override;
  Eigen::MatrixXd predict_all(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                              const ActionSpace& space) override;

  std::size_t rollouts() const { return rollouts_; }

 private:
  double slice_cost(std::size_t slice, int share);

  const SlicingEnv& env_;
  std::vector<std::size_t> constrained_;
  std::size_t cached_window_ = static_cast<std::size_t>(-1);
  // Slice queues evolve independently, so a slice's cost depends only on
  // its own share: cache per (slice, share) for the current window.
  std::map<std::pair<std::size_t, int>, double> cache_;
  std::size_t rollouts_ = 0;
};

class FunctionCostPredictor : public CostPredictor {
 public:
  using Function = std::function<Eigen::VectorXd(const StateVector&, const Eigen::VectorXd&, const AllocationAction&)>;
  explicit FunctionCostPredictor(Function f) : f_(std::move(f)) {}

  Eigen::VectorXd predict(const StateVector& kappa, const Eigen::VectorXd& previous_cost,
                          const AllocationAction& action) override {
    return f_(kappa, previous_cost, action);
  }

 private:
  Function f_;
};

struct FeasibleActionSet {
  std::vector<std::size_t> members;  // ascending action indices
  Eigen::MatrixXd predicted;         // A x K
  Eigen::VectorXd thresholds;        // K

  bool empty() const { return members.empty(); }
  bool contains(std::size_t action) const;
};

struct SafetyDecision {
  std::size_t original = 0;
  std::size_t executed = 0;
  bool overridden = false;
  bool fallback_used = false;
  int squared_distance = 0;
  double distance = 0.0;
  /// Largest predicted constrained cost of the executed action (ms).
  double predicted_cost = 0.0;
};

/// Actions whose every predicted constrained cost is <= its threshold.
FeasibleActionSet build_feasible_set(const Eigen::Ref<const Eigen::MatrixXd>& predicted,
                                     const Eigen::Ref<const Eigen::VectorXd>& thresholds);
FeasibleActionSet build_feasible_set(CostPredictor& predictor, const StateVector& kappa,
                                     const Eigen::VectorXd& previous_cost, const ActionSpace& space,
                                     const Eigen::VectorXd& thresholds);

/// Nearest feasible action by squared Euclidean distance of share vectors,
/// lowest index on ties. An empty set falls back to the action whose largest
/// predicted constrained cost is smallest, nearest to the original and then
/// lowest index on ties.
SafetyDecision project_action(std::size_t original, const ActionSpace& space, const FeasibleActionSet& feasible);

/// Checks the proposed action and projects only when a threshold is
/// predicted to be exceeded.
SafetyDecision safe_step(std::size_t proposed, CostPredictor& predictor, const StateVector& kappa,
                         const Eigen::VectorXd& previous_cost, const ActionSpace& space,
                         const Eigen::VectorXd& thresholds);

SafetyDecision safe_step(const std::function<std::size_t(const StateVector&)>& policy, CostPredictor& predictor,
                         const StateVector& kappa, const Eigen::VectorXd& previous_cost, const ActionSpace& space,
                         const Eigen::VectorXd& thresholds);

void write_decision_log_header(std::ostream& out);
void write_decision(std::ostream& out, std::size_t step, const SafetyDecision& decision);

}  // namespace safeslice
