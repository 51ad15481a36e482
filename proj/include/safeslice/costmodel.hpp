#pragma once

// Gradient-boosted regression trees on squared error with L2-penalized
// leaves, used to predict per-slice window cost from
// (kappa, shares, previous cost).

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/rng.hpp"

namespace safeslice {

/// Feature row layout: kappa_1..S, b_1..S (percent), prev_cost_1..S (ms).
Eigen::VectorXd cost_features(const Eigen::Ref<const Eigen::VectorXd>& kappa,
                              const Eigen::Ref<const Eigen::VectorXi>& shares,
                              const Eigen::Ref<const Eigen::VectorXd>& previous_cost);

struct CostSample {
  Eigen::VectorXd features;  // 3S
  Eigen::VectorXd cost;      // S, ms
};

/// Rows of samples plus the traffic level and reward of each window.
struct CostDataset {
  std::size_t slices = 0;
  Eigen::MatrixXd features;  // n x 3S
  Eigen::MatrixXd costs;     // n x S
  Eigen::VectorXd rewards;   // n
  std::vector<std::string> levels;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  CostSample sample(std::size_t row) const;
  CostDataset subset(const std::vector<std::size_t>& rows) const;

  bool operator==(const CostDataset& other) const;
};

/// Header `kappa_1..S,b_1..S,prev_cost_1..S,cost_1..S,level,reward`.
void save_dataset(const CostDataset& data, const std::filesystem::path& path);
/// Accepts files with or without the trailing level and reward columns.
CostDataset load_dataset(const std::filesystem::path& path);

/// Sum of residuals over (count + alpha).
inline double leaf_value(double residual_sum, double count, double alpha) { return residual_sum / (count + alpha); }

/// Flat binary tree; `feature[i] < 0` marks a leaf. Samples with
/// x[feature] < threshold go left.
struct RegressionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  std::size_t node_count() const { return feature.size(); }
  int depth() const;
  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

class GbtEnsemble {
 public:
  GbtEnsemble() = default;

  static GbtEnsemble fit(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                         const CostModelParams& params, std::uint64_t seed);

  /// Clamped to [lower, upper] (default [0, 50] ms).
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// One prediction per row of `x`.
  Eigen::VectorXd predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Unclamped base + shrinkage * sum of the first `trees` trees.
  double predict_raw(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t trees) const;

  double base() const { return base_; }
  double shrinkage() const { return shrinkage_; }
  std::size_t feature_count() const { return features_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  void set_bounds(double lower, double upper) { lower_ = lower, upper_ = upper; }

  /// Builds an ensemble from explicit parts.
  static GbtEnsemble from_parts(double base, double shrinkage, std::size_t features, std::vector<RegressionTree> trees);

  nlohmann::json to_json() const;
  static GbtEnsemble from_json(const nlohmann::json& j);

 private:
  double base_ = 0.0;
  double shrinkage_ = 1.0;
  double lower_ = 0.0;
  double upper_ = 50.0;
  std::size_t features_ = 0;
  std::vector<RegressionTree> trees_;
};

/// One ensemble per slice, trained on the shared feature rows.
struct CostModelSet {
  std::size_t slices = 0;
  std::vector<GbtEnsemble> models;  // index = slice

  double predict(std::size_t slice, const Eigen::Ref<const Eigen::VectorXd>& features) const;

  void save(const std::filesystem::path& path) const;
  static CostModelSet load(const std::filesystem::path& path);
};

CostModelSet train_cost_models(const CostDataset& data, const CostModelParams& params, std::uint64_t seed);

struct FoldMetrics {
  double rmse = 0.0;
  double r2 = 0.0;
  std::size_t rows = 0;
};

struct CvReport {
  std::vector<FoldMetrics> folds;
  FoldMetrics aggregate;  // pooled held-out predictions
};

/// 1 - SS_res / SS_tot. A constant target scores 1 when fit exactly, else 0.
double r_squared(const Eigen::Ref<const Eigen::VectorXd>& truth, const Eigen::Ref<const Eigen::VectorXd>& predicted);
double rmse(const Eigen::Ref<const Eigen::VectorXd>& truth, const Eigen::Ref<const Eigen::VectorXd>& predicted);

/// Seeded shuffle into `folds` near-equal folds; folds run in parallel.
CvReport cross_validate(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                        std::size_t folds, const CostModelParams& params, std::uint64_t seed);

}  // namespace safeslice
