#include "safeslice/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "safeslice/errors.hpp"
#include "safeslice/kv.hpp"

namespace safeslice {

Eigen::VectorXd cost_features(const Eigen::Ref<const Eigen::VectorXd>& kappa, const Eigen::Ref<const Eigen::VectorXi>& shares,
                              const Eigen::Ref<const Eigen::VectorXd>& previous_cost) {
  const auto s = kappa.size();
  if (shares.size() != s || previous_cost.size() != s) throw ShapeError("feature parts need one entry per slice");
  Eigen::VectorXd f(3 * s);
  f << kappa, shares.cast<double>(), previous_cost;
  return f;
}

CostSample CostDataset::sample(std::size_t row) const {
  const auto r = static_cast<Eigen::Index>(row);
  return {features.row(r).transpose(), costs.row(r).transpose()};
}

CostDataset CostDataset::subset(const std::vector<std::size_t>& rows) const {
  CostDataset out;
  out.slices = slices;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.costs.resize(static_cast<Eigen::Index>(rows.size()), costs.cols());
  out.rewards.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(rows[i]);
    const auto dst = static_cast<Eigen::Index>(i);
    out.features.row(dst) = features.row(src);
    out.costs.row(dst) = costs.row(src);
    out.rewards[dst] = rewards.size() ? rewards[src] : 0.0;
    out.levels.push_back(levels.empty() ? std::string() : levels[rows[i]]);
  }
  return out;
}

bool CostDataset::operator==(const CostDataset& other) const {
  return slices == other.slices && features == other.features && costs == other.costs && rewards == other.rewards &&
         levels == other.levels;
}

void save_dataset(const CostDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto s = data.slices;
  std::vector<std::string> header;
  for (const char* prefix : {"kappa_", "b_", "prev_cost_", "cost_"}) {
    for (std::size_t i = 1; i <= s; ++i) header.push_back(prefix + std::to_string(i));
  }
  header.push_back("level");
  header.push_back("reward");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) out << format_double(data.features(row, c)) << ',';
    for (Eigen::Index c = 0; c < data.costs.cols(); ++c) out << format_double(data.costs(row, c)) << ',';
    out << (data.levels.empty() ? "" : data.levels[r]) << ','
        << format_double(data.rewards.size() ? data.rewards[row] : 0.0) << '\n';
  }
}

CostDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing header");
  const auto header = split(trim(line), ',');
  std::size_t cost_columns = 0;
  while (cost_columns < header.size() && header[cost_columns].rfind("cost_", 0) != 0) ++cost_columns;
  const std::size_t s = cost_columns / 3;
  const bool extras = header.size() == 4 * s + 2;
  if (s == 0 || cost_columns != 3 * s || !(header.size() == 4 * s || extras)) {
    throw ParseError(path.string() + ":1: expected kappa/b/prev_cost/cost columns for each slice");
  }
  std::vector<double> feat, cost, reward;
  std::vector<std::string> levels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields");
    }
    auto number = [&](std::size_t i) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed number '" + cells[i] + "'");
      }
    };
    for (std::size_t i = 0; i < 3 * s; ++i) feat.push_back(number(i));
    for (std::size_t i = 3 * s; i < 4 * s; ++i) cost.push_back(number(i));
    levels.push_back(extras ? cells[4 * s] : std::string());
    reward.push_back(extras ? number(4 * s + 1) : 0.0);
  }
  CostDataset data;
  data.slices = s;
  const auto n = static_cast<Eigen::Index>(levels.size());
  data.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      feat.data(), n, static_cast<Eigen::Index>(3 * s));
  data.costs = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      cost.data(), n, static_cast<Eigen::Index>(s));
  data.rewards = Eigen::Map<Eigen::VectorXd>(reward.data(), n);
  data.levels = std::move(levels);
  return data;
}

int RegressionTree::depth() const {
  if (feature.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [node, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (feature[static_cast<std::size_t>(node)] >= 0) {
      stack.emplace_back(left[static_cast<std::size_t>(node)], d + 1);
      stack.emplace_back(right[static_cast<std::size_t>(node)], d + 1);
    }
  }
  return deepest;
}

double RegressionTree::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[feature[node]] < threshold[node] ? left[node] : right[node]);
  }
  return value[node];
}

namespace {

// Exact greedy builder. Each feature keeps the active rows sorted by value;
// a node owns the same [begin, end) segment in every feature's order, and
// splitting stably partitions all segments.
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<std::vector<std::uint32_t>>& sorted,
              const std::vector<char>& active, const Eigen::VectorXd& residual, const CostModelParams& params)
      : x_(x), residual_(residual), params_(params), goes_left_(static_cast<std::size_t>(x.rows()), 0) {
    order_.reserve(sorted.size());
    for (const auto& column : sorted) {
      auto& o = order_.emplace_back();
      o.reserve(column.size());
      for (auto row : column) {
        if (active[row]) o.push_back(row);
      }
    }
  }

  RegressionTree build() {
    const std::size_t n = order_.empty() ? 0 : order_[0].size();
    grow(0, n, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    std::size_t left_count = 0;
  };

  double sum(std::size_t begin, std::size_t end) const {
    double r = 0.0;
    for (std::size_t i = begin; i < end; ++i) r += residual_[order_[0][i]];
    return r;
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const auto n = static_cast<double>(end - begin);
    const double total = sum(begin, end);
    const double alpha = params_.alpha;
    const int node = static_cast<int>(tree_.feature.size());
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(leaf_value(total, n, alpha));

    const std::size_t min_child = static_cast<std::size_t>(std::max(1, params_.min_child_weight));
    if (depth >= params_.max_depth || end - begin < 2 * min_child) return node;

    const double parent = total * total / (n + alpha);
    Split best;
    for (std::size_t f = 0; f < order_.size(); ++f) {
      const auto& o = order_[f];
      const auto column = x_.col(static_cast<Eigen::Index>(f));
      double left_sum = 0.0;
      for (std::size_t i = begin; i + 1 < end; ++i) {
        left_sum += residual_[o[i]];
        const std::size_t left_count = i - begin + 1;
        if (left_count < min_child) continue;
        if (end - begin - left_count < min_child) break;
        const double xv = column[o[i]];
        const double xn = column[o[i + 1]];
        if (!(xv < xn)) continue;
        const double nl = static_cast<double>(left_count);
        const double right_sum = total - left_sum;
        const double gain =
            0.5 * (left_sum * left_sum / (nl + alpha) + right_sum * right_sum / (n - nl + alpha) - parent);
        if (gain > best.gain) {
          double mid = xv + 0.5 * (xn - xv);
          if (!(mid > xv)) mid = xn;
          best = {gain, static_cast<int>(f), mid, left_count};
        }
      }
    }
    if (best.feature < 0) return node;

    const auto& split_order = order_[static_cast<std::size_t>(best.feature)];
    for (std::size_t i = begin; i < end; ++i) goes_left_[split_order[i]] = i < begin + best.left_count;
    for (auto& o : order_) {
      std::stable_partition(o.begin() + static_cast<std::ptrdiff_t>(begin), o.begin() + static_cast<std::ptrdiff_t>(end),
                            [&](std::uint32_t row) { return goes_left_[row] != 0; });
    }
    const std::size_t split = begin + best.left_count;
    const int l = grow(begin, split, depth + 1);
    const int r = grow(split, end, depth + 1);
    const auto k = static_cast<std::size_t>(node);
    tree_.feature[k] = best.feature;
    tree_.threshold[k] = best.threshold;
    tree_.left[k] = l;
    tree_.right[k] = r;
    return node;
  }

  const Eigen::Ref<const Eigen::MatrixXd>& x_;
  const Eigen::VectorXd& residual_;
  const CostModelParams& params_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<char> goes_left_;
  RegressionTree tree_;
};

}  // namespace

GbtEnsemble GbtEnsemble::fit(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                             const CostModelParams& params, std::uint64_t seed) {
  const auto n = x.rows();
  if (n == 0) throw ValidationError("cannot fit a cost model on an empty dataset");
  if (y.size() != n) throw ShapeError("one target per feature row is required");
  if (x.cols() == 0) throw ShapeError("cost model needs at least one feature");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("cost-model features and targets must be finite");
  if (params.estimators < 0 || params.max_depth < 0 || !(params.alpha >= 0) || !(params.subsample > 0) ||
      params.subsample > 1) {
    throw ValidationError("invalid cost-model hyperparameters");
  }

  GbtEnsemble model;
  model.base_ = y.mean();
  model.shrinkage_ = params.learning_rate;
  model.features_ = static_cast<std::size_t>(x.cols());

  std::vector<std::vector<std::uint32_t>> sorted(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& o = sorted[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), 0u);
    const auto column = x.col(f);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return column[a] < column[b]; });
  }

  Rng rng(seed);
  Eigen::VectorXd prediction = Eigen::VectorXd::Constant(n, model.base_);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0u);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(params.subsample * static_cast<double>(n))));

  for (int t = 0; t < params.estimators; ++t) {
    if (keep < static_cast<std::size_t>(n)) {
      std::shuffle(rows.begin(), rows.end(), rng);
      std::fill(active.begin(), active.end(), 0);
      for (std::size_t i = 0; i < keep; ++i) active[rows[i]] = 1;
    }
    const Eigen::VectorXd residual = y - prediction;
    auto tree = TreeBuilder(x, sorted, active, residual, params).build();
    for (Eigen::Index i = 0; i < n; ++i) prediction[i] += model.shrinkage_ * tree.evaluate(x.row(i).transpose());
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

double GbtEnsemble::predict_raw(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t trees) const {
  if (static_cast<std::size_t>(x.size()) != features_) {
    throw ShapeError("cost model expects " + std::to_string(features_) + " features, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  const auto count = std::min(trees, trees_.size());
  for (std::size_t t = 0; t < count; ++t) sum += trees_[t].evaluate(x);
  return base_ + shrinkage_ * sum;
}

double GbtEnsemble::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return std::clamp(predict_raw(x, trees_.size()), lower_, upper_);
}

Eigen::VectorXd GbtEnsemble::predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(Eigen::VectorXd(x.row(i).transpose()));
  return out;
}

GbtEnsemble GbtEnsemble::from_parts(double base, double shrinkage, std::size_t features,
                                    std::vector<RegressionTree> trees) {
  GbtEnsemble m;
  m.base_ = base;
  m.shrinkage_ = shrinkage;
  m.features_ = features;
  m.trees_ = std::move(trees);
  return m;
}

nlohmann::json GbtEnsemble::to_json() const {
  nlohmann::json j;
  j["format"] = "safeslice-gbt";
  j["version"] = 1;
  j["base"] = base_;
  j["shrinkage"] = shrinkage_;
  j["bounds"] = {lower_, upper_};
  j["features"] = features_;
  j["trees"] = nlohmann::json::array();
  for (const auto& t : trees_) {
    j["trees"].push_back(
        {{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left}, {"right", t.right}, {"value", t.value}});
  }
  return j;
}

GbtEnsemble GbtEnsemble::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "safeslice-gbt" || j.value("version", 0) != 1) {
    throw ParseError("not a version-1 safeslice-gbt model");
  }
  GbtEnsemble m;
  m.base_ = j.at("base").get<double>();
  m.shrinkage_ = j.at("shrinkage").get<double>();
  m.lower_ = j.at("bounds").at(0).get<double>();
  m.upper_ = j.at("bounds").at(1).get<double>();
  m.features_ = j.at("features").get<std::size_t>();
  for (const auto& jt : j.at("trees")) {
    RegressionTree t;
    t.feature = jt.at("feature").get<std::vector<int>>();
    t.threshold = jt.at("threshold").get<std::vector<double>>();
    t.left = jt.at("left").get<std::vector<int>>();
    t.right = jt.at("right").get<std::vector<int>>();
    t.value = jt.at("value").get<std::vector<double>>();
    const auto k = t.feature.size();
    if (k == 0 || t.threshold.size() != k || t.left.size() != k || t.right.size() != k || t.value.size() != k) {
      throw ParseError("tree arrays have inconsistent lengths");
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (t.feature[i] >= static_cast<int>(m.features_)) throw ParseError("tree splits on an unknown feature");
      if (t.feature[i] >= 0 && (t.left[i] <= static_cast<int>(i) || t.right[i] <= static_cast<int>(i) ||
                                t.left[i] >= static_cast<int>(k) || t.right[i] >= static_cast<int>(k))) {
        throw ParseError("tree child index out of range");
      }
    }
    m.trees_.push_back(std::move(t));
  }
  return m;
}

double CostModelSet::predict(std::size_t slice, const Eigen::Ref<const Eigen::VectorXd>& features) const {
  if (slice >= models.size()) throw ShapeError("no cost model for slice " + std::to_string(slice + 1));
  return models[slice].predict(features);
}

void CostModelSet::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "safeslice-cost-models";
  j["version"] = 1;
  j["slices"] = slices;
  j["models"] = nlohmann::json::array();
  for (const auto& m : models) j["models"].push_back(m.to_json());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

CostModelSet CostModelSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cost model not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "safeslice-cost-models" || j.value("version", 0) != 1) {
    throw ParseError(path.string() + ": not a version-1 cost model file");
  }
  CostModelSet set;
  set.slices = j.at("slices").get<std::size_t>();
  for (const auto& m : j.at("models")) set.models.push_back(GbtEnsemble::from_json(m));
  if (set.models.size() != set.slices) throw ParseError(path.string() + ": expected one model per slice");
  return set;
}

CostModelSet train_cost_models(const CostDataset& data, const CostModelParams& params, std::uint64_t seed) {
  CostModelSet set;
  set.slices = data.slices;
  set.models.resize(data.slices);
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(data.slices);
  for (std::size_t s = 0; s < data.slices; ++s) {
    workers.emplace_back([&, s] {
      try {
        set.models[s] = GbtEnsemble::fit(data.features, data.costs.col(static_cast<Eigen::Index>(s)), params,
                                         derive_seed(seed, {s}));
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return set;
}

double r_squared(const Eigen::Ref<const Eigen::VectorXd>& truth, const Eigen::Ref<const Eigen::VectorXd>& predicted) {
  const double ss_res = (truth - predicted).squaredNorm();
  const double ss_tot = (truth.array() - truth.mean()).matrix().squaredNorm();
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

double rmse(const Eigen::Ref<const Eigen::VectorXd>& truth, const Eigen::Ref<const Eigen::VectorXd>& predicted) {
  if (truth.size() == 0) return 0.0;
  return std::sqrt((truth - predicted).squaredNorm() / static_cast<double>(truth.size()));
}

CvReport cross_validate(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                        std::size_t folds, const CostModelParams& params, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (n < folds) throw ValidationError("dataset has fewer rows than folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::size_t> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = i * folds / n;

  Eigen::VectorXd held_out(static_cast<Eigen::Index>(n));
  CvReport report;
  report.folds.resize(folds);
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    workers.emplace_back([&, k] {
      try {
        std::vector<Eigen::Index> train, test;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == k ? test : train).push_back(static_cast<Eigen::Index>(i));
        const Eigen::MatrixXd xt = x(train, Eigen::all);
        const Eigen::VectorXd yt = y(train);
        const auto model = GbtEnsemble::fit(xt, yt, params, derive_seed(seed, {k}));
        const Eigen::VectorXd truth = y(test);
        const Eigen::VectorXd pred = model.predict_rows(x(test, Eigen::all));
        for (std::size_t i = 0; i < test.size(); ++i) held_out[test[i]] = pred[static_cast<Eigen::Index>(i)];
        report.folds[k] = {rmse(truth, pred), r_squared(truth, pred), test.size()};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.aggregate = {rmse(y, held_out), r_squared(y, held_out), n};
  return report;
}

}  // namespace safeslice
