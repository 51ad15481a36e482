#include "safeslice/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "safeslice/errors.hpp"
#include "safeslice/signals.hpp"
#include "safeslice/simenv.hpp"
#include "safeslice/svg.hpp"

namespace safeslice {

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::SafeSlice: return "safeslice";
    case AgentKind::UnconstrainedA2C: return "a2c";
    case AgentKind::SacL: return "sacl";
    case AgentKind::SafeSlicePerfectPredictor: return "safeslice-perfect";
  }
  return "safeslice";
}

AgentKind parse_agent_kind(const std::string& text) {
  for (auto k : {AgentKind::SafeSlice, AgentKind::UnconstrainedA2C, AgentKind::SacL, AgentKind::SafeSlicePerfectPredictor}) {
    if (text == to_string(k)) return k;
  }
  throw ParseError("unknown agent '" + text + "' (expected safeslice, a2c, sacl or safeslice-perfect)");
}

bool uses_safety_layer(AgentKind kind) {
  return kind == AgentKind::SafeSlice || kind == AgentKind::SafeSlicePerfectPredictor;
}

bool uses_learned_cost_model(AgentKind kind) { return kind == AgentKind::SafeSlice; }

bool Scenario::paired_with(const Scenario& o) const {
  return category == o.category && train_level == o.train_level && test_level == o.test_level &&
         train_threshold_ms == o.train_threshold_ms && test_threshold_ms == o.test_threshold_ms &&
         pretrain_steps == o.pretrain_steps && test_steps == o.test_steps && seed == o.seed;
}

Scenario scenario_from_kv(const KeyValueFile& kv, const ExperimentConfig& config) {
  for (const auto& key : kv.keys_with_prefix("")) {
    if (key.rfind("scenario.", 0) != 0) continue;
    static const std::set<std::string> known{"scenario.category",          "scenario.train_level",
                                             "scenario.test_level",        "scenario.train_threshold_ms",
                                             "scenario.test_threshold_ms", "scenario.agent",
                                             "scenario.pretrain_steps",    "scenario.test_steps",
                                             "scenario.seed",              "scenario.cost_model"};
    if (!known.count(key)) throw ParseError("unknown scenario key '" + key + "'");
  }
  Scenario s;
  s.pretrain_steps = config.harness.pretrain_steps;
  s.test_steps = config.harness.test_steps;
  s.seed = config.sim.seed;
  s.category = static_cast<int>(kv.get_int("scenario.category", s.category));
  s.train_level = kv.get_string("scenario.train_level", s.train_level);
  s.test_level = kv.get_string("scenario.test_level", s.train_level);
  s.train_threshold_ms = kv.get_double("scenario.train_threshold_ms", s.train_threshold_ms);
  s.test_threshold_ms = kv.get_double("scenario.test_threshold_ms", s.train_threshold_ms);
  s.agent = parse_agent_kind(kv.get_string("scenario.agent", to_string(s.agent)));
  s.pretrain_steps = kv.get_uint("scenario.pretrain_steps", s.pretrain_steps);
  s.test_steps = kv.get_uint("scenario.test_steps", s.test_steps);
  s.seed = kv.get_uint("scenario.seed", s.seed);
  s.cost_model = kv.get_string("scenario.cost_model", "");
  return s;
}

KeyValueFile scenario_to_kv(const Scenario& s) {
  KeyValueFile kv;
  kv.set("scenario.category", std::to_string(s.category));
  kv.set("scenario.train_level", s.train_level);
  kv.set("scenario.test_level", s.test_level);
  kv.set("scenario.train_threshold_ms", format_double(s.train_threshold_ms));
  kv.set("scenario.test_threshold_ms", format_double(s.test_threshold_ms));
  kv.set("scenario.agent", to_string(s.agent));
  kv.set("scenario.pretrain_steps", std::to_string(s.pretrain_steps));
  kv.set("scenario.test_steps", std::to_string(s.test_steps));
  kv.set("scenario.seed", std::to_string(s.seed));
  if (!s.cost_model.empty()) kv.set("scenario.cost_model", s.cost_model.string());
  return kv;
}

Scenario load_scenario(const std::filesystem::path& path, const ExperimentConfig& config) {
  return scenario_from_kv(KeyValueFile::load(path), config);
}

void validate_scenario(const Scenario& s, const ExperimentConfig& config) {
  if (s.category < 1 || s.category > 4) throw ValidationError("scenario.category must be 1, 2, 3 or 4");
  if (!config.levels.count(s.train_level)) throw ValidationError("unknown train level '" + s.train_level + "'");
  if (!config.levels.count(s.test_level)) throw ValidationError("unknown test level '" + s.test_level + "'");
  if (!(s.train_threshold_ms > 0) || !(s.test_threshold_ms > 0)) throw ValidationError("thresholds must be positive");
  if (s.test_steps == 0) throw ValidationError("scenario.test_steps must be positive");
  if (config.constrained_slices().empty()) throw ValidationError("no slice is marked constrained");

  const bool same_traffic = config.level(s.train_level) == config.level(s.test_level) || s.train_level == s.test_level;
  const bool same_threshold = s.train_threshold_ms == s.test_threshold_ms;
  const bool stricter = s.test_threshold_ms < s.train_threshold_ms;
  const std::string where = "category " + std::to_string(s.category) + ": ";
  switch (s.category) {
    case 1:
      if (!same_traffic || !same_threshold) throw ValidationError(where + "test traffic and threshold must match training");
      break;
    case 2:
      if (!same_traffic || !stricter) throw ValidationError(where + "same traffic with a stricter test threshold is required");
      break;
    case 3:
      if (same_traffic || !same_threshold) throw ValidationError(where + "different traffic with the same threshold is required");
      break;
    case 4:
      if (same_traffic || !stricter) throw ValidationError(where + "different traffic and a stricter threshold are required");
      break;
  }
}

ExperimentConfig with_constrained_threshold(const ExperimentConfig& config, double threshold_ms) {
  auto c = config;
  for (auto& slice : c.slices) {
    if (!slice.constrained) continue;
    slice.sla.cumulative_threshold_ms = threshold_ms;
    slice.sla.instantaneous_threshold_ms = threshold_ms;
    slice.sla.sigmoid_inflection_ms = threshold_ms;
  }
  return c;
}

std::uint64_t pretrain_env_seed(std::uint64_t seed) { return derive_seed(seed, {0x7072657472ULL}); }
std::uint64_t test_env_seed(std::uint64_t seed) { return derive_seed(seed, {0x74657374ULL}); }
std::uint64_t agent_seed(std::uint64_t seed) { return derive_seed(seed, {0x6167656e74ULL}); }

namespace {

ActionSpace space_of(const ExperimentConfig& c) {
  return ActionSpace(c.slice_count(), c.sim.allocation_step, c.sim.allow_underallocation);
}

Eigen::VectorXd constrained_thresholds(const ExperimentConfig& c) {
  const auto idx = c.constrained_slices();
  Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) t[static_cast<Eigen::Index>(k)] = c.slices[idx[k]].sla.instantaneous_threshold_ms;
  return t;
}

template <typename Step>
void pretrain_loop(const ExperimentConfig& config, const TrafficLevel& level, std::size_t steps, std::uint64_t seed,
                   Step&& step) {
  auto shared = std::make_shared<const ExperimentConfig>(config);
  const auto space = space_of(config);
  SlicingEnv env(shared, level, pretrain_env_seed(seed));
  const auto episode = config.harness.episode_windows;
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0 && episode > 0 && t % episode == 0) env.resample_population();
    step(env, space);
  }
}

}  // namespace

A2cAgent pretrain_a2c(const ExperimentConfig& config, const TrafficLevel& level, std::size_t steps, std::uint64_t seed) {
  A2cAgent agent(config.slice_count(), space_of(config).size(), config.a2c, agent_seed(seed));
  pretrain_loop(config, level, steps, seed, [&](SlicingEnv& env, const ActionSpace& space) {
    const StateVector state = env.state();
    const auto a = agent.select_action(state, SelectionMode::Sample);
    const auto m = env.step(space.action(a));
    agent.observe({state, a, m.reward, m.cost_ms, m.next_state, false});
  });
  return agent;
}

SacLagrangianAgent pretrain_sacl(const ExperimentConfig& config, const TrafficLevel& level, std::size_t steps,
                                 std::uint64_t seed) {
  SacLagrangianAgent agent(config.slice_count(), space_of(config).size(), config.constrained_slices(),
                           constrained_thresholds(config), config.sac, agent_seed(seed));
  pretrain_loop(config, level, steps, seed, [&](SlicingEnv& env, const ActionSpace& space) {
    const StateVector state = env.state();
    const auto a = agent.select_action(state, SelectionMode::Sample);
    const auto action = space.action(a);
    const auto m = env.step(action);
    agent.observe({state, a, resource_reward(config.reward, action.shares), m.cost_ms, m.next_state, false});
  });
  return agent;
}

PretrainedAgents pretrain_for(const Scenario& s, const ExperimentConfig& config, AgentKind kind) {
  const auto train_cfg = with_constrained_threshold(config, s.train_threshold_ms);
  const auto& level = config.level(s.train_level);
  PretrainedAgents out;
  if (kind == AgentKind::SacL) {
    out.sacl = pretrain_sacl(train_cfg, level, s.pretrain_steps, s.seed);
  } else {
    out.a2c = pretrain_a2c(train_cfg, level, s.pretrain_steps, s.seed);
  }
  return out;
}

RunReport run_scenario(const Scenario& s, const ExperimentConfig& config, const RunOptions& options) {
  validate_scenario(s, config);
  std::shared_ptr<const CostModelSet> models = options.cost_models;
  if (uses_learned_cost_model(s.agent) && !models) {
    if (s.cost_model.empty()) throw ValidationError("scenario.cost_model is required for the safeslice agent");
    if (!std::filesystem::exists(s.cost_model)) {
      throw ValidationError("cost model not found: " + s.cost_model.string());
    }
    models = std::make_shared<const CostModelSet>(CostModelSet::load(s.cost_model));
  }
  if (models && models->slices != config.slice_count()) throw ValidationError("cost model was trained for a different slice count");

  PretrainedAgents owned;
  const PretrainedAgents* pre = options.pretrained;
  const bool needs_sac = s.agent == AgentKind::SacL;
  if (!pre || (needs_sac ? !pre->sacl : !pre->a2c)) {
    owned = pretrain_for(s, config, s.agent);
    pre = &owned;
  }

  const auto test_cfg = std::make_shared<const ExperimentConfig>(with_constrained_threshold(config, s.test_threshold_ms));
  const auto space = space_of(*test_cfg);
  const auto constrained = test_cfg->constrained_slices();
  const auto thresholds = constrained_thresholds(*test_cfg);
  SlicingEnv env(test_cfg, config.level(s.test_level), test_env_seed(s.seed));

  std::unique_ptr<CostPredictor> predictor;
  if (s.agent == AgentKind::SafeSlice) predictor = std::make_unique<LearnedCostPredictor>(models, constrained);
  if (s.agent == AgentKind::SafeSlicePerfectPredictor) predictor = std::make_unique<PerfectCostPredictor>(env, constrained);

  std::optional<A2cAgent> a2c;
  std::optional<SacLagrangianAgent> sacl;
  if (needs_sac) {
    sacl = *pre->sacl;
    sacl->set_thresholds(thresholds);
  } else {
    a2c = *pre->a2c;
  }

  RunReport report;
  report.scenario = s;
  if (options.decision_log) write_decision_log_header(*options.decision_log);
  for (std::size_t t = 0; t < s.test_steps; ++t) {
    const StateVector state = env.state();
    const Eigen::VectorXd previous = env.previous_cost();
    SafetyDecision decision;
    if (a2c) {
      decision.original = decision.executed = a2c->select_action(state, SelectionMode::Sample);
      if (predictor) decision = safe_step(decision.original, *predictor, state, previous, space, thresholds);
    } else {
      decision.original = decision.executed = sacl->select_action(state, SelectionMode::Sample);
    }
    const auto action = space.action(decision.executed);
    const auto m = env.step(action);
    if (a2c) {
      a2c->observe({state, decision.executed, m.reward, m.cost_ms, m.next_state, false});
    } else {
      sacl->observe({state, decision.executed, resource_reward(test_cfg->reward, action.shares), m.cost_ms,
                     m.next_state, false});
    }
    if (options.decision_log) write_decision(*options.decision_log, t, decision);

    double cost = 0.0;
    bool violated = false;
    for (auto k : constrained) {
      cost = std::max(cost, m.cost_ms[static_cast<Eigen::Index>(k)]);
      violated = violated || m.violations[k];
    }
    report.action.push_back(decision.executed);
    report.cost_ms.push_back(cost);
    report.violation.push_back(violated);
    report.consumption.push_back(m.consumed);
    report.reward.push_back(m.reward);
    report.overridden.push_back(decision.overridden);
    report.fallback.push_back(decision.fallback_used);
  }
  return report;
}

std::vector<double> RunReport::cumulative_average_cost() const {
  std::vector<double> out(cost_ms.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < cost_ms.size(); ++i) {
    sum += cost_ms[i];
    out[i] = sum / static_cast<double>(i + 1);
  }
  return out;
}

std::vector<std::size_t> RunReport::accumulated_violations() const {
  std::vector<std::size_t> out(violation.size());
  std::size_t n = 0;
  for (std::size_t i = 0; i < violation.size(); ++i) out[i] = n += violation[i] ? 1 : 0;
  return out;
}

double RunReport::average_cost() const {
  return cost_ms.empty() ? 0.0 : std::accumulate(cost_ms.begin(), cost_ms.end(), 0.0) / static_cast<double>(cost_ms.size());
}

std::size_t RunReport::total_violations() const {
  return static_cast<std::size_t>(std::count(violation.begin(), violation.end(), 1));
}

double RunReport::violation_rate() const {
  return violation.empty() ? 0.0 : static_cast<double>(total_violations()) / static_cast<double>(violation.size());
}

double RunReport::average_consumption() const {
  return consumption.empty() ? 0.0
                             : std::accumulate(consumption.begin(), consumption.end(), 0.0) /
                                   static_cast<double>(consumption.size());
}

std::size_t RunReport::override_count() const {
  return static_cast<std::size_t>(std::count(overridden.begin(), overridden.end(), 1));
}

std::size_t RunReport::fallback_count() const {
  return static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), 1));
}

double relative_reduction(double baseline, double safeslice) {
  if (baseline == 0.0) return safeslice == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (baseline - safeslice) / baseline;
}

namespace {

struct MetricValues {
  double average_cost, violations, consumption;
};

MetricValues metrics_of(const RunReport& r) {
  return {r.average_cost(), static_cast<double>(r.total_violations()), r.average_consumption()};
}

void push_rows(std::vector<ComparisonRow>& rows, const std::string& baseline, std::optional<std::uint64_t> seed, const MetricValues& b,
               const MetricValues& s) {
  rows.push_back({baseline, seed, "average_cost", b.average_cost, s.average_cost, relative_reduction(b.average_cost, s.average_cost)});
  rows.push_back({baseline, seed, "violations", b.violations, s.violations, relative_reduction(b.violations, s.violations)});
  rows.push_back({baseline, seed, "consumption", b.consumption, s.consumption, relative_reduction(b.consumption, s.consumption)});
}

}  // namespace

std::vector<ComparisonRow> compare(const std::vector<RunReport>& reports) {
  if (reports.size() < 2) throw ValidationError("comparison needs at least two reports");
  std::map<std::uint64_t, const RunReport*> safeslice;
  for (const auto& r : reports) {
    if (r.scenario.agent != AgentKind::SafeSlice) continue;
    if (!safeslice.emplace(r.scenario.seed, &r).second) {
      throw ValidationError("two safeslice reports share seed " + std::to_string(r.scenario.seed));
    }
  }
  if (safeslice.empty()) throw ValidationError("comparison needs a safeslice report");

  std::map<std::string, std::vector<std::pair<MetricValues, MetricValues>>> by_baseline;
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    if (r.scenario.agent == AgentKind::SafeSlice) continue;
    const auto it = safeslice.find(r.scenario.seed);
    if (it == safeslice.end()) {
      throw ValidationError("no safeslice report for seed " + std::to_string(r.scenario.seed) + " (" + report_label(r) + ")");
    }
    if (!r.scenario.paired_with(it->second->scenario) || r.windows() != it->second->windows()) {
      throw ValidationError("report " + report_label(r) + " is not paired with " + report_label(*it->second));
    }
    const auto b = metrics_of(r);
    const auto s = metrics_of(*it->second);
    push_rows(rows, to_string(r.scenario.agent), r.scenario.seed, b, s);
    by_baseline[to_string(r.scenario.agent)].emplace_back(b, s);
  }
  for (const auto& [name, pairs] : by_baseline) {
    MetricValues b{0, 0, 0}, s{0, 0, 0};
    for (const auto& [pb, ps] : pairs) {
      b.average_cost += pb.average_cost, b.violations += pb.violations, b.consumption += pb.consumption;
      s.average_cost += ps.average_cost, s.violations += ps.violations, s.consumption += ps.consumption;
    }
    const double n = static_cast<double>(pairs.size());
    push_rows(rows, name, std::nullopt, {b.average_cost / n, b.violations / n, b.consumption / n},
              {s.average_cost / n, s.violations / n, s.consumption / n});
  }
  return rows;
}

std::string report_label(const RunReport& r) {
  return to_string(r.scenario.agent) + "-seed" + std::to_string(r.scenario.seed);
}

void save_report(const RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "scenario.cfg", std::ios::binary);
    out << scenario_to_kv(r.scenario).dump();
  }
  {
    std::ofstream out(dir / "windows.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / "windows.csv").string());
    out << "window,action,cost_ms,violation,consumption,reward,overridden,fallback\n";
    for (std::size_t i = 0; i < r.windows(); ++i) {
      out << i << ',' << r.action[i] << ',' << format_double(r.cost_ms[i]) << ',' << int(r.violation[i]) << ','
          << format_double(r.consumption[i]) << ',' << format_double(r.reward[i]) << ',' << int(r.overridden[i]) << ','
          << int(r.fallback[i]) << '\n';
    }
  }
  std::ofstream out(dir / "summary.csv", std::ios::binary);
  out << "metric,value\n";
  out << "windows," << r.windows() << '\n';
  out << "average_cost_ms," << format_double(r.average_cost()) << '\n';
  out << "violations," << r.total_violations() << '\n';
  out << "violation_rate," << format_double(r.violation_rate()) << '\n';
  out << "average_consumption," << format_double(r.average_consumption()) << '\n';
  out << "overrides," << r.override_count() << '\n';
  out << "fallbacks," << r.fallback_count() << '\n';
}

RunReport load_report(const std::filesystem::path& dir) {
  RunReport r;
  r.scenario = scenario_from_kv(KeyValueFile::load(dir / "scenario.cfg"), default_config());
  const auto path = dir / "windows.csv";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "window,action,cost_ms,violation,consumption,reward,overridden,fallback") {
    throw ParseError(path.string() + ":1: unexpected header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    try {
      if (f.size() != 8) throw std::invalid_argument("field count");
      r.action.push_back(std::stoull(f[1]));
      r.cost_ms.push_back(std::stod(f[2]));
      r.violation.push_back(static_cast<char>(std::stoi(f[3])));
      r.consumption.push_back(std::stod(f[4]));
      r.reward.push_back(std::stod(f[5]));
      r.overridden.push_back(static_cast<char>(std::stoi(f[6])));
      r.fallback.push_back(static_cast<char>(std::stoi(f[7])));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  return r;
}

std::vector<RunReport> load_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("reports directory not found: " + dir.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "windows.csv")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunReport> out;
  for (const auto& d : dirs) out.push_back(load_report(d));
  return out;
}

namespace {

std::vector<double> running_mean(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (sum += v[i]) / static_cast<double>(i + 1);
  return out;
}

struct MetricSeries {
  std::string file;
  std::string title;
  std::string y_label;
  std::vector<std::vector<double>> columns;
};

std::vector<MetricSeries> metric_series(const std::vector<RunReport>& reports, bool smoothed_consumption) {
  std::vector<MetricSeries> m{{"cumulative_cost", "Cumulative average latency of the constrained slice", "ms", {}},
                              {"violations", "Accumulated instantaneous violations", "count", {}},
                              {"consumption", smoothed_consumption ? "Resource consumption (running mean)"
                                                                   : "Resource consumption",
                               "fraction of bandwidth", {}}};
  for (const auto& r : reports) {
    m[0].columns.push_back(r.cumulative_average_cost());
    const auto acc = r.accumulated_violations();
    m[1].columns.emplace_back(acc.begin(), acc.end());
    m[2].columns.push_back(smoothed_consumption ? running_mean(r.consumption) : r.consumption);
  }
  return m;
}

}  // namespace

std::vector<std::filesystem::path> write_metric_csvs(const std::vector<RunReport>& reports,
                                                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& m : metric_series(reports, false)) {
    const auto path = dir / (m.file + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "window";
    for (const auto& r : reports) out << ',' << report_label(r);
    out << '\n';
    std::size_t rows = 0;
    for (const auto& c : m.columns) rows = std::max(rows, c.size());
    for (std::size_t i = 0; i < rows; ++i) {
      out << i;
      for (const auto& c : m.columns) out << ',' << (i < c.size() ? format_double(c[i]) : std::string());
      out << '\n';
    }
    written.push_back(path);
  }
  return written;
}

std::vector<std::filesystem::path> write_metric_charts(const std::vector<RunReport>& reports,
                                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& m : metric_series(reports, true)) {
    std::vector<Series> series;
    for (std::size_t i = 0; i < reports.size(); ++i) series.push_back({report_label(reports[i]), m.columns[i]});
    ChartSpec spec;
    spec.title = m.title;
    spec.y_label = m.y_label;
    const auto path = dir / (m.file + ".svg");
    write_line_chart(path, spec, series);
    written.push_back(path);
  }
  return written;
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "baseline,seed,metric,baseline_value,safeslice_value,reduction_pct\n";
  for (const auto& r : rows) {
    out << r.baseline << ',' << (r.seed ? std::to_string(*r.seed) : std::string("mean")) << ',' << r.metric << ','
        << format_double(r.baseline_value) << ',' << format_double(r.safeslice_value) << ','
        << format_double(r.reduction_pct) << '\n';
  }
}

}  // namespace safeslice
