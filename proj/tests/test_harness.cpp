#include <doctest.h>

#include <cmath>
#include <memory>

#include "safeslice/errors.hpp"
#include "safeslice/harness.hpp"
#include "test_util.hpp"

using namespace safeslice;

namespace {

RunReport report(AgentKind kind, std::uint64_t seed, std::vector<double> cost, double consumption) {
  RunReport r;
  r.scenario.agent = kind;
  r.scenario.seed = seed;
  r.cost_ms = cost;
  for (double c : cost) {
    r.violation.push_back(c > 10.0);
    r.consumption.push_back(consumption);
    r.reward.push_back(0.5);
    r.action.push_back(0);
    r.overridden.push_back(0);
    r.fallback.push_back(0);
  }
  return r;
}

std::shared_ptr<const CostModelSet> flat_models(double value) {
  auto set = std::make_shared<CostModelSet>();
  set->slices = 3;
  for (int s = 0; s < 3; ++s) set->models.push_back(GbtEnsemble::from_parts(value, 1.0, 9, {}));
  return set;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("violation counting") {
  auto r = report(AgentKind::SafeSlice, 1, {12, 8, 11}, 0.5);
  CHECK(r.accumulated_violations() == std::vector<std::size_t>{1, 1, 2});
  CHECK(r.total_violations() == 2);
  CHECK(r.violation_rate() == doctest::Approx(2.0 / 3.0));
  auto avg = r.cumulative_average_cost();
  CHECK(avg[0] == 12.0);
  CHECK(avg[1] == 10.0);
  CHECK(avg[2] == doctest::Approx(31.0 / 3.0));
  CHECK(r.average_cost() == doctest::Approx(31.0 / 3.0));
}

TEST_CASE("relative reduction") {
  CHECK(std::round(100.0 * relative_reduction(148, 10)) == 9324.0);
  CHECK(std::round(100.0 * relative_reduction(0.9, 0.7007)) == 2214.0);
  CHECK(relative_reduction(5, 5) == 0.0);
  CHECK(relative_reduction(0, 0) == 0.0);
  CHECK(std::isnan(relative_reduction(0, 1)));
}

TEST_CASE("comparison rows") {
  std::vector<RunReport> reports{report(AgentKind::SafeSlice, 1, {5, 5}, 0.7),
                                 report(AgentKind::UnconstrainedA2C, 1, {20, 20}, 0.7),
                                 report(AgentKind::SafeSlice, 2, {5, 5}, 0.7),
                                 report(AgentKind::UnconstrainedA2C, 2, {5, 5}, 0.7)};
  auto rows = compare(reports);
  bool seen = false;
  for (const auto& row : rows) {
    if (row.baseline == to_string(AgentKind::UnconstrainedA2C) && row.seed == 1u && row.metric == "violations") {
      CHECK(row.reduction_pct == 100.0);
      seen = true;
    }
    if (row.seed == 2u) CHECK(row.reduction_pct == 0.0);
    if (row.metric == "consumption") CHECK(row.reduction_pct == 0.0);
  }
  CHECK(seen);
  CHECK_THROWS_AS(compare({reports[1], reports[3]}), ValidationError);
  auto odd = reports[1];
  odd.scenario.test_threshold_ms = 5.0;
  CHECK_THROWS_AS(compare({reports[0], odd}), ValidationError);
}

TEST_CASE("scenario categories are enforced") {
  auto c = default_config();
  Scenario s;
  s.category = 2;
  CHECK_THROWS_AS(validate_scenario(s, c), ValidationError);
  s.test_threshold_ms = 5.0;
  CHECK_NOTHROW(validate_scenario(s, c));
  s.category = 3;
  CHECK_THROWS_AS(validate_scenario(s, c), ValidationError);
  s.test_threshold_ms = 10.0;
  s.test_level = "busy";
  CHECK_NOTHROW(validate_scenario(s, c));
  s.category = 1;
  CHECK_THROWS_AS(validate_scenario(s, c), ValidationError);
}

TEST_CASE("threshold override touches only constrained slices") {
  auto c = with_constrained_threshold(default_config(), 5.0);
  CHECK(c.slices[2].sla.cumulative_threshold_ms == 5.0);
  CHECK(c.slices[2].sla.instantaneous_threshold_ms == 5.0);
  CHECK(c.slices[2].sla.sigmoid_inflection_ms == 5.0);
  CHECK(c.slices[0].sla == default_config().slices[0].sla);
}

TEST_CASE("zero traffic gives zero violations for every agent") {
  auto c = default_config();
  c.levels["idle"] = TrafficLevel{"idle", {0, 0, 0}, 11.1, 43730.0};
  for (auto kind : {AgentKind::SafeSlice, AgentKind::UnconstrainedA2C, AgentKind::SacL,
                    AgentKind::SafeSlicePerfectPredictor}) {
    Scenario s;
    s.agent = kind;
    s.train_level = s.test_level = "idle";
    s.pretrain_steps = 300;
    s.test_steps = 50;
    RunOptions opt;
    opt.cost_models = flat_models(3.0);
    auto r = run_scenario(s, c, opt);
    CHECK(r.windows() == 50);
    CHECK(r.total_violations() == 0);
    CHECK(r.average_cost() == 0.0);
  }
}

TEST_CASE("safeslice needs a cost model") {
  Scenario s;
  s.pretrain_steps = 10;
  s.test_steps = 5;
  s.cost_model = "does-not-exist.json";
  CHECK_THROWS_AS(run_scenario(s, default_config()), ValidationError);
}

TEST_CASE("reports round trip and are deterministic") {
  auto c = default_config();
  Scenario s;
  s.agent = AgentKind::SafeSlice;
  s.pretrain_steps = 400;
  s.test_steps = 60;
  RunOptions opt;
  opt.cost_models = flat_models(12.0);
  auto a = run_scenario(s, c, opt);
  auto b = run_scenario(s, c, opt);
  CHECK(a.action == b.action);
  CHECK(a.cost_ms == b.cost_ms);
  CHECK(a.fallback_count() == a.windows());

  TempDir dir("harness");
  save_report(a, dir / "a");
  save_report(b, dir / "b");
  CHECK(slurp(dir / "a" / "windows.csv") == slurp(dir / "b" / "windows.csv"));
  auto back = load_report(dir / "a");
  CHECK(back.action == a.action);
  CHECK(back.violation == a.violation);
  CHECK(back.scenario.paired_with(a.scenario));
  CHECK(load_reports(dir.path()).size() == 2);

  auto csvs = write_metric_csvs({a, b}, dir.path());
  auto svgs = write_metric_charts({a, b}, dir.path());
  CHECK(csvs.size() == 3);
  CHECK(svgs.size() == 3);
  for (const auto& p : svgs) CHECK(slurp(p).rfind("<svg", 0) == 0);
}

TEST_CASE("scenario files") {
  auto c = default_config();
  Scenario s;
  s.category = 2;
  s.test_threshold_ms = 5.0;
  s.agent = AgentKind::SacL;
  s.seed = 3;
  auto back = scenario_from_kv(scenario_to_kv(s), c);
  CHECK(back.paired_with(s));
  CHECK(back.agent == AgentKind::SacL);
  CHECK(parse_agent_kind(to_string(AgentKind::SafeSlicePerfectPredictor)) == AgentKind::SafeSlicePerfectPredictor);
  CHECK_THROWS(parse_agent_kind("dqn"));
}

}  // TEST_SUITE
