#include <doctest.h>

#include <memory>
#include <sstream>

#include "oracle.hpp"
#include "safeslice/safety.hpp"

using namespace safeslice;

namespace {

// 100 / b_VR ms, capped at 50.
Eigen::VectorXd stub_cost(const StateVector&, const Eigen::VectorXd&, const AllocationAction& a) {
  const int b = a.shares[2];
  return Eigen::VectorXd::Constant(1, b == 0 ? 50.0 : std::min(50.0, 100.0 / b));
}

Eigen::MatrixXd random_table(std::size_t rows, Rng& rng) {
  std::uniform_int_distribution<int> c(0, 20);
  Eigen::MatrixXd t(static_cast<Eigen::Index>(rows), 1);
  for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, 0) = c(rng);
  return t;
}

}  // namespace

TEST_SUITE("safety") {

TEST_CASE("feasible set filters by threshold") {
  auto all = build_feasible_set(Eigen::Vector3d(1, 2, 3), Eigen::VectorXd::Constant(1, 10.0));
  CHECK(all.members == std::vector<std::size_t>{0, 1, 2});
  auto none = build_feasible_set(Eigen::Vector3d(1, 2, 3), Eigen::VectorXd::Constant(1, 0.0));
  CHECK(none.empty());
  auto some = build_feasible_set(Eigen::Vector3d(8, 12, 9), Eigen::VectorXd::Constant(1, 10.0));
  CHECK(some.members == std::vector<std::size_t>{0, 2});
  CHECK(some.contains(2));
  CHECK(!some.contains(1));
}

TEST_CASE("every constrained slice must pass") {
  Eigen::MatrixXd p(3, 2);
  p << 5, 5, 5, 15, 15, 5;
  auto f = build_feasible_set(p, Eigen::Vector2d(10, 10));
  CHECK(f.members == std::vector<std::size_t>{0});
}

TEST_CASE("feasible action is kept") {
  ActionSpace space(3, 10, true);
  auto f = build_feasible_set(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(space.size()), 1),
                              Eigen::VectorXd::Constant(1, 10.0));
  auto d = project_action(17, space, f);
  CHECK(d.executed == 17);
  CHECK(!d.overridden);
  CHECK(d.distance == 0.0);
}

TEST_CASE("nearest feasible action") {
  ActionSpace space(3, 10, true);
  const auto a = space.index_of({Eigen::Vector3i(70, 20, 10)});
  const auto x = space.index_of({Eigen::Vector3i(50, 30, 20)});
  const auto y = space.index_of({Eigen::Vector3i(60, 30, 10)});
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(space.size()), 1, 20.0);
  p(static_cast<Eigen::Index>(x), 0) = 5.0;
  p(static_cast<Eigen::Index>(y), 0) = 5.0;
  auto d = project_action(a, space, build_feasible_set(p, Eigen::VectorXd::Constant(1, 10.0)));
  CHECK(d.executed == y);
  CHECK(d.overridden);
  CHECK(!d.fallback_used);
  CHECK(d.squared_distance == 200);
  CHECK(d.distance == doctest::Approx(std::sqrt(200.0)));
  CHECK((space.action(x).shares - space.action(a).shares).squaredNorm() == 600);
}

TEST_CASE("empty set falls back to the lowest predicted cost") {
  ActionSpace space(2, 50, false);
  auto f = build_feasible_set(Eigen::Vector3d(12, 11, 13), Eigen::VectorXd::Constant(1, 10.0));
  auto d = project_action(0, space, f);
  CHECK(d.executed == 1);
  CHECK(d.fallback_used);
  CHECK(d.overridden);
  CHECK(d.predicted_cost == 11.0);
}

TEST_CASE("fallback ties go to the nearest action") {
  ActionSpace space(2, 50, false);
  auto f = build_feasible_set(Eigen::Vector3d(11, 12, 11), Eigen::VectorXd::Constant(1, 10.0));
  CHECK(project_action(2, space, f).executed == 2);
  CHECK(project_action(1, space, f).executed == 0);
}

TEST_CASE("projection matches brute force, is minimal and idempotent") {
  ActionSpace space(3, 10, true);
  Rng rng(21);
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  const Eigen::VectorXd omega = Eigen::VectorXd::Constant(1, 4.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto table = random_table(space.size(), rng);
    const auto original = pick(rng);
    auto f = build_feasible_set(table, omega);
    auto d = project_action(original, space, f);
    CHECK(d.executed == brute_force_projection(original, space, table, omega));
    CHECK(d.overridden == (d.executed != original));
    if (!d.fallback_used) {
      CHECK(f.contains(d.executed));
      for (auto m : f.members) {
        const int dm = (space.action(m).shares - space.action(original).shares).squaredNorm();
        CHECK(dm >= d.squared_distance);
      }
      auto again = project_action(d.executed, space, f);
      CHECK(again.executed == d.executed);
      CHECK(!again.overridden);
    }
  }
}

TEST_CASE("safe step fast path and override") {
  ActionSpace space(3, 10, true);
  FunctionCostPredictor stub(stub_cost);
  const StateVector kappa = Eigen::Vector3d::Constant(1.0 / 3.0);
  const Eigen::VectorXd prev = Eigen::Vector3d::Zero();
  const Eigen::VectorXd omega = Eigen::VectorXd::Constant(1, 10.0);

  const auto safe = space.index_of({Eigen::Vector3i(30, 30, 40)});
  auto d = safe_step(safe, stub, kappa, prev, space, omega);
  CHECK(d.executed == safe);
  CHECK(!d.overridden);
  CHECK(d.predicted_cost == doctest::Approx(2.5));

  const auto unsafe = space.index_of({Eigen::Vector3i(60, 40, 0)});
  auto e = safe_step(unsafe, stub, kappa, prev, space, omega);
  CHECK(e.overridden);
  CHECK(!e.fallback_used);
  CHECK(space.action(e.executed).shares[2] >= 10);
  CHECK(e.squared_distance == 200);
}

TEST_CASE("stub predictor: executed actions always predicted safe") {
  ActionSpace space(3, 10, true);
  FunctionCostPredictor stub(stub_cost);
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  const Eigen::VectorXd omega = Eigen::VectorXd::Constant(1, 10.0);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d k(u(rng), u(rng), u(rng));
    k /= k.sum();
    const StateVector kappa = k;
    auto d = safe_step([&](const StateVector&) { return pick(rng); }, stub, kappa,
                       Eigen::Vector3d(u(rng), u(rng), u(rng)) * 50.0, space, omega);
    CHECK(!d.fallback_used);
    CHECK(stub_cost(kappa, {}, space.action(d.executed))[0] <= 10.0);
  }
}

TEST_CASE("decision log") {
  std::ostringstream out;
  write_decision_log_header(out);
  SafetyDecision d;
  d.original = 4;
  d.executed = 9;
  d.overridden = true;
  write_decision(out, 0, d);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header.find("executed") != std::string::npos);
  CHECK(row.rfind("0,4,9", 0) == 0);
}

}  // TEST_SUITE
