#include <doctest.h>

#include <memory>
#include <sstream>

#include "safeslice/simenv.hpp"

using namespace safeslice;

namespace {

ExperimentConfig single_slice() {
  auto c = default_config();
  c.slices.resize(1);
  c.slices[0].priority_weight = 1.0;
  for (auto& [name, level] : c.levels) level.user_means.resize(1);
  return c;
}

AllocationAction alloc(std::initializer_list<int> shares) {
  Eigen::VectorXi v(static_cast<Eigen::Index>(shares.size()));
  int i = 0;
  for (int s : shares) v[i++] = s;
  return {v};
}

}  // namespace

TEST_SUITE("simenv") {

TEST_CASE("queue length recursion") {
  auto a = next_queue_length(5, 3, 2, 10);
  CHECK(a.length == 6);
  CHECK(a.dropped == 0);
  auto b = next_queue_length(9, 5, 0, 10);
  CHECK(b.length == 10);
  CHECK(b.dropped == 4);
  auto c = next_queue_length(2, 1, 10, 10);
  CHECK(c.length == 0);
}

TEST_CASE("state vector") {
  CHECK(compute_state(Eigen::Vector3d(100, 300, 100)).isApprox(Eigen::Vector3d(0.2, 0.6, 0.2)));
  CHECK(compute_state(Eigen::Vector3d(500, 0, 0)) == Eigen::Vector3d(1, 0, 0));
  CHECK(compute_state(Eigen::Vector3d(0, 0, 0)).isApprox(Eigen::Vector3d::Constant(1.0 / 3.0)));
  Rng rng(1);
  std::uniform_real_distribution<double> d(0.0, 1e5);
  for (int i = 0; i < 50; ++i) {
    auto k = compute_state(Eigen::Vector3d(d(rng), d(rng), d(rng)));
    CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k.minCoeff() >= 0.0);
  }
}

TEST_CASE("single packet departs in its arrival TTI") {
  SliceQueue q(10);
  std::vector<PacketArrival> a{{0, 100, 0, 0}};
  CHECK(q.step(a, 100, 0, 1.0) == 1);
  CHECK(q.window_delivered() == 1);
  CHECK(q.window_latency_sum_ms() == 1.0);
  CHECK(window_cost(q, 50.0) == 1.0);
}

TEST_CASE("large packets carry over across TTIs") {
  SliceQueue q(10);
  std::vector<PacketArrival> a{{0, 250, 0, 0}};
  CHECK(q.step(a, 100, 0, 1.0) == 0);
  CHECK(q.step({}, 100, 1, 1.0) == 0);
  CHECK(q.length() == 1);
  CHECK(q.user_queues()[0].front().remaining_bytes == 50);
  CHECK(q.step({}, 100, 2, 1.0) == 1);
  CHECK(q.window_latency_sum_ms() == 3.0);
}

TEST_CASE("tail drop beyond capacity") {
  SliceQueue q(2);
  std::vector<PacketArrival> a{{0, 10, 0, 0}, {0, 10, 1, 0}, {0, 10, 2, 0}};
  q.step(a, 0, 0, 1.0);
  CHECK(q.length() == 2);
  CHECK(q.dropped_total() == 1);
  CHECK(window_cost(q, 50.0) == 50.0);
}

TEST_CASE("idle system has zero cost") {
  auto c = default_config();
  BaseStation bs(c);
  std::vector<SliceTraffic> traffic;
  for (std::uint32_t s = 0; s < 3; ++s) traffic.emplace_back(VideoModel{}, s, 0, 1);
  auto m = run_window(bs, alloc({30, 20, 10}), traffic, c, 0);
  CHECK(m.cost_ms.isZero());
  CHECK(m.consumed == doctest::Approx(0.6));
  CHECK(m.next_state.isApprox(Eigen::Vector3d::Constant(1.0 / 3.0)));
}

TEST_CASE("starved slice costs the cap") {
  auto c = default_config();
  BaseStation bs(c);
  std::vector<SliceTraffic> traffic;
  traffic.emplace_back(VideoModel{}, 0, 20, 1);
  traffic.emplace_back(VoNRModel{}, 1, 20, 2);
  traffic.emplace_back(VideoModel{}, 2, 20, 3);
  auto m = run_window(bs, alloc({50, 50, 0}), traffic, c, 0);
  CHECK(m.cost_ms[2] == 50.0);
  CHECK(m.backlog[2] > 0);
  CHECK(m.violations[2]);
}

TEST_CASE("one 187 B packet per TTI at full bandwidth") {
  auto c = single_slice();
  BaseStation bs(c);
  bs.set_allocation(alloc({100}));
  bs.begin_window();
  for (int t = 0; t < 100; ++t) {
    std::vector<PacketArrival> a{{t, 187, 0, 0}};
    bs.step_tti(a);
  }
  const auto& q = bs.queues()[0];
  CHECK(q.window_delivered() == 100);
  CHECK(window_cost(q, 50.0) == 1.0);
}

TEST_CASE("budget is floor of share times bandwidth") {
  auto c = default_config();
  BaseStation bs(c);
  bs.set_allocation(alloc({30, 10, 60}));
  CHECK(bs.budget_bytes(0) == 5625);
  CHECK(bs.budget_bytes(1) == 1875);
  CHECK(bs.budget_bytes(2) == 11250);
}

TEST_CASE("conservation over 1e5 TTIs") {
  auto c = default_config();
  auto cfg = std::make_shared<const ExperimentConfig>(c);
  SlicingEnv env(cfg, c.level("high"), 17);
  ActionSpace space(3, 10, true);
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  for (int w = 0; w < 1000; ++w) {
    env.step(space.action(pick(rng)));
    for (const auto& q : env.station().queues()) {
      CHECK(q.arrived_total() == q.delivered_total() + q.dropped_total() + static_cast<std::int64_t>(q.length()));
      CHECK(q.length() <= q.capacity());
    }
  }
  CHECK(env.station().current_tti() == 100000);
}

TEST_CASE("more bandwidth never raises latency") {
  auto c = default_config();
  auto cfg = std::make_shared<const ExperimentConfig>(c);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double prev = 1e9;
    for (int share : {10, 30, 50, 70, 90}) {
      SlicingEnv env(cfg, c.level("mid"), seed);
      auto m = env.step(alloc({0, 0, share}));
      CHECK(m.cost_ms[2] <= prev);
      prev = m.cost_ms[2];
    }
  }
}

TEST_CASE("environment is deterministic and copyable") {
  auto c = default_config();
  auto cfg = std::make_shared<const ExperimentConfig>(c);
  SlicingEnv a(cfg, c.level("high"), 3), b(cfg, c.level("high"), 3);
  for (int w = 0; w < 5; ++w) a.step(alloc({30, 20, 40}));
  SlicingEnv copy = a;
  for (int w = 0; w < 5; ++w) b.step(alloc({30, 20, 40}));
  std::ostringstream x, y;
  for (int w = 0; w < 5; ++w) {
    write_window_metrics(x, a.step(alloc({20, 20, 50})));
    write_window_metrics(y, copy.step(alloc({20, 20, 50})));
    auto mb = b.step(alloc({20, 20, 50}));
    CHECK(mb.cost_ms == a.previous_cost());
  }
  CHECK(x.str() == y.str());
}

TEST_CASE("metrics are within range") {
  auto c = default_config();
  auto cfg = std::make_shared<const ExperimentConfig>(c);
  SlicingEnv env(cfg, c.level("high"), 9);
  ActionSpace space(3, 10, true);
  for (std::size_t i = 0; i < space.size(); i += 7) {
    auto m = env.step(space.action(i));
    CHECK(m.cost_ms.minCoeff() >= 0.0);
    CHECK(m.cost_ms.maxCoeff() <= 50.0);
    CHECK(m.consumed >= 0.0);
    CHECK(m.consumed <= 1.0);
    CHECK(m.next_state.sum() == doctest::Approx(1.0));
  }
}

}  // TEST_SUITE
