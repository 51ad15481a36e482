#include <doctest.h>

#include "safeslice/agents.hpp"
#include "safeslice/errors.hpp"

using namespace safeslice;

namespace {

Transition step(Eigen::VectorXd s, std::size_t a, double r, Eigen::VectorXd next, double cost = 0.0,
                bool terminal = false) {
  return {std::move(s), a, r, Eigen::VectorXd::Constant(1, cost), std::move(next), terminal};
}

}  // namespace

TEST_SUITE("agents") {

TEST_CASE("greedy tie-break and sampling") {
  CHECK(greedy_index(Eigen::VectorXd::Constant(5, 0.2)) == 0);
  CHECK(greedy_index(Eigen::Vector4d(0.1, 0.4, 0.4, 0.1)) == 1);

  Rng rng(12);
  Eigen::VectorXd p = nn::softmax(Eigen::Vector2d(std::log(1.0), std::log(3.0)));
  int ones = 0;
  for (int i = 0; i < 10000; ++i) ones += sample_index(p, rng) == 1;
  CHECK(ones / 10000.0 >= 0.73);
  CHECK(ones / 10000.0 <= 0.77);
}

TEST_CASE("uniform and saturated actors") {
  A2cSettings s;
  A2cAgent agent(3, 10, s, 1);
  Eigen::Vector3d state(0.2, 0.3, 0.5);
  auto& last = agent.actor().layers().back();
  last.weight.setZero();
  last.bias.setZero();
  CHECK(agent.select_action(state, SelectionMode::Greedy) == 0);
  CHECK(agent.policy(state).isApprox(Eigen::VectorXd::Constant(10, 0.1)));
  last.bias[7] = 1e3;
  CHECK(agent.select_action(state, SelectionMode::Greedy) == 7);
  for (int i = 0; i < 20; ++i) CHECK(agent.select_action(state, SelectionMode::Sample) == 7);
}

TEST_CASE("advantage and multiplier arithmetic") {
  CHECK(one_step_advantage(1.0, 0.9, 0.0, 0.5) == 0.5);
  CHECK(one_step_advantage(1.0, 0.9, 2.0, 0.5, true) == 0.5);
  CHECK(lagrange_step(0.0, 0.1, 15.0, 10.0) == doctest::Approx(0.5));
  double lambda = 0.0;
  for (int i = 0; i < 100; ++i) {
    lambda = lagrange_step(lambda, 0.1, 7.0, 10.0);
    CHECK(lambda == 0.0);
  }
}

TEST_CASE("zero advantage and no entropy leaves the actor unchanged") {
  A2cSettings s;
  s.entropy_coef = 0.0;
  A2cAgent agent(2, 4, s, 3);
  std::vector<Transition> batch;
  for (int i = 0; i < 8; ++i) {
    Eigen::Vector2d st(0.1 * i, 1.0 - 0.1 * i);
    batch.push_back(step(st, static_cast<std::size_t>(i % 4), agent.value(st), st, 0.0, true));
  }
  const auto before = agent.actor();
  Eigen::Matrix<double, 2, 8> states;
  for (int i = 0; i < 8; ++i) states.col(i) = batch[static_cast<std::size_t>(i)].state;
  const Eigen::MatrixXd v = agent.critic().forward(states);
  for (int i = 0; i < 8; ++i) batch[static_cast<std::size_t>(i)].reward = v(0, i);
  agent.update(batch);
  for (std::size_t k = 0; k < before.layers().size(); ++k) {
    CHECK(agent.actor().layers()[k].weight == before.layers()[k].weight);
    CHECK(agent.actor().layers()[k].bias == before.layers()[k].bias);
  }
}

TEST_CASE("two-state chain critic converges to discounted returns") {
  A2cSettings s;
  A2cAgent agent(2, 2, s, 5);
  const Eigen::Vector2d s0(1, 0), s1(0, 1);
  for (int u = 0; u < 4000; ++u) {
    std::vector<Transition> batch;
    for (int i = 0; i < 100; ++i) {
      batch.push_back(step(s0, 0, 1.0, s1));
      batch.push_back(step(s1, 1, 0.0, s0));
    }
    agent.update(batch);
  }
  const double v0 = 1.0 / (1.0 - 0.81), v1 = 0.9 * v0;
  CHECK(agent.value(s0) == doctest::Approx(v0).epsilon(0.01));
  CHECK(agent.value(s1) == doctest::Approx(v1).epsilon(0.01));
}

TEST_CASE("a2c learns a contextual bandit") {
  A2cSettings s;
  A2cAgent agent(2, 3, s, 8);
  const Eigen::Vector2d ctx[2] = {{1, 0}, {0, 1}};
  Rng rng(1);
  for (int t = 0; t < 20000; ++t) {
    const int c = t % 2;
    const auto a = agent.select_action(ctx[c], SelectionMode::Sample);
    const double r = static_cast<int>(a) == (c == 0 ? 2 : 1) ? 1.0 : 0.0;
    agent.observe(step(ctx[c], a, r, ctx[1 - c], 0.0, true));
  }
  CHECK(agent.policy(ctx[0])[2] > 0.9);
  CHECK(agent.policy(ctx[1])[1] > 0.9);
}

TEST_CASE("agents serialize exactly") {
  A2cAgent a(3, 5, A2cSettings{}, 2);
  auto b = A2cAgent::from_json(a.to_json());
  Eigen::Vector3d x(0.1, 0.5, 0.4);
  CHECK(a.policy(x) == b.policy(x));
  CHECK(a.value(x) == b.value(x));

  SacLagrangianAgent s(3, 5, {2}, Eigen::VectorXd::Constant(1, 10.0), SacSettings{}, 4);
  auto t = SacLagrangianAgent::from_json(s.to_json());
  CHECK(s.policy(x) == t.policy(x));
  CHECK(s.lambdas() == t.lambdas());
}

TEST_CASE("replay buffer is bounded") {
  ReplayBuffer buf(5);
  for (int i = 0; i < 12; ++i) buf.push(step(Eigen::Vector2d(i, 0), 0, i, Eigen::Vector2d(0, 0)));
  CHECK(buf.size() == 5);
  Rng rng(1);
  for (const auto& t : buf.sample(5, rng)) CHECK(t.reward >= 7.0);
}

TEST_CASE("sac-l prefers the feasible bandit arm") {
  SacSettings s;
  s.initial_temperature = 1e-6;
  s.temperature_lr = 0.0;
  SacLagrangianAgent agent(1, 2, {0}, Eigen::VectorXd::Constant(1, 10.0), s, 3);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  for (int t = 0; t < 20000; ++t) {
    const auto a = agent.select_action(x, SelectionMode::Sample);
    agent.observe(step(x, a, 0.0, x, a == 0 ? 5.0 : 15.0, true));
    CHECK(agent.lambdas()[0] >= 0.0);
  }
  CHECK(agent.policy(x)[0] > 0.9);
}

}  // TEST_SUITE
