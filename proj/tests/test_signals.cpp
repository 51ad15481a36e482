#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/rng.hpp"
#include "safeslice/signals.hpp"

using namespace safeslice;

namespace {

SliceSpec slice(double weight, double steep, double inflection) {
  SliceSpec s;
  s.priority_weight = weight;
  s.sla.sigmoid_steepness = steep;
  s.sla.sigmoid_inflection_ms = inflection;
  return s;
}

}  // namespace

TEST_SUITE("signals") {

TEST_CASE("sigmoid values") {
  CHECK(sigmoid_latency_term(10.0, 2.0, 10.0) == 0.5);
  CHECK(sigmoid_latency_term(10.0 - std::log(3.0) / 2.0, 2.0, 10.0) == doctest::Approx(0.75).epsilon(1e-12));
  const double far = sigmoid_latency_term(20.0, 10.0, 10.0);
  CHECK(far >= 0.0);
  CHECK(far < 1e-40);
  CHECK(sigmoid_latency_term(1e6, 10.0, 10.0) == 0.0);
  CHECK(sigmoid_latency_term(-1e6, 10.0, 10.0) == 1.0);
}

TEST_CASE("sigmoid is strictly decreasing") {
  double prev = 2.0;
  for (double l = 0.0; l <= 20.0; l += 0.25) {
    const double v = sigmoid_latency_term(l, 2.0, 10.0);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("single-slice reward examples") {
  RewardWeights w;
  std::vector<SliceSpec> s{slice(1.0, 2.0, 10.0)};
  CHECK(compute_reward(w, s, Eigen::VectorXi::Constant(1, 100), Eigen::VectorXd::Constant(1, 10.0)) == 0.25);
  CHECK(compute_reward(w, s, Eigen::VectorXi::Constant(1, 0), Eigen::VectorXd::Constant(1, 0.0)) ==
        doctest::Approx(0.5 + 0.5 / (1.0 + std::exp(-20.0))).epsilon(1e-15));
  CHECK(compute_reward(w, s, Eigen::VectorXi::Constant(1, 50), Eigen::VectorXd::Constant(1, 1e9)) == 0.25);
  CHECK(resource_reward(w, Eigen::VectorXi::Constant(1, 40)) == doctest::Approx(0.3));
}

TEST_CASE("reward is bounded and monotone") {
  RewardWeights w;
  std::vector<SliceSpec> s{slice(0.2, 2.0, 12.0), slice(0.3, 2.0, 20.0), slice(0.5, 1.5, 10.0)};
  Rng rng(3);
  std::uniform_real_distribution<double> share(0.0, 33.0), lat(-8.0, 8.0);
  const double h = 1e-3;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector3d b(share(rng), share(rng), share(rng));
    // within 8 ms of each inflection, where the sigmoid is not saturated in double precision
    Eigen::Vector3d l;
    for (int k = 0; k < 3; ++k) l[k] = s[static_cast<std::size_t>(k)].sla.sigmoid_inflection_ms + lat(rng);
    const double r = compute_reward(w, s, b, l);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d bp = b, lp = l;
      bp[k] += h;
      lp[k] += h;
      CHECK(compute_reward(w, s, bp, l) < r);
      CHECK(compute_reward(w, s, b, lp) < r);
    }
  }
}

TEST_CASE("reward is symmetric under slice permutation") {
  RewardWeights w{0.4, 0.6};
  std::vector<SliceSpec> s{slice(0.2, 2.0, 12.0), slice(0.3, 1.0, 20.0), slice(0.5, 3.0, 10.0)};
  Eigen::Vector3i b(10, 30, 50);
  Eigen::Vector3d l(11.0, 19.0, 12.0);
  std::vector<SliceSpec> p{s[2], s[0], s[1]};
  Eigen::Vector3i bp(b[2], b[0], b[1]);
  Eigen::Vector3d lp(l[2], l[0], l[1]);
  CHECK(compute_reward(w, s, b, l) == doctest::Approx(compute_reward(w, p, bp, lp)).epsilon(1e-14));
}

}  // TEST_SUITE
