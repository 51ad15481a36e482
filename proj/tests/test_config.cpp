#include <doctest.h>

#include <set>

#include "safeslice/config.hpp"
#include "safeslice/errors.hpp"
#include "test_util.hpp"

using namespace safeslice;

TEST_SUITE("config") {

TEST_CASE("reference three-slice config validates") {
  auto c = default_config();
  CHECK(c.slice_count() == 3);
  CHECK(c.slices[0].sla.cumulative_threshold_ms == 12.0);
  CHECK(c.slices[1].sla.cumulative_threshold_ms == 20.0);
  CHECK(c.slices[2].sla.cumulative_threshold_ms == 10.0);
  CHECK_NOTHROW(validate(c));
  CHECK(c.constrained_slices() == std::vector<std::size_t>{2});
}

TEST_CASE("priority weights must sum to one") {
  auto c = default_config();
  for (auto& s : c.slices) s.priority_weight = 0.5;
  CHECK_THROWS_AS(validate(c), ValidationError);
}

TEST_CASE("allocation step must divide 100") {
  auto c = default_config();
  c.sim.allocation_step = 7;
  CHECK_THROWS_AS(validate(c), ValidationError);
  KeyValueFile kv;
  kv.set("sim.allocation_step", "7");
  CHECK_THROWS_AS(config_from_kv(kv), ValidationError);
}

TEST_CASE("two slices, step 50, exact sum") {
  auto space = enumerate_action_space(2, 50, false);
  REQUIRE(space.size() == 3);
  CHECK(space.action(0).shares == Eigen::Vector2i(0, 100));
  CHECK(space.action(1).shares == Eigen::Vector2i(50, 50));
  CHECK(space.action(2).shares == Eigen::Vector2i(100, 0));
}

TEST_CASE("three slices, step 10") {
  CHECK(enumerate_action_space(3, 10, false).size() == 66);
  CHECK(enumerate_action_space(3, 10, true).size() == 286);
}

TEST_CASE("enumeration matches stars and bars") {
  for (std::size_t s = 1; s <= 4; ++s) {
    for (int g : {10, 20, 25, 50}) {
      for (bool slack : {false, true}) {
        CAPTURE(s);
        CAPTURE(g);
        CAPTURE(slack);
        CHECK(enumerate_action_space(s, g, slack).size() == action_space_size(s, g, slack));
      }
    }
  }
}

TEST_CASE("action space is lexicographic, unique and indexable") {
  ActionSpace space(3, 10, true);
  std::set<std::vector<int>> seen;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto a = space.action(i);
    CHECK(a.total() <= 100);
    for (int v = 0; v < 3; ++v) CHECK(a.shares[v] % 10 == 0);
    std::vector<int> key(a.shares.data(), a.shares.data() + 3);
    if (!seen.empty()) CHECK(*seen.rbegin() < key);
    seen.insert(key);
    CHECK(space.index_of(a) == i);
  }
  CHECK(space.index_of(AllocationAction{Eigen::Vector3i(5, 0, 0)}) == space.size());
  CHECK(space.action(0).shares == Eigen::Vector3i(0, 0, 0));
  CHECK(space.action(space.size() - 1).shares == Eigen::Vector3i(100, 0, 0));
}

TEST_CASE("config round-trips through save and load") {
  TempDir dir("config");
  auto c = default_config();
  c.sim.seed = 42;
  c.slices[1].priority_weight = 0.2;
  c.slices[0].priority_weight = 0.4666666666666667;
  c.slices[2].priority_weight = 0.3333333333333333;
  c.levels["custom"] = {"custom", {10, 20, 3}, 12.5, 50000.0};
  save_config(c, dir / "c.cfg");
  const auto back = load_config(dir / "c.cfg");
  CHECK(back == c);
}

TEST_CASE("overrides apply on top of a file") {
  TempDir dir("config");
  save_config(default_config(), dir / "c.cfg");
  const auto c = load_config(dir / "c.cfg", {"seed=9", "a2c.gamma = 0.5"});
  CHECK(c.sim.seed == 9);
  CHECK(c.a2c.gamma == 0.5);
  CHECK_THROWS_AS(load_config(dir / "c.cfg", {"no-equals-sign"}), ParseError);
}

TEST_CASE("unknown level lookup fails") {
  CHECK_THROWS_AS(default_config().level("nope"), ValidationError);
}

}  // TEST_SUITE
