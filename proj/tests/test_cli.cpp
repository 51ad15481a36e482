#include <doctest.h>

#include <fstream>
#include <sstream>

#include "safeslice/cli.hpp"
#include "test_util.hpp"

using namespace safeslice;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const fs::path kSource = SAFESLICE_SOURCE_DIR;

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string scenario(const std::string& agent, const fs::path& model) {
  return "scenario.category = 1\nscenario.agent = " + agent +
         "\nscenario.train_level = high\nscenario.test_level = high\n"
         "scenario.pretrain_steps = 200\nscenario.test_steps = 30\nscenario.seed = 1\nscenario.cost_model = " +
         model.string() + "\n";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("fnv-1a vectors") {
  CHECK(hex64(fnv1a64("", 0)) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a", 1)) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a64("foobar", 6)) == "85944171f73967e8");
}

TEST_CASE("validate-config on the shipped config") {
  auto r = cli({"validate-config", "--config", (kSource / "configs" / "reference.cfg").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind("ok:", 0) == 0);
  auto p = cli({"validate-config", "--config", (kSource / "configs" / "reference.cfg").string(), "--plan",
                (kSource / "configs" / "plan_high.cfg").string()});
  CHECK(p.code == kExitOk);
}

TEST_CASE("usage and validation errors") {
  auto unknown = cli({"validate-config", "--bogus"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.rfind("error[usage]", 0) == 0);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);

  TempDir dir("cli");
  write_file(dir / "bad.cfg", "slice.1.weight = 0.5\nslice.2.weight = 0.5\nslice.3.weight = 0.5\n");
  auto bad = cli({"validate-config", "--config", (dir / "bad.cfg").string()});
  CHECK(bad.code == kExitValidation);
  CHECK(bad.err.find('\n') == bad.err.size() - 1);

  auto missing = cli({"validate-config", "--config", (dir / "nope.cfg").string()});
  CHECK(missing.code == kExitValidation);
}

TEST_CASE("run without a cost model names the path") {
  TempDir dir("cli");
  write_file(dir / "s.cfg", scenario("safeslice", dir / "no-model.json"));
  auto r = cli({"run", "--scenario", (dir / "s.cfg").string(), "--out", (dir / "r").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("no-model.json") != std::string::npos);
}

TEST_CASE("seed precedence") {
  TempDir dir("cli");
  auto ref = (kSource / "configs" / "reference.cfg").string();
  CHECK(cli({"validate-config", "--config", ref, "--seed", "77"}).out.find("seed 77") != std::string::npos);
  CHECK(cli({"validate-config", "--config", ref, "--set", "seed=5"}).out.find("seed 5") != std::string::npos);
}

TEST_CASE("end-to-end pipeline") {
  TempDir dir("cli");
  write_file(dir / "plan.cfg",
             "plan.levels = high\nplan.actions = 0,40,120,200,250,285\nplan.windows = 12\nplan.seed = 3\n");
  auto dg = cli({"datagen", "--plan", (dir / "plan.cfg").string(), "--out", (dir / "data.csv").string()});
  REQUIRE_MESSAGE(dg.code == 0, dg.err);
  CHECK(fs::exists(dir / "data.csv.manifest.json"));

  auto tc = cli({"train-cost", "--data", (dir / "data.csv").string(), "--folds", "3", "--out",
                 (dir / "models.json").string()});
  REQUIRE_MESSAGE(tc.code == 0, tc.err);
  CHECK(fs::exists(dir / "models.json.cv.csv"));

  fs::create_directories(dir / "runs");
  for (std::string agent : {"safeslice", "a2c"}) {
    write_file(dir / (agent + ".cfg"), scenario(agent, dir / "models.json"));
    auto r = cli({"run", "--scenario", (dir / (agent + ".cfg")).string(), "--out", (dir / "runs" / agent).string(),
                  "--decision-log"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(dir / "runs" / agent / "manifest.json"));
  }

  auto cmp = cli({"compare", "--reports", (dir / "runs").string(), "--out", (dir / "cmp").string()});
  REQUIRE_MESSAGE(cmp.code == 0, cmp.err);
  auto plot = cli({"plot", "--reports", (dir / "runs").string(), "--out", (dir / "cmp").string()});
  REQUIRE_MESSAGE(plot.code == 0, plot.err);
  for (const char* name : {"cumulative_cost", "violations", "consumption"}) {
    CHECK(fs::exists(dir / "cmp" / (std::string(name) + ".csv")));
    CHECK(fs::exists(dir / "cmp" / (std::string(name) + ".svg")));
  }
  CHECK(fs::exists(dir / "cmp" / "comparison.csv"));

  auto again = cli({"run", "--scenario", (dir / "safeslice.cfg").string(), "--out", (dir / "again").string()});
  REQUIRE(again.code == 0);
  CHECK(slurp(dir / "again" / "windows.csv") == slurp(dir / "runs" / "safeslice" / "windows.csv"));
  const auto manifest = slurp(dir / "again" / "manifest.json");
  CHECK(manifest.find("\"fnv1a64\"") != std::string::npos);
  CHECK(manifest.find("\"seed\"") != std::string::npos);
}

}  // TEST_SUITE
