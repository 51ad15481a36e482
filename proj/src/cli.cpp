#include "safeslice/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "safeslice/config.hpp"
#include "safeslice/costmodel.hpp"
#include "safeslice/datagen.hpp"
#include "safeslice/errors.hpp"
#include "safeslice/harness.hpp"

#ifndef SAFESLICE_VERSION
#define SAFESLICE_VERSION "0.0.0"
#endif

namespace safeslice {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    hash = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), hash);
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string version_string() { return SAFESLICE_VERSION; }

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c, bool needs_out) {
  sub->add_option("--config", c.config, "experiment configuration file");
  sub->add_option("--seed", c.seed, "seed; overrides the configured one");
  auto* out = sub->add_option("--out", c.out, "output file or directory");
  if (needs_out) out->required();
  sub->add_option("--set", c.sets, "configuration override key=value")->allow_extra_args(false);
}

std::optional<std::uint64_t> resolve_seed(const Common& c) {
  if (c.seed) return c.seed;
  const char* env = std::getenv("SAFESLICE_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  const std::string text = trim(env);
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') {
    throw UsageError("SAFESLICE_SEED is not an unsigned integer: '" + text + "'");
  }
  return v;
}

ExperimentConfig resolve_config(const Common& c, std::optional<std::uint64_t> seed) {
  KeyValueFile kv;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw ValidationError("config not found: " + c.config);
    kv = KeyValueFile::load(c.config);
  }
  for (const auto& s : c.sets) kv.apply_override(s);
  auto cfg = config_from_kv(kv);
  if (seed) cfg.sim.seed = *seed;
  validate(cfg);
  return cfg;
}

fs::path require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!fs::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
  return path;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args, const ExperimentConfig& config,
           std::uint64_t seed) {
    doc_["tool"] = "safeslice";
    doc_["version"] = version_string();
    doc_["command"] = std::move(command);
    doc_["arguments"] = args;
    doc_["seed"] = seed;
    json cfg = json::object();
    const auto kv = config_to_kv(config);
    for (const auto& [k, v] : kv.entries()) cfg[k] = v;
    doc_["config"] = cfg;
    doc_["build"] = {{"compiler", std::string(__VERSION__)},
                     {"cxx_standard", static_cast<long>(__cplusplus)},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
    doc_["inputs"] = json::array();
    doc_["artifacts"] = json::array();
  }

  void input(const fs::path& path) {
    doc_["inputs"].push_back({{"path", path.generic_string()}, {"fnv1a64", hex64(fnv1a64_file(path))}});
  }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }

  /// Hashes every artifact and writes the manifest; paths are stored
  /// relative to the manifest's directory.
  void write(const fs::path& path, std::vector<fs::path> artifacts) {
    std::sort(artifacts.begin(), artifacts.end());
    const auto base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    for (const auto& a : artifacts) {
      doc_["artifacts"].push_back({{"path", fs::relative(a, base).generic_string()},
                                   {"bytes", static_cast<std::uint64_t>(fs::file_size(a))},
                                   {"fnv1a64", hex64(fnv1a64_file(a))}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SafeSlice: safety-layered inter-slice bandwidth allocation", "safeslice"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  Common c;
  std::string plan_path, data_path, scenario_path, cost_model, pretrained, reports;
  unsigned threads = 0;
  std::size_t folds = 5;
  bool decision_log = false;

  auto* datagen = app.add_subcommand("datagen", "run a domain-randomization plan and write the dataset CSV");
  add_common(datagen, c, true);
  datagen->add_option("--plan", plan_path, "plan file")->required();
  datagen->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto* train = app.add_subcommand("train-cost", "fit per-slice cost models and report cross-validation");
  add_common(train, c, true);
  train->add_option("--data", data_path, "dataset CSV")->required();
  train->add_option("--folds", folds, "cross-validation folds (0 skips it)");

  auto* pretrain = app.add_subcommand("pretrain", "pre-train the agents a scenario needs");
  add_common(pretrain, c, true);
  pretrain->add_option("--scenario", scenario_path, "scenario file")->required();

  auto* run = app.add_subcommand("run", "run a scenario and write its report");
  add_common(run, c, true);
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--cost-model", cost_model, "cost model file; overrides scenario.cost_model");
  run->add_option("--pretrained", pretrained, "directory written by pretrain");
  run->add_flag("--decision-log", decision_log, "write decisions.csv with every safety decision");

  auto* cmp = app.add_subcommand("compare", "compare SafeSlice with the baselines");
  add_common(cmp, c, true);
  cmp->add_option("--reports", reports, "directory of run reports")->required();

  auto* plot = app.add_subcommand("plot", "render metric charts as SVG");
  add_common(plot, c, true);
  plot->add_option("--reports", reports, "directory of run reports")->required();

  auto* check = app.add_subcommand("validate-config", "validate a configuration (and optional scenario/plan)");
  add_common(check, c, false);
  check->add_option("--scenario", scenario_path, "scenario file");
  check->add_option("--plan", plan_path, "plan file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    const auto seed_override = resolve_seed(c);
    const auto cfg = resolve_config(c, seed_override);
    const std::uint64_t seed = cfg.sim.seed;

    if (datagen->parsed()) {
      const auto plan_file = require_file(plan_path, "plan");
      auto plan = load_plan(plan_file, cfg);
      if (seed_override) plan.seed = *seed_override;
      const auto data = run_dr_plan(plan, cfg, threads);
      const fs::path dest = c.out;
      ensure_parent(dest);
      save_dataset(data, dest);
      Manifest m("datagen", args, cfg, plan.seed);
      m.input(plan_file);
      m.write(manifest_for_file(dest), {dest});
      out << "rows " << data.size() << " -> " << dest.string() << '\n';
      return kExitOk;
    }

    if (train->parsed()) {
      const auto data_file = require_file(data_path, "dataset");
      const auto data = load_dataset(data_file);
      if (data.slices != cfg.slice_count()) {
        throw ValidationError("dataset has " + std::to_string(data.slices) + " slices, config has " +
                              std::to_string(cfg.slice_count()));
      }
      const fs::path dest = c.out;
      ensure_parent(dest);
      std::vector<fs::path> artifacts{dest};
      if (folds > 0) {
        const fs::path cv_path = dest.string() + ".cv.csv";
        std::ofstream cv(cv_path, std::ios::binary);
        if (!cv) throw std::runtime_error("cannot write " + cv_path.string());
        cv << "slice,fold,rows,rmse,r2\n";
        out << "slice  rmse_ms   r2\n";
        for (std::size_t s = 0; s < data.slices; ++s) {
          const auto report =
              cross_validate(data.features, data.costs.col(static_cast<Eigen::Index>(s)), folds, cfg.cost, seed);
          for (std::size_t k = 0; k < report.folds.size(); ++k) {
            const auto& f = report.folds[k];
            cv << (s + 1) << ',' << (k + 1) << ',' << f.rows << ',' << format_double(f.rmse) << ','
               << format_double(f.r2) << '\n';
          }
          const auto& a = report.aggregate;
          cv << (s + 1) << ",all," << a.rows << ',' << format_double(a.rmse) << ',' << format_double(a.r2) << '\n';
          out << std::setw(5) << (s + 1) << "  " << std::fixed << std::setprecision(3) << std::setw(7) << a.rmse
              << "  " << std::setprecision(4) << a.r2 << '\n';
        }
        out.unsetf(std::ios::floatfield);
        artifacts.push_back(cv_path);
      }
      train_cost_models(data, cfg.cost, seed).save(dest);
      Manifest m("train-cost", args, cfg, seed);
      m.input(data_file);
      m.write(manifest_for_file(dest), artifacts);
      out << "cost models -> " << dest.string() << '\n';
      return kExitOk;
    }

    if (pretrain->parsed()) {
      const auto scenario_file = require_file(scenario_path, "scenario");
      auto s = load_scenario(scenario_file, cfg);
      if (seed_override) s.seed = *seed_override;
      validate_scenario(s, cfg);
      const auto agents = pretrain_for(s, cfg, s.agent);
      const fs::path dir = c.out;
      fs::create_directories(dir);
      std::vector<fs::path> artifacts;
      if (agents.a2c) {
        write_json(agents.a2c->to_json(), dir / "a2c.json");
        artifacts.push_back(dir / "a2c.json");
      }
      if (agents.sacl) {
        write_json(agents.sacl->to_json(), dir / "sacl.json");
        artifacts.push_back(dir / "sacl.json");
      }
      std::ofstream(dir / "scenario.cfg", std::ios::binary) << scenario_to_kv(s).dump();
      artifacts.push_back(dir / "scenario.cfg");
      Manifest m("pretrain", args, cfg, s.seed);
      m.input(scenario_file);
      m.write(dir / "manifest.json", artifacts);
      out << "pretrained " << to_string(s.agent) << " (" << s.pretrain_steps << " steps) -> " << dir.string() << '\n';
      return kExitOk;
    }

    if (run->parsed()) {
      const auto scenario_file = require_file(scenario_path, "scenario");
      auto s = load_scenario(scenario_file, cfg);
      if (seed_override) s.seed = *seed_override;
      if (!cost_model.empty()) s.cost_model = cost_model;
      validate_scenario(s, cfg);

      Manifest m("run", args, cfg, s.seed);
      m.input(scenario_file);
      RunOptions options;
      PretrainedAgents agents;
      if (!pretrained.empty()) {
        const fs::path dir = pretrained;
        if (!fs::is_directory(dir)) throw ValidationError("pretrained agents not found: " + dir.string());
        const bool sac = s.agent == AgentKind::SacL;
        const auto file = dir / (sac ? "sacl.json" : "a2c.json");
        if (!fs::is_regular_file(file)) throw ValidationError("pretrained agent not found: " + file.string());
        try {
          if (sac) {
            agents.sacl = SacLagrangianAgent::from_json(read_json(file));
          } else {
            agents.a2c = A2cAgent::from_json(read_json(file));
          }
        } catch (const json::exception& e) {
          throw ParseError(file.string() + ": " + e.what());
        }
        m.input(file);
        options.pretrained = &agents;
      }
      if (uses_learned_cost_model(s.agent) && !s.cost_model.empty() && fs::is_regular_file(s.cost_model)) {
        m.input(s.cost_model);
      }

      const fs::path dir = c.out;
      fs::create_directories(dir);
      std::ofstream log;
      if (decision_log) {
        log.open(dir / "decisions.csv", std::ios::binary);
        if (!log) throw std::runtime_error("cannot write " + (dir / "decisions.csv").string());
        options.decision_log = &log;
      }
      const auto report = run_scenario(s, cfg, options);
      if (log.is_open()) log.close();
      save_report(report, dir);
      std::vector<fs::path> artifacts{dir / "scenario.cfg", dir / "windows.csv", dir / "summary.csv"};
      if (decision_log) artifacts.push_back(dir / "decisions.csv");
      m.write(dir / "manifest.json", artifacts);
      out << report_label(report) << " category " << s.category << ": average_cost_ms "
          << format_double(report.average_cost()) << ", violations " << report.total_violations() << "/"
          << report.windows() << ", consumption " << format_double(report.average_consumption()) << ", overrides "
          << report.override_count() << ", fallbacks " << report.fallback_count() << '\n';
      return kExitOk;
    }

    if (cmp->parsed() || plot->parsed()) {
      const fs::path src = reports;
      if (!fs::is_directory(src)) throw ValidationError("reports directory not found: " + src.string());
      const auto loaded = load_reports(src);
      if (loaded.empty()) throw ValidationError("no reports under " + src.string());
      const fs::path dir = c.out;
      fs::create_directories(dir);
      std::vector<fs::path> artifacts;
      const bool comparing = cmp->parsed();
      Manifest m(comparing ? "compare" : "plot", args, cfg, seed);
      std::vector<fs::path> inputs;
      for (const auto& entry : fs::directory_iterator(src)) {
        if (fs::is_regular_file(entry.path() / "windows.csv")) inputs.push_back(entry.path() / "windows.csv");
      }
      std::sort(inputs.begin(), inputs.end());
      for (const auto& p : inputs) m.input(p);
      if (comparing) {
        const auto rows = compare(loaded);
        write_comparison_csv(rows, dir / "comparison.csv");
        artifacts.push_back(dir / "comparison.csv");
        for (auto& p : write_metric_csvs(loaded, dir)) artifacts.push_back(p);
        for (const auto& r : rows) {
          if (r.seed) continue;
          out << "safeslice vs " << r.baseline << ' ' << r.metric << ": " << format_double(r.safeslice_value)
              << " vs " << format_double(r.baseline_value) << " (reduction " << format_double(r.reduction_pct)
              << "%)\n";
        }
      } else {
        for (auto& p : write_metric_charts(loaded, dir)) artifacts.push_back(p);
        out << "charts -> " << dir.string() << '\n';
      }
      m.write(dir / "manifest.json", artifacts);
      return kExitOk;
    }

    if (check->parsed()) {
      if (!scenario_path.empty()) {
        auto s = load_scenario(require_file(scenario_path, "scenario"), cfg);
        if (seed_override) s.seed = *seed_override;
        validate_scenario(s, cfg);
      }
      if (!plan_path.empty()) load_plan(require_file(plan_path, "plan"), cfg);
      out << "ok: " << cfg.slice_count() << " slices, " << cfg.levels.size() << " traffic levels, seed " << seed
          << '\n';
      if (!c.out.empty()) {
        const fs::path dest = c.out;
        ensure_parent(dest);
        save_config(cfg, dest);
        Manifest m("validate-config", args, cfg, seed);
        m.write(manifest_for_file(dest), {dest});
      }
      return kExitOk;
    }
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    err << "error[usage]: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error[parse]: " << one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error[validation]: " << one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const ShapeError& e) {
    err << "error[validation]: " << one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "error[divergence]: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error[runtime]: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  }
}

}  // namespace safeslice
