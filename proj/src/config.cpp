#include "safeslice/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "safeslice/errors.hpp"

namespace safeslice {

std::string to_string(ServiceKind kind) {
  switch (kind) {
    case ServiceKind::Video: return "video";
    case ServiceKind::VoNR: return "vonr";
    case ServiceKind::VrGaming: return "vr";
  }
  return "unknown";
}

ServiceKind parse_service_kind(const std::string& text) {
  if (text == "video") return ServiceKind::Video;
  if (text == "vonr") return ServiceKind::VoNR;
  if (text == "vr") return ServiceKind::VrGaming;
  throw ParseError("unknown service kind '" + text + "' (expected video, vonr or vr)");
}

std::vector<std::size_t> ExperimentConfig::constrained_slices() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    if (slices[s].constrained) out.push_back(s);
  }
  return out;
}

const TrafficLevel& ExperimentConfig::level(const std::string& name) const {
  auto it = levels.find(name);
  if (it == levels.end()) throw ValidationError("unknown traffic level '" + name + "'");
  return it->second;
}

namespace {

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<int> to_ints(const std::vector<double>& values) {
  std::vector<int> out;
  for (double v : values) out.push_back(static_cast<int>(v));
  return out;
}

SliceSpec default_slice(std::size_t id, ServiceKind kind, std::size_t slice_count) {
  SliceSpec s;
  s.id = id;
  s.service_kind = kind;
  s.priority_weight = 1.0 / static_cast<double>(slice_count);
  double threshold = 10.0;
  if (kind == ServiceKind::Video) threshold = 12.0;
  if (kind == ServiceKind::VoNR) threshold = 20.0;
  s.sla = {threshold, threshold, 2.0, threshold};
  s.constrained = kind == ServiceKind::VrGaming;
  return s;
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.slices = {default_slice(1, ServiceKind::Video, 3), default_slice(2, ServiceKind::VoNR, 3),
              default_slice(3, ServiceKind::VrGaming, 3)};
  c.levels["low"] = {"low", {19, 38, 1}, 18.0, 43730.0};
  c.levels["mid"] = {"mid", {47, 95, 2}, 14.5, 51330.0};
  c.levels["high"] = {"high", {76, 152, 2}, 11.1, 58933.0};
  c.levels["busy"] = {"busy", {76, 152, 3}, 18.0, 43730.0};
  return c;
}

ExperimentConfig config_from_kv(const KeyValueFile& kv) {
  ExperimentConfig c = default_config();

  auto& sim = c.sim;
  sim.total_bandwidth_bytes = kv.get_double("sim.total_bandwidth_bytes", sim.total_bandwidth_bytes);
  sim.tti_ms = kv.get_double("sim.tti_ms", sim.tti_ms);
  sim.window_ttis = static_cast<int>(kv.get_int("sim.window_ttis", sim.window_ttis));
  sim.allocation_step = static_cast<int>(kv.get_int("sim.allocation_step", sim.allocation_step));
  sim.allow_underallocation = kv.get_bool("sim.allow_underallocation", sim.allow_underallocation);
  sim.latency_cap_ms = kv.get_double("sim.latency_cap_ms", sim.latency_cap_ms);
  sim.seed = kv.get_uint("seed", sim.seed);

  auto slice_count = static_cast<std::size_t>(kv.get_int("slices", static_cast<std::int64_t>(c.slices.size())));
  if (slice_count == 0) throw ValidationError("slices must be at least 1");
  if (slice_count != c.slices.size()) {
    c.slices.clear();
    for (std::size_t id = 1; id <= slice_count; ++id) {
      c.slices.push_back(default_slice(id, ServiceKind::Video, slice_count));
    }
  }
  for (auto& s : c.slices) {
    const std::string p = "slice." + std::to_string(s.id) + ".";
    if (auto kind = kv.get(p + "kind")) {
      auto fresh = default_slice(s.id, parse_service_kind(*kind), slice_count);
      fresh.priority_weight = s.priority_weight;
      s = fresh;
    }
    s.priority_weight = kv.get_double(p + "weight", s.priority_weight);
    s.sla.cumulative_threshold_ms = kv.get_double(p + "cumulative_threshold_ms", s.sla.cumulative_threshold_ms);
    s.sla.instantaneous_threshold_ms =
        kv.get_double(p + "instantaneous_threshold_ms", s.sla.instantaneous_threshold_ms);
    s.sla.sigmoid_steepness = kv.get_double(p + "sigmoid_steepness", s.sla.sigmoid_steepness);
    s.sla.sigmoid_inflection_ms = kv.get_double(p + "sigmoid_inflection_ms", s.sla.cumulative_threshold_ms);
    s.queue_capacity = static_cast<std::size_t>(kv.get_int(p + "queue_capacity", static_cast<std::int64_t>(s.queue_capacity)));
    s.constrained = kv.get_bool(p + "constrained", s.constrained);
  }

  c.reward.resource = kv.get_double("reward.w_u", c.reward.resource);
  c.reward.latency = kv.get_double("reward.w_l", c.reward.latency);

  auto& a = c.a2c;
  a.gamma = kv.get_double("a2c.gamma", a.gamma);
  a.batch_size = kv.get_uint("a2c.batch_size", a.batch_size);
  a.entropy_coef = kv.get_double("a2c.entropy_coef", a.entropy_coef);
  a.actor_lr = kv.get_double("a2c.actor_lr", a.actor_lr);
  a.critic_lr = kv.get_double("a2c.critic_lr", a.critic_lr);
  if (kv.contains("a2c.hidden")) a.hidden = to_ints(kv.get_doubles("a2c.hidden", {}));

  auto& q = c.sac;
  q.gamma = kv.get_double("sac.gamma", q.gamma);
  q.minibatch = kv.get_uint("sac.minibatch", q.minibatch);
  q.buffer_capacity = kv.get_uint("sac.buffer_capacity", q.buffer_capacity);
  q.update_every = kv.get_uint("sac.update_every", q.update_every);
  q.actor_lr = kv.get_double("sac.actor_lr", q.actor_lr);
  q.critic_lr = kv.get_double("sac.critic_lr", q.critic_lr);
  q.temperature_lr = kv.get_double("sac.temperature_lr", q.temperature_lr);
  q.initial_temperature = kv.get_double("sac.initial_temperature", q.initial_temperature);
  q.target_entropy_scale = kv.get_double("sac.target_entropy_scale", q.target_entropy_scale);
  q.polyak = kv.get_double("sac.polyak", q.polyak);
  q.lambda_lr = kv.get_double("sac.lambda_lr", q.lambda_lr);
  if (kv.contains("sac.hidden")) q.hidden = to_ints(kv.get_doubles("sac.hidden", {}));

  auto& m = c.cost;
  m.estimators = static_cast<int>(kv.get_int("cost.estimators", m.estimators));
  m.learning_rate = kv.get_double("cost.learning_rate", m.learning_rate);
  m.max_depth = static_cast<int>(kv.get_int("cost.max_depth", m.max_depth));
  m.min_child_weight = static_cast<int>(kv.get_int("cost.min_child_weight", m.min_child_weight));
  m.alpha = kv.get_double("cost.alpha", m.alpha);
  m.subsample = kv.get_double("cost.subsample", m.subsample);

  auto& h = c.harness;
  h.pretrain_steps = kv.get_uint("harness.pretrain_steps", h.pretrain_steps);
  h.test_steps = kv.get_uint("harness.test_steps", h.test_steps);
  h.episode_windows = kv.get_uint("harness.episode_windows", h.episode_windows);

  // level.<name>.users / .vr_interarrival_ms / .vr_size_bytes
  for (const auto& key : kv.keys_with_prefix("level.")) {
    auto rest = key.substr(6);
    auto dot = rest.find('.');
    if (dot == std::string::npos) throw ParseError("malformed level key '" + key + "'");
    auto name = rest.substr(0, dot);
    auto field = rest.substr(dot + 1);
    auto& level = c.levels[name];
    level.name = name;
    if (field == "users") {
      level.user_means = kv.get_doubles(key, {});
    } else if (field == "vr_interarrival_ms") {
      level.vr_interarrival_ms = kv.get_double(key, level.vr_interarrival_ms);
    } else if (field == "vr_size_bytes") {
      level.vr_size_bytes = kv.get_double(key, level.vr_size_bytes);
    } else {
      throw ParseError("unknown level field '" + key + "'");
    }
  }

  validate(c);
  return c;
}

KeyValueFile config_to_kv(const ExperimentConfig& c) {
  KeyValueFile kv;
  kv.set("seed", std::to_string(c.sim.seed));
  kv.set("sim.total_bandwidth_bytes", format_double(c.sim.total_bandwidth_bytes));
  kv.set("sim.tti_ms", format_double(c.sim.tti_ms));
  kv.set("sim.window_ttis", std::to_string(c.sim.window_ttis));
  kv.set("sim.allocation_step", std::to_string(c.sim.allocation_step));
  kv.set("sim.allow_underallocation", c.sim.allow_underallocation ? "true" : "false");
  kv.set("sim.latency_cap_ms", format_double(c.sim.latency_cap_ms));
  kv.set("slices", std::to_string(c.slices.size()));
  for (const auto& s : c.slices) {
    const std::string p = "slice." + std::to_string(s.id) + ".";
    kv.set(p + "kind", to_string(s.service_kind));
    kv.set(p + "weight", format_double(s.priority_weight));
    kv.set(p + "cumulative_threshold_ms", format_double(s.sla.cumulative_threshold_ms));
    kv.set(p + "instantaneous_threshold_ms", format_double(s.sla.instantaneous_threshold_ms));
    kv.set(p + "sigmoid_steepness", format_double(s.sla.sigmoid_steepness));
    kv.set(p + "sigmoid_inflection_ms", format_double(s.sla.sigmoid_inflection_ms));
    kv.set(p + "queue_capacity", std::to_string(s.queue_capacity));
    kv.set(p + "constrained", s.constrained ? "true" : "false");
  }
  kv.set("reward.w_u", format_double(c.reward.resource));
  kv.set("reward.w_l", format_double(c.reward.latency));

  kv.set("a2c.gamma", format_double(c.a2c.gamma));
  kv.set("a2c.batch_size", std::to_string(c.a2c.batch_size));
  kv.set("a2c.entropy_coef", format_double(c.a2c.entropy_coef));
  kv.set("a2c.actor_lr", format_double(c.a2c.actor_lr));
  kv.set("a2c.critic_lr", format_double(c.a2c.critic_lr));
  kv.set("a2c.hidden", join(c.a2c.hidden));

  kv.set("sac.gamma", format_double(c.sac.gamma));
  kv.set("sac.minibatch", std::to_string(c.sac.minibatch));
  kv.set("sac.buffer_capacity", std::to_string(c.sac.buffer_capacity));
  kv.set("sac.update_every", std::to_string(c.sac.update_every));
  kv.set("sac.actor_lr", format_double(c.sac.actor_lr));
  kv.set("sac.critic_lr", format_double(c.sac.critic_lr));
  kv.set("sac.temperature_lr", format_double(c.sac.temperature_lr));
  kv.set("sac.initial_temperature", format_double(c.sac.initial_temperature));
  kv.set("sac.target_entropy_scale", format_double(c.sac.target_entropy_scale));
  kv.set("sac.polyak", format_double(c.sac.polyak));
  kv.set("sac.lambda_lr", format_double(c.sac.lambda_lr));
  kv.set("sac.hidden", join(c.sac.hidden));

  kv.set("cost.estimators", std::to_string(c.cost.estimators));
  kv.set("cost.learning_rate", format_double(c.cost.learning_rate));
  kv.set("cost.max_depth", std::to_string(c.cost.max_depth));
  kv.set("cost.min_child_weight", std::to_string(c.cost.min_child_weight));
  kv.set("cost.alpha", format_double(c.cost.alpha));
  kv.set("cost.subsample", format_double(c.cost.subsample));

  kv.set("harness.pretrain_steps", std::to_string(c.harness.pretrain_steps));
  kv.set("harness.test_steps", std::to_string(c.harness.test_steps));
  kv.set("harness.episode_windows", std::to_string(c.harness.episode_windows));

  for (const auto& [name, level] : c.levels) {
    kv.set("level." + name + ".users", join(level.user_means));
    kv.set("level." + name + ".vr_interarrival_ms", format_double(level.vr_interarrival_ms));
    kv.set("level." + name + ".vr_size_bytes", format_double(level.vr_size_bytes));
  }
  return kv;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  auto kv = KeyValueFile::load(path);
  for (const auto& o : overrides) kv.apply_override(o);
  return config_from_kv(kv);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# safeslice experiment configuration\n" << config_to_kv(config).dump();
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  const auto& sim = c.sim;
  if (!(sim.total_bandwidth_bytes > 0)) fail("sim.total_bandwidth_bytes must be positive");
  if (!(sim.tti_ms > 0)) fail("sim.tti_ms must be positive");
  if (sim.window_ttis < 1) fail("sim.window_ttis must be at least 1");
  if (sim.allocation_step <= 0 || sim.allocation_step > 100 || 100 % sim.allocation_step != 0) {
    fail("sim.allocation_step must divide 100 (100 mod " + std::to_string(sim.allocation_step) + " != 0)");
  }
  if (!(sim.latency_cap_ms > 0)) fail("sim.latency_cap_ms must be positive");
  if (c.slices.empty()) fail("at least one slice is required");

  double weight_sum = 0.0;
  for (const auto& s : c.slices) {
    const std::string name = "slice " + std::to_string(s.id);
    if (s.priority_weight < 0.0 || s.priority_weight > 1.0) fail(name + ": weight must lie in [0,1]");
    weight_sum += s.priority_weight;
    if (!(s.sla.cumulative_threshold_ms > 0)) fail(name + ": cumulative threshold must be positive");
    if (!(s.sla.instantaneous_threshold_ms > 0)) fail(name + ": instantaneous threshold must be positive");
    if (!(s.sla.sigmoid_steepness > 0)) fail(name + ": sigmoid steepness must be positive");
    if (!(s.sla.sigmoid_inflection_ms > 0)) fail(name + ": sigmoid inflection must be positive");
    if (s.queue_capacity < 1) fail(name + ": queue capacity must be at least 1");
  }
  if (std::abs(weight_sum - 1.0) > 1e-6) {
    fail("slice weights must sum to 1 (sum is " + format_double(weight_sum) + ")");
  }
  const auto& r = c.reward;
  if (r.resource < 0 || r.resource > 1 || r.latency < 0 || r.latency > 1 ||
      std::abs(r.resource + r.latency - 1.0) > 1e-9) {
    fail("reward weights must lie in [0,1] and sum to 1");
  }
  if (c.a2c.gamma < 0 || c.a2c.gamma >= 1) fail("a2c.gamma must lie in [0,1)");
  if (c.a2c.batch_size < 1) fail("a2c.batch_size must be positive");
  if (c.sac.gamma < 0 || c.sac.gamma >= 1) fail("sac.gamma must lie in [0,1)");
  if (c.sac.minibatch < 1 || c.sac.buffer_capacity < c.sac.minibatch) fail("sac.buffer_capacity must hold a minibatch");
  if (c.cost.estimators < 0) fail("cost.estimators must be non-negative");
  if (c.cost.max_depth < 0) fail("cost.max_depth must be non-negative");
  if (c.cost.min_child_weight < 1) fail("cost.min_child_weight must be at least 1");
  if (c.cost.alpha < 0) fail("cost.alpha must be non-negative");
  if (!(c.cost.subsample > 0 && c.cost.subsample <= 1)) fail("cost.subsample must lie in (0,1]");
  for (const auto& [name, level] : c.levels) {
    if (level.user_means.size() != c.slices.size()) {
      fail("level " + name + ": users must list one mean per slice");
    }
    for (double m : level.user_means) {
      if (m < 0) fail("level " + name + ": user means must be non-negative");
    }
    if (!(level.vr_interarrival_ms > 0) || !(level.vr_size_bytes > 0)) {
      fail("level " + name + ": VR demand profile must be positive");
    }
  }
}

namespace {

std::uint64_t share_key(const Eigen::Ref<const Eigen::VectorXi>& shares) {
  std::uint64_t key = 0;
  for (Eigen::Index i = 0; i < shares.size(); ++i) key = key * 101 + static_cast<std::uint64_t>(shares[i]);
  return key;
}

void enumerate(std::size_t slot, int remaining, int step, bool exact, Eigen::VectorXi& current,
               std::vector<Eigen::VectorXi>& out) {
  const auto last = static_cast<std::size_t>(current.size()) - 1;
  if (slot == last) {
    if (exact) {
      current[static_cast<Eigen::Index>(slot)] = remaining;
      out.push_back(current);
    } else {
      for (int v = 0; v <= remaining; v += step) {
        current[static_cast<Eigen::Index>(slot)] = v;
        out.push_back(current);
      }
    }
    return;
  }
  for (int v = 0; v <= remaining; v += step) {
    current[static_cast<Eigen::Index>(slot)] = v;
    enumerate(slot + 1, remaining - v, step, exact, current, out);
  }
}

}  // namespace

ActionSpace::ActionSpace(std::size_t slices, int step, bool allow_underallocation) : step_(step) {
  if (slices < 1) throw ValidationError("action space needs at least one slice");
  if (step <= 0 || step > 100 || 100 % step != 0) throw ValidationError("allocation step must divide 100");
  std::vector<Eigen::VectorXi> rows;
  Eigen::VectorXi current = Eigen::VectorXi::Zero(static_cast<Eigen::Index>(slices));
  enumerate(0, 100, step, !allow_underallocation, current, rows);
  shares_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(slices));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    shares_.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    index_.emplace(share_key(rows[i]), i);
  }
}

std::size_t ActionSpace::index_of(const AllocationAction& action) const {
  if (action.shares.size() != shares_.cols()) return size();
  auto it = index_.find(share_key(action.shares));
  return it == index_.end() ? size() : it->second;
}

ActionSpace enumerate_action_space(std::size_t slices, int step, bool allow_underallocation) {
  return ActionSpace(slices, step, allow_underallocation);
}

std::size_t action_space_size(std::size_t slices, int step, bool allow_underallocation) {
  auto n = static_cast<std::size_t>(100 / step);
  std::size_t top = allow_underallocation ? n + slices : n + slices - 1;
  std::size_t k = allow_underallocation ? slices : slices - 1;
  std::size_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) result = result * (top - k + i) / i;
  return result;
}

}  // namespace safeslice
