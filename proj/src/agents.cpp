#include "safeslice/agents.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "safeslice/errors.hpp"

namespace safeslice {

namespace {

using Matrix = Eigen::MatrixXd;

std::vector<int> layer_sizes(std::size_t in, const std::vector<int>& hidden, std::size_t out) {
  std::vector<int> sizes{static_cast<int>(in)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(static_cast<int>(out));
  return sizes;
}

void shrink_output_layer(Network& net, double factor) {
  net.layers().back().weight *= factor;
  net.layers().back().bias.setZero();
}

Matrix stack_states(std::span<const Transition> batch, bool next) {
  if (batch.empty()) throw ShapeError("empty batch");
  const auto dim = (next ? batch[0].next_state : batch[0].state).size();
  Matrix m(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& s = next ? batch[j].next_state : batch[j].state;
    if (s.size() != dim) throw ShapeError("state dimension varies within the batch");
    m.col(static_cast<Eigen::Index>(j)) = s;
  }
  return m;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

Rng rng_from_state(const std::string& state) {
  Rng rng;
  std::istringstream ss(state);
  ss >> rng;
  if (!ss) throw ParseError("malformed generator state");
  return rng;
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw DivergenceError(std::string("non-finite ") + what);
}

}  // namespace

std::size_t greedy_index(const Eigen::Ref<const Eigen::VectorXd>& probabilities) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < probabilities.size(); ++i) {
    if (probabilities[i] > probabilities[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

std::size_t sample_index(const Eigen::Ref<const Eigen::VectorXd>& probabilities, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    cumulative += probabilities[i];
    if (u < cumulative) return static_cast<std::size_t>(i);
  }
  // Rounding left u above the running sum; take the last non-zero entry.
  for (Eigen::Index i = probabilities.size(); i-- > 0;) {
    if (probabilities[i] > 0) return static_cast<std::size_t>(i);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// A2C

A2cAgent::A2cAgent(std::size_t state_dim, std::size_t action_count, const A2cSettings& settings, std::uint64_t seed)
    : settings_(settings), rng_(seed) {
  Rng init(derive_seed(seed, {0xA2C}));
  actor_ = Network(layer_sizes(state_dim, settings.hidden, action_count), nn::Activation::Tanh, nn::Activation::Linear, init);
  critic_ = Network(layer_sizes(state_dim, settings.hidden, 1), nn::Activation::Tanh, nn::Activation::Linear, init);
  shrink_output_layer(actor_, 0.01);
  actor_opt_ = Optimizer(actor_, settings.actor_lr);
  critic_opt_ = Optimizer(critic_, settings.critic_lr);
}

Eigen::VectorXd A2cAgent::policy(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return nn::softmax(actor_.forward(state)).col(0);
}

double A2cAgent::value(const Eigen::Ref<const Eigen::VectorXd>& state) const { return critic_.forward(state)(0, 0); }

std::size_t A2cAgent::select_action(const Eigen::Ref<const Eigen::VectorXd>& state, SelectionMode mode) {
  const auto p = policy(state);
  return mode == SelectionMode::Greedy ? greedy_index(p) : sample_index(p, rng_);
}

std::optional<A2cDiagnostics> A2cAgent::observe(const Transition& t) {
  rollout_.push_back(t);
  if (rollout_.size() < settings_.batch_size) return std::nullopt;
  auto diag = update(rollout_);
  rollout_.clear();
  return diag;
}

A2cDiagnostics A2cAgent::update(std::span<const Transition> batch) {
  const Matrix states = stack_states(batch, false);
  const Matrix next_states = stack_states(batch, true);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);

  Network::Cache critic_cache;
  const Matrix values = critic_.forward(states, &critic_cache);
  const Matrix next_values = critic_.forward(next_states);

  Eigen::RowVectorXd advantage(n);
  Matrix critic_grad(1, n);
  double critic_loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = batch[static_cast<std::size_t>(j)];
    if (t.action >= action_count()) throw ShapeError("transition action index out of range");
    const double target = t.reward + (t.terminal ? 0.0 : settings_.gamma * next_values(0, j));
    advantage[j] = target - values(0, j);
    critic_loss += 0.5 * advantage[j] * advantage[j] * inv_n;
    critic_grad(0, j) = -advantage[j] * inv_n;
  }

  Network::Cache actor_cache;
  const Matrix logits = actor_.forward(states, &actor_cache);
  const Matrix logp = nn::log_softmax(logits);
  const Matrix p = logp.array().exp().matrix();
  const Eigen::RowVectorXd entropy = -(p.array() * logp.array()).colwise().sum().matrix();

  // loss = -mean(A log pi(a)) - beta mean(H)
  Matrix actor_grad(logits.rows(), n);
  double actor_loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto a = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(j)].action);
    actor_loss += (-advantage[j] * logp(a, j) - settings_.entropy_coef * entropy[j]) * inv_n;
    auto g = actor_grad.col(j);
    g = advantage[j] * p.col(j);
    g[a] -= advantage[j];
    g.array() += settings_.entropy_coef * p.col(j).array() * (logp.col(j).array() + entropy[j]);
    g *= inv_n;
  }
  require_finite(actor_loss, "actor loss");
  require_finite(critic_loss, "critic loss");

  actor_opt_.step(actor_, actor_.backward(actor_cache, actor_grad));
  critic_opt_.step(critic_, critic_.backward(critic_cache, critic_grad));
  return {actor_loss, critic_loss, entropy.mean()};
}

nlohmann::json A2cAgent::to_json() const {
  nlohmann::json j;
  j["format"] = "safeslice-a2c";
  j["version"] = 1;
  j["settings"] = {{"gamma", settings_.gamma},           {"batch_size", settings_.batch_size},
                   {"entropy_coef", settings_.entropy_coef}, {"actor_lr", settings_.actor_lr},
                   {"critic_lr", settings_.critic_lr},   {"hidden", settings_.hidden}};
  j["actor"] = actor_.to_json();
  j["critic"] = critic_.to_json();
  j["actor_opt"] = actor_opt_.to_json();
  j["critic_opt"] = critic_opt_.to_json();
  j["rng"] = rng_state(rng_);
  return j;
}

A2cAgent A2cAgent::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "safeslice-a2c" || j.value("version", 0) != 1) {
    throw ParseError("not a version-1 A2C checkpoint");
  }
  A2cAgent agent;
  const auto& s = j.at("settings");
  agent.settings_.gamma = s.at("gamma").get<double>();
  agent.settings_.batch_size = s.at("batch_size").get<std::size_t>();
  agent.settings_.entropy_coef = s.at("entropy_coef").get<double>();
  agent.settings_.actor_lr = s.at("actor_lr").get<double>();
  agent.settings_.critic_lr = s.at("critic_lr").get<double>();
  agent.settings_.hidden = s.at("hidden").get<std::vector<int>>();
  agent.actor_ = Network::from_json(j.at("actor"));
  agent.critic_ = Network::from_json(j.at("critic"));
  agent.actor_opt_ = Optimizer::from_json(j.at("actor_opt"), agent.actor_);
  agent.critic_opt_ = Optimizer::from_json(j.at("critic_opt"), agent.critic_);
  agent.rng_ = rng_from_state(j.at("rng").get<std::string>());
  return agent;
}

// ---------------------------------------------------------------------------
// Replay

void ReplayBuffer::push(const Transition& t) {
  if (capacity_ == 0) return;
  if (items_.size() < capacity_) {
    items_.push_back(t);
  } else {
    items_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  if (items_.size() < count) throw ValidationError("replay buffer holds fewer transitions than the minibatch");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Transition> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

// ---------------------------------------------------------------------------
// SAC-Lagrangian

SacLagrangianAgent::SacLagrangianAgent(std::size_t state_dim, std::size_t action_count, std::vector<std::size_t> constrained,
                                       Eigen::VectorXd thresholds, const SacSettings& settings, std::uint64_t seed)
    : settings_(settings),
      constrained_(std::move(constrained)),
      thresholds_(std::move(thresholds)),
      lambdas_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(constrained_.size()))),
      log_temperature_(std::log(settings.initial_temperature)),
      target_entropy_(settings.target_entropy_scale * std::log(static_cast<double>(action_count))),
      buffer_(settings.buffer_capacity),
      rng_(seed) {
  if (thresholds_.size() != static_cast<Eigen::Index>(constrained_.size())) {
    throw ShapeError("one threshold per constrained slice is required");
  }
  Rng init(derive_seed(seed, {0x5AC}));
  const auto sizes = layer_sizes(state_dim, settings.hidden, action_count);
  actor_ = Network(sizes, nn::Activation::Tanh, nn::Activation::Linear, init);
  shrink_output_layer(actor_, 0.01);
  q1_ = Network(sizes, nn::Activation::Tanh, nn::Activation::Linear, init);
  q2_ = Network(sizes, nn::Activation::Tanh, nn::Activation::Linear, init);
  q1_target_ = q1_;
  q2_target_ = q2_;
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    cost_critics_.emplace_back(sizes, nn::Activation::Tanh, nn::Activation::Linear, init);
    cost_opts_.emplace_back(cost_critics_.back(), settings.critic_lr);
  }
  actor_opt_ = Optimizer(actor_, settings.actor_lr);
  q1_opt_ = Optimizer(q1_, settings.critic_lr);
  q2_opt_ = Optimizer(q2_, settings.critic_lr);
}

void SacLagrangianAgent::set_thresholds(const Eigen::VectorXd& thresholds) {
  if (thresholds.size() != thresholds_.size()) throw ShapeError("one threshold per constrained slice is required");
  thresholds_ = thresholds;
}

Eigen::VectorXd SacLagrangianAgent::policy(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return nn::softmax(actor_.forward(state)).col(0);
}

Eigen::VectorXd SacLagrangianAgent::predicted_cost(std::size_t k, const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return cost_critics_.at(k).forward(state).col(0);
}

std::size_t SacLagrangianAgent::select_action(const Eigen::Ref<const Eigen::VectorXd>& state, SelectionMode mode) {
  const auto p = policy(state);
  return mode == SelectionMode::Greedy ? greedy_index(p) : sample_index(p, rng_);
}

std::optional<SacDiagnostics> SacLagrangianAgent::observe(const Transition& t) {
  buffer_.push(t);
  ++observed_;
  if (buffer_.size() < settings_.minibatch || observed_ % std::max<std::size_t>(1, settings_.update_every) != 0) {
    return std::nullopt;
  }
  auto batch = buffer_.sample(settings_.minibatch, rng_);
  return update(batch);
}

SacDiagnostics SacLagrangianAgent::update(std::span<const Transition> batch) {
  const Matrix states = stack_states(batch, false);
  const Matrix next_states = stack_states(batch, true);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto actions = static_cast<Eigen::Index>(action_count());
  const double inv_n = 1.0 / static_cast<double>(n);
  const double alpha = temperature();
  SacDiagnostics diag;

  // Soft state value of s' under the current policy and target critics.
  const Matrix next_logp = nn::log_softmax(actor_.forward(next_states));
  const Matrix next_p = next_logp.array().exp().matrix();
  const Matrix next_q = q1_target_.forward(next_states).cwiseMin(q2_target_.forward(next_states));
  const Eigen::RowVectorXd next_v =
      (next_p.array() * (next_q.array() - alpha * next_logp.array())).colwise().sum().matrix();

  // Twin critics.
  auto critic_step = [&](Network& q, Optimizer& opt) {
    Network::Cache cache;
    const Matrix out = q.forward(states, &cache);
    Matrix grad = Matrix::Zero(actions, n);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& t = batch[static_cast<std::size_t>(j)];
      const auto a = static_cast<Eigen::Index>(t.action);
      if (a >= actions) throw ShapeError("transition action index out of range");
      const double target = t.reward + (t.terminal ? 0.0 : settings_.gamma * next_v[j]);
      const double err = out(a, j) - target;
      loss += 0.5 * err * err * inv_n;
      grad(a, j) = err * inv_n;
    }
    require_finite(loss, "critic loss");
    opt.step(q, q.backward(cache, grad));
    return loss;
  };
  diag.critic_loss = 0.5 * (critic_step(q1_, q1_opt_) + critic_step(q2_, q2_opt_));

  // Cost critics regress the immediate per-window cost of each action.
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    auto& net = cost_critics_[k];
    Network::Cache cache;
    const Matrix out = net.forward(states, &cache);
    Matrix grad = Matrix::Zero(actions, n);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& t = batch[static_cast<std::size_t>(j)];
      const auto a = static_cast<Eigen::Index>(t.action);
      const double err = out(a, j) - t.cost[static_cast<Eigen::Index>(constrained_[k])];
      loss += 0.5 * err * err * inv_n;
      grad(a, j) = err * inv_n;
    }
    require_finite(loss, "cost critic loss");
    cost_opts_[k].step(net, net.backward(cache, grad));
    diag.cost_loss += loss;
  }

  // Actor: minimize sum_a pi(a)(alpha log pi(a) - Q(a) + sum_k lambda_k Qc_k(a)).
  Network::Cache actor_cache;
  const Matrix logits = actor_.forward(states, &actor_cache);
  const Matrix logp = nn::log_softmax(logits);
  const Matrix p = logp.array().exp().matrix();
  Matrix penalized = q1_.forward(states).cwiseMin(q2_.forward(states));
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    penalized -= lambdas_[static_cast<Eigen::Index>(k)] * cost_critics_[k].forward(states);
  }
  const Matrix inner = alpha * logp - penalized;
  const Eigen::RowVectorXd expected = (p.array() * inner.array()).colwise().sum().matrix();
  Matrix actor_grad = (p.array() * (inner.rowwise() - expected).array()).matrix() * inv_n;
  diag.actor_loss = expected.mean();
  require_finite(diag.actor_loss, "actor loss");
  actor_opt_.step(actor_, actor_.backward(actor_cache, actor_grad));

  // Temperature tracks the entropy target.
  const Eigen::RowVectorXd entropy = -(p.array() * logp.array()).colwise().sum().matrix();
  diag.entropy = entropy.mean();
  log_temperature_ -= settings_.temperature_lr * (diag.entropy - target_entropy_);
  log_temperature_ = std::clamp(log_temperature_, std::log(1e-6), std::log(1e3));
  diag.temperature = temperature();

  // Dual ascent on the multipliers using the minibatch's observed costs.
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    double mean_cost = 0.0;
    for (const auto& t : batch) mean_cost += t.cost[static_cast<Eigen::Index>(constrained_[k])] * inv_n;
    auto& lambda = lambdas_[static_cast<Eigen::Index>(k)];
    lambda = lagrange_step(lambda, settings_.lambda_lr, mean_cost, thresholds_[static_cast<Eigen::Index>(k)]);
  }
  diag.lambdas = lambdas_;

  nn::soft_update(q1_target_, q1_, settings_.polyak);
  nn::soft_update(q2_target_, q2_, settings_.polyak);
  return diag;
}

nlohmann::json SacLagrangianAgent::to_json() const {
  nlohmann::json j;
  j["format"] = "safeslice-sacl";
  j["version"] = 1;
  const auto& s = settings_;
  j["settings"] = {{"gamma", s.gamma},
                   {"minibatch", s.minibatch},
                   {"buffer_capacity", s.buffer_capacity},
                   {"update_every", s.update_every},
                   {"actor_lr", s.actor_lr},
                   {"critic_lr", s.critic_lr},
                   {"temperature_lr", s.temperature_lr},
                   {"initial_temperature", s.initial_temperature},
                   {"target_entropy_scale", s.target_entropy_scale},
                   {"polyak", s.polyak},
                   {"lambda_lr", s.lambda_lr},
                   {"hidden", s.hidden}};
  j["constrained"] = constrained_;
  j["thresholds"] = std::vector<double>(thresholds_.data(), thresholds_.data() + thresholds_.size());
  j["lambdas"] = std::vector<double>(lambdas_.data(), lambdas_.data() + lambdas_.size());
  j["log_temperature"] = log_temperature_;
  j["target_entropy"] = target_entropy_;
  j["observed"] = observed_;
  j["actor"] = actor_.to_json();
  j["q1"] = q1_.to_json();
  j["q2"] = q2_.to_json();
  j["q1_target"] = q1_target_.to_json();
  j["q2_target"] = q2_target_.to_json();
  j["actor_opt"] = actor_opt_.to_json();
  j["q1_opt"] = q1_opt_.to_json();
  j["q2_opt"] = q2_opt_.to_json();
  j["cost_critics"] = nlohmann::json::array();
  j["cost_opts"] = nlohmann::json::array();
  for (std::size_t k = 0; k < cost_critics_.size(); ++k) {
    j["cost_critics"].push_back(cost_critics_[k].to_json());
    j["cost_opts"].push_back(cost_opts_[k].to_json());
  }
  j["rng"] = rng_state(rng_);
  // The replay buffer is not checkpointed; a restored agent refills it.
  return j;
}

SacLagrangianAgent SacLagrangianAgent::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "safeslice-sacl" || j.value("version", 0) != 1) {
    throw ParseError("not a version-1 SAC-L checkpoint");
  }
  SacLagrangianAgent agent;
  const auto& s = j.at("settings");
  auto& st = agent.settings_;
  st.gamma = s.at("gamma").get<double>();
  st.minibatch = s.at("minibatch").get<std::size_t>();
  st.buffer_capacity = s.at("buffer_capacity").get<std::size_t>();
  st.update_every = s.at("update_every").get<std::size_t>();
  st.actor_lr = s.at("actor_lr").get<double>();
  st.critic_lr = s.at("critic_lr").get<double>();
  st.temperature_lr = s.at("temperature_lr").get<double>();
  st.initial_temperature = s.at("initial_temperature").get<double>();
  st.target_entropy_scale = s.at("target_entropy_scale").get<double>();
  st.polyak = s.at("polyak").get<double>();
  st.lambda_lr = s.at("lambda_lr").get<double>();
  st.hidden = s.at("hidden").get<std::vector<int>>();
  agent.constrained_ = j.at("constrained").get<std::vector<std::size_t>>();
  auto thresholds = j.at("thresholds").get<std::vector<double>>();
  auto lambdas = j.at("lambdas").get<std::vector<double>>();
  agent.thresholds_ = Eigen::Map<Eigen::VectorXd>(thresholds.data(), static_cast<Eigen::Index>(thresholds.size()));
  agent.lambdas_ = Eigen::Map<Eigen::VectorXd>(lambdas.data(), static_cast<Eigen::Index>(lambdas.size()));
  agent.log_temperature_ = j.at("log_temperature").get<double>();
  agent.target_entropy_ = j.at("target_entropy").get<double>();
  agent.observed_ = j.at("observed").get<std::size_t>();
  agent.actor_ = Network::from_json(j.at("actor"));
  agent.q1_ = Network::from_json(j.at("q1"));
  agent.q2_ = Network::from_json(j.at("q2"));
  agent.q1_target_ = Network::from_json(j.at("q1_target"));
  agent.q2_target_ = Network::from_json(j.at("q2_target"));
  agent.actor_opt_ = Optimizer::from_json(j.at("actor_opt"), agent.actor_);
  agent.q1_opt_ = Optimizer::from_json(j.at("q1_opt"), agent.q1_);
  agent.q2_opt_ = Optimizer::from_json(j.at("q2_opt"), agent.q2_);
  for (std::size_t k = 0; k < j.at("cost_critics").size(); ++k) {
    agent.cost_critics_.push_back(Network::from_json(j.at("cost_critics")[k]));
    agent.cost_opts_.push_back(Optimizer::from_json(j.at("cost_opts")[k], agent.cost_critics_.back()));
  }
  agent.buffer_ = ReplayBuffer(st.buffer_capacity);
  agent.rng_ = rng_from_state(j.at("rng").get<std::string>());
  return agent;
}

}  // namespace safeslice
