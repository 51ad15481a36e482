#include "safeslice/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "safeslice/errors.hpp"
#include "safeslice/kv.hpp"
#include "safeslice/signals.hpp"

namespace safeslice {

StateVector compute_state(const Eigen::Ref<const Eigen::VectorXd>& demand_bytes) {
  const double total = demand_bytes.sum();
  const auto n = demand_bytes.size();
  if (n == 0) return StateVector();
  if (!(total > 0)) return StateVector::Constant(n, 1.0 / static_cast<double>(n));
  return demand_bytes / total;
}

QueueUpdate next_queue_length(std::int64_t previous, std::int64_t arrivals, std::int64_t transmitted,
                              std::int64_t capacity) {
  const std::int64_t offered = previous + arrivals;
  const std::int64_t sent = std::clamp<std::int64_t>(transmitted, 0, offered);
  const std::int64_t remaining = offered - sent;
  return {std::min(remaining, capacity), std::max<std::int64_t>(0, remaining - capacity)};
}

void SliceQueue::reset_window() {
  window_delivered_ = 0;
  window_dropped_ = 0;
  window_latency_sum_ms_ = 0.0;
  window_demand_bytes_ = 0.0;
}

std::int64_t SliceQueue::serve_user(std::size_t user, std::int64_t bytes, std::int64_t tti, double tti_ms,
                                    std::int64_t& departed) {
  auto& fifo = users_[user];
  std::int64_t used = 0;
  while (bytes > used && !fifo.empty()) {
    auto& head = fifo.front();
    const std::int64_t take = std::min<std::int64_t>(bytes - used, head.remaining_bytes);
    head.remaining_bytes -= static_cast<std::uint32_t>(take);
    used += take;
    if (head.remaining_bytes == 0) {
      window_latency_sum_ms_ += static_cast<double>(tti - head.arrival_tti + 1) * tti_ms;
      ++window_delivered_;
      ++delivered_total_;
      ++departed;
      --length_;
      fifo.pop_front();
    }
  }
  return used;
}

std::int64_t SliceQueue::step(std::span<const PacketArrival> arrivals, std::int64_t budget_bytes, std::int64_t tti,
                              double tti_ms) {
  tti_arrivals_.clear();
  for (const auto& a : arrivals) {
    if (a.user_id >= users_.size()) users_.resize(a.user_id + 1);
    const auto seq = next_sequence_++;
    users_[a.user_id].push_back({a.arrival_tti, a.size_bytes, a.size_bytes, a.user_id, seq});
    tti_arrivals_.emplace_back(a.user_id, seq);
    ++length_;
    ++arrived_total_;
    window_demand_bytes_ += a.size_bytes;
  }

  std::int64_t departed = 0;
  if (budget_bytes > 0 && length_ > 0) {
    backlogged_.clear();
    for (std::size_t u = 0; u < users_.size(); ++u) {
      if (!users_[u].empty()) backlogged_.push_back(u);
    }
    const auto k = static_cast<std::int64_t>(backlogged_.size());
    const std::int64_t share = budget_bytes / k;
    std::int64_t leftover = budget_bytes - share * k;
    if (share > 0) {
      for (auto u : backlogged_) leftover += share - serve_user(u, share, tti, tti_ms, departed);
    }
    for (auto u : backlogged_) {
      if (leftover == 0) break;
      if (!users_[u].empty()) leftover -= serve_user(u, leftover, tti, tti_ms, departed);
    }
  }

  // Tail drop of this TTI's newest arrivals keeps q_t <= q_max.
  for (auto it = tti_arrivals_.rbegin(); it != tti_arrivals_.rend() && length_ > capacity_; ++it) {
    auto& fifo = users_[it->first];
    if (!fifo.empty() && fifo.back().sequence == it->second) {
      fifo.pop_back();
      --length_;
      ++dropped_total_;
      ++window_dropped_;
    }
  }
  return departed;
}

double window_cost(const SliceQueue& queue, double latency_cap_ms) {
  if (queue.window_delivered() > 0) {
    return std::min(latency_cap_ms, queue.window_latency_sum_ms() / static_cast<double>(queue.window_delivered()));
  }
  return queue.length() > 0 ? latency_cap_ms : 0.0;
}

BaseStation::BaseStation(const ExperimentConfig& config)
    : total_bandwidth_(config.sim.total_bandwidth_bytes), tti_ms_(config.sim.tti_ms), per_slice_(config.slices.size()) {
  for (const auto& s : config.slices) queues_.emplace_back(s.queue_capacity);
  allocation_.shares = Eigen::VectorXi::Zero(static_cast<Eigen::Index>(config.slices.size()));
}

void BaseStation::set_allocation(const AllocationAction& allocation) {
  if (allocation.shares.size() != static_cast<Eigen::Index>(queues_.size())) {
    throw ShapeError("allocation must have one share per slice");
  }
  allocation_ = allocation;
}

std::int64_t BaseStation::budget_bytes(std::size_t slice) const {
  return static_cast<std::int64_t>(
      std::floor(allocation_.shares[static_cast<Eigen::Index>(slice)] / 100.0 * total_bandwidth_));
}

void BaseStation::step_tti(std::span<const PacketArrival> arrivals) {
  for (auto& v : per_slice_) v.clear();
  for (const auto& a : arrivals) {
    if (a.slice_id >= per_slice_.size()) throw ShapeError("arrival for unknown slice");
    per_slice_[a.slice_id].push_back(a);
  }
  for (std::size_t s = 0; s < queues_.size(); ++s) {
    queues_[s].step(per_slice_[s], budget_bytes(s), current_tti_, tti_ms_);
  }
  ++current_tti_;
}

Eigen::VectorXd BaseStation::window_demand() const {
  Eigen::VectorXd d(static_cast<Eigen::Index>(queues_.size()));
  for (std::size_t s = 0; s < queues_.size(); ++s) d[static_cast<Eigen::Index>(s)] = queues_[s].window_demand_bytes();
  return d;
}

void BaseStation::begin_window() {
  for (auto& q : queues_) q.reset_window();
}

WindowMetrics run_window(BaseStation& station, const AllocationAction& allocation, std::span<SliceTraffic> traffic,
                         const ExperimentConfig& config, std::size_t window_id) {
  const auto n = static_cast<Eigen::Index>(config.slices.size());
  if (traffic.size() != config.slices.size()) throw ShapeError("one traffic source per slice is required");
  station.set_allocation(allocation);
  station.begin_window();

  const std::int64_t begin = station.current_tti();
  const std::int64_t end = begin + config.sim.window_ttis;
  std::vector<PacketArrival> arrivals;
  for (auto& t : traffic) t.append_arrivals(begin, end, arrivals);
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const PacketArrival& a, const PacketArrival& b) { return a.arrival_tti < b.arrival_tti; });

  std::size_t cursor = 0;
  for (std::int64_t tti = begin; tti < end; ++tti) {
    std::size_t stop = cursor;
    while (stop < arrivals.size() && arrivals[stop].arrival_tti == tti) ++stop;
    station.step_tti(std::span<const PacketArrival>(arrivals.data() + cursor, stop - cursor));
    cursor = stop;
  }

  WindowMetrics m;
  m.window_id = window_id;
  m.allocation = allocation;
  m.cost_ms.resize(n);
  m.delivered.resize(n);
  m.dropped.resize(n);
  m.backlog.resize(n);
  m.violations.resize(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto& q = station.queues()[static_cast<std::size_t>(s)];
    m.cost_ms[s] = window_cost(q, config.sim.latency_cap_ms);
    m.delivered[s] = q.window_delivered();
    m.dropped[s] = q.window_dropped();
    m.backlog[s] = static_cast<std::int64_t>(q.length());
    m.violations[static_cast<std::size_t>(s)] =
        m.cost_ms[s] > config.slices[static_cast<std::size_t>(s)].sla.instantaneous_threshold_ms;
  }
  m.demand_bytes = station.window_demand();
  m.next_state = compute_state(m.demand_bytes);
  m.consumed = allocation.total() / 100.0;
  m.reward = compute_reward(config.reward, config.slices, allocation.shares, m.cost_ms);
  return m;
}

SlicingEnv::SlicingEnv(std::shared_ptr<const ExperimentConfig> config, TrafficLevel level, std::uint64_t seed)
    : config_(std::move(config)), level_(std::move(level)), seed_(seed) {
  if (level_.user_means.size() != config_->slices.size()) {
    throw ValidationError("traffic level '" + level_.name + "' needs one user mean per slice");
  }
  resample_population();
}

void SlicingEnv::resample_population() {
  const auto& cfg = *config_;
  const auto n = cfg.slices.size();
  Rng population(derive_seed(seed_, {1, epoch_}));
  user_counts_.assign(n, 0);
  traffic_.clear();
  for (std::size_t s = 0; s < n; ++s) {
    user_counts_[s] = sample_user_count(level_.user_means[s], population);
    Rng model_rng(derive_seed(seed_, {2, epoch_, s}));
    auto model = make_traffic_model(cfg.slices[s].service_kind, level_, model_rng);
    traffic_.emplace_back(std::move(model), static_cast<std::uint32_t>(s), user_counts_[s],
                          derive_seed(seed_, {3, epoch_, s}), cfg.sim.tti_ms);
  }
  station_ = BaseStation(cfg);
  state_ = StateVector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  previous_cost_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  ++epoch_;
}

WindowMetrics SlicingEnv::step(const AllocationAction& allocation) {
  auto m = run_window(station_, allocation, traffic_, *config_, window_);
  ++window_;
  state_ = m.next_state;
  previous_cost_ = m.cost_ms;
  return m;
}

void write_window_metrics_header(std::ostream& out) {
  out << "window,slice,cost_ms,delivered,dropped,consumed_frac,violation\n";
}

void write_window_metrics(std::ostream& out, const WindowMetrics& m) {
  for (Eigen::Index s = 0; s < m.cost_ms.size(); ++s) {
    out << m.window_id << ',' << (s + 1) << ',' << format_double(m.cost_ms[s]) << ',' << m.delivered[s] << ','
        << m.dropped[s] << ',' << format_double(m.consumed) << ',' << (m.violations[static_cast<std::size_t>(s)] ? 1 : 0)
        << '\n';
  }
}

}  // namespace safeslice
