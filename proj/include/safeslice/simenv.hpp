#pragma once

// Packet-level base-station simulator: per-slice queues, round-robin
// intra-slice scheduling each TTI and window-level measurement.

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/traffic.hpp"

namespace safeslice {

using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Slice contributions to total demand; sums to 1.
using StateVector = Eigen::VectorXd;

/// kappa_s = D_s / sum D; uniform when there is no demand.
StateVector compute_state(const Eigen::Ref<const Eigen::VectorXd>& demand_bytes);

struct QueueUpdate {
  std::int64_t length = 0;
  std::int64_t dropped = 0;
};

/// q_t = min(q_{t-1} + H_{t-1} - n_{t-1}, q_max), with n clamped to q + H.
QueueUpdate next_queue_length(std::int64_t previous, std::int64_t arrivals, std::int64_t transmitted,
                              std::int64_t capacity);

struct QueuedPacket {
  std::int64_t arrival_tti = 0;
  std::uint32_t remaining_bytes = 0;
  std::uint32_t original_bytes = 0;
  std::uint32_t user_id = 0;
  std::uint64_t sequence = 0;
};

class SliceQueue {
 public:
  explicit SliceQueue(std::size_t capacity = 2000) : capacity_(capacity) {}

  std::size_t length() const { return length_; }
  std::size_t capacity() const { return capacity_; }
  const std::vector<std::deque<QueuedPacket>>& user_queues() const { return users_; }

  std::int64_t arrived_total() const { return arrived_total_; }
  std::int64_t delivered_total() const { return delivered_total_; }
  std::int64_t dropped_total() const { return dropped_total_; }

  // Counters reset at each window start.
  std::int64_t window_delivered() const { return window_delivered_; }
  std::int64_t window_dropped() const { return window_dropped_; }
  std::int64_t window_transmitted() const { return window_delivered_; }
  double window_latency_sum_ms() const { return window_latency_sum_ms_; }
  double window_demand_bytes() const { return window_demand_bytes_; }
  void reset_window();

  /// One TTI: enqueue `arrivals`, serve `budget_bytes` round-robin across
  /// backlogged users, then tail-drop this TTI's newest arrivals beyond
  /// capacity. Returns the number of packets that departed.
  std::int64_t step(std::span<const PacketArrival> arrivals, std::int64_t budget_bytes, std::int64_t tti,
                    double tti_ms);

 private:
  std::int64_t serve_user(std::size_t user, std::int64_t bytes, std::int64_t tti, double tti_ms,
                          std::int64_t& departed);

  std::vector<std::deque<QueuedPacket>> users_;
  std::size_t length_ = 0;
  std::size_t capacity_;
  std::uint64_t next_sequence_ = 0;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> tti_arrivals_;  // (user, sequence)
  std::vector<std::size_t> backlogged_;

  std::int64_t arrived_total_ = 0;
  std::int64_t delivered_total_ = 0;
  std::int64_t dropped_total_ = 0;
  std::int64_t window_delivered_ = 0;
  std::int64_t window_dropped_ = 0;
  double window_latency_sum_ms_ = 0.0;
  double window_demand_bytes_ = 0.0;
};

struct WindowMetrics {
  std::size_t window_id = 0;
  AllocationAction allocation;
  Eigen::VectorXd cost_ms;  // per-slice C_{Omega,s}
  CountVector delivered;
  CountVector dropped;
  CountVector backlog;       // packets queued at window end
  Eigen::VectorXd demand_bytes;
  StateVector next_state;    // kappa measured over this window
  double consumed = 0.0;     // sum b / 100
  double reward = 0.0;
  std::vector<bool> violations;  // cost > instantaneous threshold
};

class BaseStation {
 public:
  BaseStation() = default;
  explicit BaseStation(const ExperimentConfig& config);

  void set_allocation(const AllocationAction& allocation);
  const AllocationAction& allocation() const { return allocation_; }

  /// `arrivals` must all carry the current TTI.
  void step_tti(std::span<const PacketArrival> arrivals);

  std::int64_t current_tti() const { return current_tti_; }
  const std::vector<SliceQueue>& queues() const { return queues_; }
  Eigen::VectorXd window_demand() const;
  std::int64_t budget_bytes(std::size_t slice) const;

  void begin_window();

  double tti_ms() const { return tti_ms_; }

 private:
  std::vector<SliceQueue> queues_;
  AllocationAction allocation_;
  double total_bandwidth_ = 18750.0;
  double tti_ms_ = 1.0;
  std::int64_t current_tti_ = 0;
  std::vector<std::vector<PacketArrival>> per_slice_;
};

/// Window cost: mean latency of delivered packets (capped), the cap when
/// nothing departed but packets wait, 0 when idle.
double window_cost(const SliceQueue& queue, double latency_cap_ms);

/// Runs `window_ttis` TTIs under `allocation` and measures the window.
WindowMetrics run_window(BaseStation& station, const AllocationAction& allocation, std::span<SliceTraffic> traffic,
                         const ExperimentConfig& config, std::size_t window_id);

/// Simulator plus traffic sources for one traffic level. Copies are
/// independent and replay identical traffic.
class SlicingEnv {
 public:
  SlicingEnv(std::shared_ptr<const ExperimentConfig> config, TrafficLevel level, std::uint64_t seed);

  /// Redraws user counts and VR traces, then restarts with empty queues.
  void resample_population();

  WindowMetrics step(const AllocationAction& allocation);

  const StateVector& state() const { return state_; }
  const Eigen::VectorXd& previous_cost() const { return previous_cost_; }
  const std::vector<std::size_t>& user_counts() const { return user_counts_; }
  const ExperimentConfig& config() const { return *config_; }
  const BaseStation& station() const { return station_; }
  const TrafficLevel& level() const { return level_; }
  std::size_t windows_run() const { return window_; }

  /// Replaces the SLA of every slice (thresholds shift between scenarios).
  void set_config(std::shared_ptr<const ExperimentConfig> config) { config_ = std::move(config); }

 private:
  std::shared_ptr<const ExperimentConfig> config_;
  TrafficLevel level_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> user_counts_;
  std::vector<SliceTraffic> traffic_;
  BaseStation station_;
  StateVector state_;
  Eigen::VectorXd previous_cost_;
  std::size_t window_ = 0;
};

void write_window_metrics_header(std::ostream& out);
void write_window_metrics(std::ostream& out, const WindowMetrics& metrics);

}  // namespace safeslice
