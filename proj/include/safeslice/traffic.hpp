#pragma once

// Per-slice packet arrival processes: truncated-Pareto video, uniform VoNR and
// VR trace replay, plus Poisson user populations.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "safeslice/config.hpp"
#include "safeslice/rng.hpp"

namespace safeslice {

struct PacketArrival {
  std::int64_t arrival_tti = 0;
  std::uint32_t size_bytes = 0;
  std::uint32_t user_id = 0;
  std::uint32_t slice_id = 0;  // 0-based slice index

  bool operator==(const PacketArrival&) const = default;
};

/// Bounded Pareto on [scale, upper] sampled by inverse CDF.
struct TruncatedPareto {
  double shape = 1.2;
  double scale = 1.0;
  double upper = 2.0;

  double mean() const;
  double sample(Rng& rng) const;
  double quantile(double u) const;

  /// Solves for the scale giving `target_mean` with fixed `shape` and `upper`.
  static TruncatedPareto with_mean(double shape, double target_mean, double upper);
};

struct VrTrace {
  struct Record {
    double interarrival_ms;
    double size_bytes;
    bool operator==(const Record&) const = default;
  };
  std::vector<Record> records;
  std::string source_label;
  double mean_interarrival_ms = 0.0;
  double mean_size_bytes = 0.0;

  /// Recomputes the stored means from the records.
  void refresh_stats();
};

VrTrace load_vr_trace(const std::filesystem::path& path);
void save_vr_trace(const VrTrace& trace, const std::filesystem::path& path);

/// Lognormal interarrivals and sizes (coefficient of variation 0.3) rescaled
/// so the empirical means equal the requested ones.
VrTrace synth_vr_trace(double mean_interarrival_ms, double mean_size_bytes, std::size_t length, Rng& rng);

struct VideoModel {
  TruncatedPareto interarrival = TruncatedPareto::with_mean(1.2, 6.0, 12.5);
  TruncatedPareto size = TruncatedPareto::with_mean(1.2, 100.0, 250.0);
};

struct VoNRModel {
  double max_interarrival_ms = 160.0;
  double size_bytes = 40.0;
};

struct VrTraceModel {
  std::shared_ptr<const VrTrace> trace;
};

using TrafficModel = std::variant<VideoModel, VoNRModel, VrTraceModel>;

/// Traffic model of a service kind at a given level. VR levels get a
/// synthetic trace seeded from `rng`.
TrafficModel make_traffic_model(ServiceKind kind, const TrafficLevel& level, Rng& rng);

/// Stateful arrival generator for all users of one slice. Copyable: a copy
/// continues the identical stream.
class SliceTraffic {
 public:
  SliceTraffic() = default;
  SliceTraffic(TrafficModel model, std::uint32_t slice_id, std::size_t user_count, std::uint64_t seed,
               double tti_ms = 1.0);

  /// Arrivals with arrival_tti in [begin_tti, end_tti), sorted by (tti, user).
  /// Windows must be requested in increasing, contiguous order.
  std::vector<PacketArrival> arrivals(std::int64_t begin_tti, std::int64_t end_tti);
  void append_arrivals(std::int64_t begin_tti, std::int64_t end_tti, std::vector<PacketArrival>& out);

  std::size_t user_count() const { return users_.size(); }
  const TrafficModel& model() const { return model_; }

 private:
  struct UserStream {
    double next_arrival_ms = 0.0;
    std::size_t trace_cursor = 0;
  };

  double draw_interarrival(UserStream& user);
  std::uint32_t draw_size(UserStream& user);

  TrafficModel model_;
  std::uint32_t slice_id_ = 0;
  double tti_ms_ = 1.0;
  std::vector<UserStream> users_;
  Rng rng_;
};

/// One window of arrivals from a freshly started population.
std::vector<PacketArrival> sample_arrivals(const TrafficModel& model, std::size_t user_count,
                                           std::int64_t begin_tti, std::int64_t end_tti, Rng& rng,
                                           std::uint32_t slice_id = 0, double tti_ms = 1.0);

std::size_t sample_user_count(double mean, Rng& rng);

}  // namespace safeslice
