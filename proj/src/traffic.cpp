#include "safeslice/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "safeslice/errors.hpp"
#include "safeslice/kv.hpp"

namespace safeslice {

double TruncatedPareto::mean() const {
  const double ratio = std::pow(scale / upper, shape);
  const double norm = std::pow(scale, shape) / (1.0 - ratio);
  if (std::abs(shape - 1.0) < 1e-12) return norm * (std::log(upper) - std::log(scale));
  return norm * shape / (shape - 1.0) * (std::pow(scale, 1.0 - shape) - std::pow(upper, 1.0 - shape));
}

double TruncatedPareto::quantile(double u) const {
  const double ratio = std::pow(scale / upper, shape);
  const double x = scale / std::pow(1.0 - u * (1.0 - ratio), 1.0 / shape);
  return std::min(x, upper);
}

double TruncatedPareto::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return quantile(unit(rng));
}

TruncatedPareto TruncatedPareto::with_mean(double shape, double target_mean, double upper) {
  if (!(shape > 0) || !(target_mean > 0) || !(upper >= target_mean)) {
    throw ValidationError("truncated Pareto needs shape > 0 and upper bound >= mean > 0");
  }
  // mean(scale) increases monotonically from 0 to `upper` on (0, upper).
  double lo = 1e-12 * upper;
  double hi = upper * (1.0 - 1e-12);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    TruncatedPareto p{shape, mid, upper};
    (p.mean() < target_mean ? lo : hi) = mid;
  }
  return {shape, 0.5 * (lo + hi), upper};
}

void VrTrace::refresh_stats() {
  double ia = 0.0;
  double sz = 0.0;
  for (const auto& r : records) {
    ia += r.interarrival_ms;
    sz += r.size_bytes;
  }
  const auto n = static_cast<double>(records.size());
  mean_interarrival_ms = records.empty() ? 0.0 : ia / n;
  mean_size_bytes = records.empty() ? 0.0 : sz / n;
}

VrTrace load_vr_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open VR trace " + path.string());
  VrTrace trace;
  trace.source_label = path.filename().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (line_no == 1) {
      if (text != "interarrival_ms,size_bytes") {
        throw ParseError(path.string() + ":1: expected header 'interarrival_ms,size_bytes'");
      }
      continue;
    }
    if (text.empty()) continue;
    auto fields = split(text, ',');
    auto bad = [&] { return ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed row '" + text + "'"); };
    if (fields.size() != 2) throw bad();
    double values[2];
    for (int i = 0; i < 2; ++i) {
      try {
        std::size_t used = 0;
        values[i] = std::stod(fields[static_cast<std::size_t>(i)], &used);
        if (used != fields[static_cast<std::size_t>(i)].size()) throw bad();
      } catch (const std::logic_error&) {
        throw bad();
      }
      if (!(values[i] > 0) || !std::isfinite(values[i])) throw bad();
    }
    trace.records.push_back({values[0], values[1]});
  }
  if (trace.records.empty()) throw ParseError(path.string() + ": empty trace");
  trace.refresh_stats();
  return trace;
}

void save_vr_trace(const VrTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "interarrival_ms,size_bytes\n";
  for (const auto& r : trace.records) out << format_double(r.interarrival_ms) << ',' << format_double(r.size_bytes) << '\n';
}

VrTrace synth_vr_trace(double mean_interarrival_ms, double mean_size_bytes, std::size_t length, Rng& rng) {
  if (length == 0) throw ValidationError("synthetic VR trace needs at least one record");
  if (!(mean_interarrival_ms > 0) || !(mean_size_bytes > 0)) throw ValidationError("VR trace means must be positive");
  constexpr double cv = 0.3;
  const double sigma = std::sqrt(std::log1p(cv * cv));
  std::lognormal_distribution<double> ia(std::log(mean_interarrival_ms) - 0.5 * sigma * sigma, sigma);
  std::lognormal_distribution<double> sz(std::log(mean_size_bytes) - 0.5 * sigma * sigma, sigma);
  VrTrace trace;
  trace.source_label = "synthetic-lognormal";
  trace.records.reserve(length);
  for (std::size_t i = 0; i < length; ++i) trace.records.push_back({ia(rng), sz(rng)});
  trace.refresh_stats();
  const double ia_scale = mean_interarrival_ms / trace.mean_interarrival_ms;
  const double sz_scale = mean_size_bytes / trace.mean_size_bytes;
  for (auto& r : trace.records) {
    r.interarrival_ms *= ia_scale;
    r.size_bytes *= sz_scale;
  }
  trace.refresh_stats();
  return trace;
}

TrafficModel make_traffic_model(ServiceKind kind, const TrafficLevel& level, Rng& rng) {
  switch (kind) {
    case ServiceKind::Video: return VideoModel{};
    case ServiceKind::VoNR: return VoNRModel{};
    case ServiceKind::VrGaming: {
      auto trace = std::make_shared<VrTrace>(synth_vr_trace(level.vr_interarrival_ms, level.vr_size_bytes, 4096, rng));
      return VrTraceModel{std::move(trace)};
    }
  }
  return VideoModel{};
}

SliceTraffic::SliceTraffic(TrafficModel model, std::uint32_t slice_id, std::size_t user_count, std::uint64_t seed,
                           double tti_ms)
    : model_(std::move(model)), slice_id_(slice_id), tti_ms_(tti_ms), users_(user_count), rng_(seed) {
  if (auto* vr = std::get_if<VrTraceModel>(&model_)) {
    if (!vr->trace || vr->trace->records.empty()) throw ValidationError("VR traffic needs a non-empty trace");
  }
  // Random phase per user so streams are not synchronized at t = 0.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& user : users_) {
    if (auto* vr = std::get_if<VrTraceModel>(&model_)) {
      std::uniform_int_distribution<std::size_t> pick(0, vr->trace->records.size() - 1);
      user.trace_cursor = pick(rng_);
    }
    user.next_arrival_ms = unit(rng_) * draw_interarrival(user);
  }
}

double SliceTraffic::draw_interarrival(UserStream& user) {
  return std::visit(
      [&](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, VideoModel>) {
          return m.interarrival.sample(rng_);
        } else if constexpr (std::is_same_v<M, VoNRModel>) {
          return std::uniform_real_distribution<double>(0.0, m.max_interarrival_ms)(rng_);
        } else {
          return m.trace->records[user.trace_cursor].interarrival_ms;
        }
      },
      model_);
}

std::uint32_t SliceTraffic::draw_size(UserStream& user) {
  double bytes = std::visit(
      [&](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, VideoModel>) {
          return m.size.sample(rng_);
        } else if constexpr (std::is_same_v<M, VoNRModel>) {
          return m.size_bytes;
        } else {
          const double size = m.trace->records[user.trace_cursor].size_bytes;
          user.trace_cursor = (user.trace_cursor + 1) % m.trace->records.size();
          return size;
        }
      },
      model_);
  return static_cast<std::uint32_t>(std::max(1.0, std::round(bytes)));
}

void SliceTraffic::append_arrivals(std::int64_t begin_tti, std::int64_t end_tti, std::vector<PacketArrival>& out) {
  const auto first = out.size();
  const double end_ms = static_cast<double>(end_tti) * tti_ms_;
  for (std::size_t u = 0; u < users_.size(); ++u) {
    auto& user = users_[u];
    while (user.next_arrival_ms < end_ms) {
      const auto tti = static_cast<std::int64_t>(std::floor(user.next_arrival_ms / tti_ms_));
      const auto size = draw_size(user);
      if (tti >= begin_tti) out.push_back({tti, size, static_cast<std::uint32_t>(u), slice_id_});
      user.next_arrival_ms += draw_interarrival(user);
    }
  }
  std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                   [](const PacketArrival& a, const PacketArrival& b) { return a.arrival_tti < b.arrival_tti; });
}

std::vector<PacketArrival> SliceTraffic::arrivals(std::int64_t begin_tti, std::int64_t end_tti) {
  std::vector<PacketArrival> out;
  append_arrivals(begin_tti, end_tti, out);
  return out;
}

std::vector<PacketArrival> sample_arrivals(const TrafficModel& model, std::size_t user_count, std::int64_t begin_tti,
                                           std::int64_t end_tti, Rng& rng, std::uint32_t slice_id, double tti_ms) {
  if (end_tti <= begin_tti) throw ValidationError("arrival window must be non-empty");
  SliceTraffic traffic(model, slice_id, user_count, rng(), tti_ms);
  return traffic.arrivals(begin_tti, end_tti);
}

std::size_t sample_user_count(double mean, Rng& rng) {
  if (mean < 0) throw ValidationError("user-count mean must be non-negative");
  if (mean == 0) return 0;
  return static_cast<std::size_t>(std::poisson_distribution<long>(mean)(rng));
}

}  // namespace safeslice
