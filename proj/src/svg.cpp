#include "safeslice/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "safeslice/kv.hpp"

namespace safeslice {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  if (v == 0.0) return "0";
  std::string s = format_double(std::round(v * 1e6) / 1e6);
  return s;
}

double nice_step(double span, int count) {
  const double raw = span / std::max(1, count - 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step = norm <= 1.0 ? 1.0 : norm <= 2.0 ? 2.0 : norm <= 2.5 ? 2.5 : norm <= 5.0 ? 5.0 : 10.0;
  return step * mag;
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int count) {
  if (!(hi > lo)) hi = lo + 1.0;
  const double step = nice_step(hi - lo, count);
  std::vector<double> ticks;
  for (double t = std::floor(lo / step) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(t);
  return ticks;
}

std::string render_line_chart(const ChartSpec& spec, const std::vector<Series>& series) {
  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = spec.width - left - right;
  const double ph = spec.height - top - bottom;

  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  std::size_t xmax = 1;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
    xmax = std::max(xmax, s.values.size() > 0 ? s.values.size() - 1 : 0);
  }
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  ymin = std::min(ymin, 0.0);
  const auto yt = nice_ticks(ymin, ymax);
  const double y0 = yt.front(), y1 = std::max(yt.back(), ymax);
  const auto xt = nice_ticks(0, static_cast<double>(xmax));
  const double x1 = std::max(xt.back(), static_cast<double>(xmax));

  auto px = [&](double x) { return left + pw * x / x1; };
  auto py = [&](double y) { return top + ph * (1.0 - (y - y0) / (y1 - y0)); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(spec.title) << "</text>\n";

  for (double t : yt) {
    out << "<line x1=\"" << fixed(left) << "\" x2=\"" << fixed(left + pw) << "\" y1=\"" << fixed(py(t)) << "\" y2=\""
        << fixed(py(t)) << "\" stroke=\"#e0e0e0\"/>\n";
    out << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(py(t) + 4) << "\" text-anchor=\"end\">"
        << tick_label(t) << "</text>\n";
  }
  for (double t : xt) {
    out << "<line x1=\"" << fixed(px(t)) << "\" x2=\"" << fixed(px(t)) << "\" y1=\"" << fixed(top + ph) << "\" y2=\""
        << fixed(top + ph + 5) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fixed(px(t)) << "\" y=\"" << fixed(top + ph + 19) << "\" text-anchor=\"middle\">"
        << tick_label(t) << "</text>\n";
  }
  out << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(pw) << "\" height=\""
      << fixed(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(spec.height - 12.0) << "\" text-anchor=\"middle\">"
      << escape(spec.x_label) << "</text>\n";
  out << "<text transform=\"translate(18," << fixed(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    const std::size_t n = s.values.size();
    const std::size_t stride = std::max<std::size_t>(1, (n + spec.max_points - 1) / std::max<std::size_t>(1, spec.max_points));
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    bool first = true;
    for (std::size_t k = 0; k < n; k += stride) {
      if (!std::isfinite(s.values[k])) continue;
      out << (first ? "" : " ") << fixed(px(static_cast<double>(k))) << ',' << fixed(py(s.values[k]));
      first = false;
    }
    if (n > 0 && (n - 1) % stride != 0 && std::isfinite(s.values[n - 1])) {
      out << ' ' << fixed(px(static_cast<double>(n - 1))) << ',' << fixed(py(s.values[n - 1]));
    }
    out << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    out << "<line x1=\"" << fixed(left + pw + 12) << "\" x2=\"" << fixed(left + pw + 32) << "\" y1=\"" << fixed(ly)
        << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fixed(left + pw + 38) << "\" y=\"" << fixed(ly + 4) << "\">" << escape(s.label)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_line_chart(const std::filesystem::path& path, const ChartSpec& spec, const std::vector<Series>& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << render_line_chart(spec, series);
}

}  // namespace safeslice
