#pragma once

// Minimal static SVG charts: line plots of several series and a histogram
// with an optional fitted Gumbel density on top. Output depends only on the
// inputs, so re-rendering produces identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lpm::svg {

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct GumbelOverlay {
  double location = 0.0;
  double scale = 1.0;
};

namespace detail {

inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 420.0;
inline constexpr double kLeft = 70.0;
inline constexpr double kRight = 150.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 50.0;

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return palette[i % (sizeof palette / sizeof *palette)];
}

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline void pad(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

inline void open(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
}

inline void axes(std::ostringstream& out, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double l = f.px(f.x0), r = f.px(f.x1), b = f.py(f.y0), t = f.py(f.y1);
  out << "<rect x=\"" << num(l) << "\" y=\"" << num(t) << "\" width=\"" << num(r - l) << "\" height=\"" << num(b - t)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(b + 16) << "\" text-anchor=\"middle\">" << num(x)
        << "</text>\n";
    out << "<text x=\"" << num(l - 6) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">" << num(y)
        << "</text>\n";
  }
  out << "<text x=\"" << num((l + r) / 2) << "\" y=\"" << num(kHeight - 10) << "\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
  out << "<text x=\"16\" y=\"" << num((t + b) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num((t + b) / 2) << ")\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& out, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 14.0 + 18.0 * static_cast<double>(i);
    const double x = kWidth - kRight + 12.0;
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(y - 4) << "\" x2=\"" << num(x + 18) << "\" y2=\""
        << num(y - 4) << "\" stroke=\"" << color(i) << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(x + 24) << "\" y=\"" << num(y) << "\">" << escape(names[i]) << "</text>\n";
  }
}

}  // namespace detail

inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<Series>& series) {
  using namespace detail;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      x0 = std::min(x0, s.xs[i]);
      x1 = std::max(x1, s.xs[i]);
      y0 = std::min(y0, s.ys[i]);
      y1 = std::max(y1, s.ys[i]);
    }
  }
  pad(x0, x1);
  pad(y0, y1);
  const Frame f{x0, x1, y0, y1};
  std::ostringstream out;
  open(out, title);
  axes(out, f, xlabel, ylabel);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    out << "<polyline fill=\"none\" stroke=\"" << color(k) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      out << num(f.px(s.xs[i])) << ',' << num(f.py(s.ys[i])) << ' ';
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      out << "<circle cx=\"" << num(f.px(s.xs[i])) << "\" cy=\"" << num(f.py(s.ys[i])) << "\" r=\"3\" fill=\""
          << color(k) << "\"/>\n";
    }
  }
  legend(out, names);
  out << "</svg>\n";
  return out.str();
}

/// Density-scaled histogram; the overlay draws the Gumbel(location, scale) density.
inline std::string histogram(const std::string& title, const std::string& xlabel, std::vector<double> samples,
                             std::optional<GumbelOverlay> overlay = std::nullopt, std::size_t bins = 40) {
  using namespace detail;
  samples.erase(std::remove_if(samples.begin(), samples.end(), [](double x) { return !std::isfinite(x); }),
                samples.end());
  std::sort(samples.begin(), samples.end());
  double x0 = samples.empty() ? 0.0 : samples.front();
  double x1 = samples.empty() ? 1.0 : samples.back();
  // Trim the extreme 0.1% on each side so a single outlier does not flatten the plot.
  if (samples.size() >= 1000) {
    x0 = samples[samples.size() / 1000];
    x1 = samples[samples.size() - 1 - samples.size() / 1000];
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  const double width = (x1 - x0) / static_cast<double>(bins);
  std::vector<double> density(bins, 0.0);
  for (double x : samples) {
    if (x < x0 || x > x1) continue;
    auto b = static_cast<std::size_t>((x - x0) / width);
    density[std::min(b, bins - 1)] += 1.0;
  }
  const double total = static_cast<double>(std::max<std::size_t>(samples.size(), 1));
  double ymax = 0.0;
  for (auto& d : density) {
    d /= total * width;
    ymax = std::max(ymax, d);
  }
  auto gumbel_pdf = [&](double x) {
    const double z = (x - overlay->location) / overlay->scale;
    return std::exp(-z - std::exp(-z)) / overlay->scale;
  };
  if (overlay) {
    for (std::size_t i = 0; i <= 200; ++i) ymax = std::max(ymax, gumbel_pdf(x0 + (x1 - x0) * i / 200.0));
  }
  const Frame f{x0, x1, 0.0, ymax > 0.0 ? ymax * 1.05 : 1.0};
  std::ostringstream out;
  open(out, title);
  axes(out, f, xlabel, "density");
  for (std::size_t b = 0; b < bins; ++b) {
    const double l = f.px(x0 + width * static_cast<double>(b));
    const double r = f.px(x0 + width * static_cast<double>(b + 1));
    const double t = f.py(density[b]);
    out << "<rect x=\"" << num(l) << "\" y=\"" << num(t) << "\" width=\"" << num(r - l) << "\" height=\""
        << num(f.py(0.0) - t) << "\" fill=\"#9ecae1\" stroke=\"#3182bd\" stroke-width=\"0.5\"/>\n";
  }
  std::vector<std::string> names{"samples"};
  if (overlay) {
    out << "<polyline fill=\"none\" stroke=\"" << color(1) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i <= 200; ++i) {
      const double x = x0 + (x1 - x0) * static_cast<double>(i) / 200.0;
      out << num(f.px(x)) << ',' << num(f.py(gumbel_pdf(x))) << ' ';
    }
    out << "\"/>\n";
    names.push_back("Gumbel(" + num(overlay->location) + ", " + num(overlay->scale) + ")");
  }
  // Legend: first entry uses the bar colour rather than the palette.
  const double y = kTop + 14.0;
  const double x = kWidth - kRight + 12.0;
  out << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 10) << "\" width=\"18\" height=\"10\" fill=\"#9ecae1\"/>\n";
  out << "<text x=\"" << num(x + 24) << "\" y=\"" << num(y) << "\">samples</text>\n";
  if (overlay) {
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(y + 14) << "\" x2=\"" << num(x + 18) << "\" y2=\""
        << num(y + 14) << "\" stroke=\"" << color(1) << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(x + 24) << "\" y=\"" << num(y + 18) << "\">" << escape(names[1]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace lpm::svg
