#include "kql/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace kql {

namespace {

constexpr double kW = 760, kH = 440;
constexpr double kL = 78, kR = 24, kT = 46, kB = 58;  // margins

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool ok() const { return lo <= hi; }
  void pad() {
    if (!ok()) {
      lo = 0.0;
      hi = 1.0;
    } else if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

std::string fmt(double v) {
  char buf[32];
  if (v == 0.0) return "0";
  const double a = std::abs(v);
  if (a >= 1e5 || a < 1e-3) {
    std::snprintf(buf, sizeof buf, "%.2g", v);
  } else {
    std::snprintf(buf, sizeof buf, "%g", v);
  }
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_chart_svg(std::ostream& os, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series) {
  Range rx, ry;
  for (const ChartSeries& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("chart series: x/y length mismatch");
    if (!s.band.empty() && s.band.size() != s.y.size())
      throw std::invalid_argument("chart series: band length mismatch");
    for (size_t i = 0; i < s.x.size(); ++i) {
      rx.add(s.x[i]);
      ry.add(s.y[i]);
      if (!s.band.empty() && std::isfinite(s.y[i]) && std::isfinite(s.band[i])) {
        ry.add(s.y[i] - s.band[i]);
        ry.add(s.y[i] + s.band[i]);
      }
    }
  }
  rx.pad();
  ry.pad();

  const auto px = [&](double v) { return kL + (v - rx.lo) / (rx.hi - rx.lo) * (kW - kL - kR); };
  const auto py = [&](double v) { return kH - kB - (v - ry.lo) / (ry.hi - ry.lo) * (kH - kT - kB); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
     << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
     << " font-size=\"16\">" << esc(title) << "</text>\n";

  // gridlines and ticks
  const double xs = nice_step(rx.hi - rx.lo, 6), ys = nice_step(ry.hi - ry.lo, 6);
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
  for (double v = std::ceil(rx.lo / xs) * xs; v <= rx.hi + 1e-9 * xs; v += xs) {
    const double x = px(v);
    os << "<line x1=\"" << x << "\" y1=\"" << kT << "\" x2=\"" << x << "\" y2=\"" << kH - kB
       << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << x << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\">"
       << fmt(v) << "</text>\n";
  }
  for (double v = std::ceil(ry.lo / ys) * ys; v <= ry.hi + 1e-9 * ys; v += ys) {
    const double y = py(v);
    os << "<line x1=\"" << kL << "\" y1=\"" << y << "\" x2=\"" << kW - kR << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << kL - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v)
       << "</text>\n";
  }
  os << "</g>\n";

  // axes
  os << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
     << kH - kB << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 14
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << esc(x_label)
     << "</text>\n"
     << "<text x=\"20\" y=\"" << (kT + kH - kB) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\""
     << " transform=\"rotate(-90 20 " << (kT + kH - kB) / 2 << ")\">" << esc(y_label)
     << "</text>\n";

  for (const ChartSeries& s : series) {
    if (!s.band.empty()) {
      // one polygon per contiguous finite stretch
      size_t i = 0;
      while (i < s.y.size()) {
        while (i < s.y.size() && !(std::isfinite(s.y[i]) && std::isfinite(s.band[i]))) ++i;
        size_t j = i;
        while (j < s.y.size() && std::isfinite(s.y[j]) && std::isfinite(s.band[j])) ++j;
        if (j - i >= 2) {
          os << "<polygon fill=\"" << s.color << "\" opacity=\"0.18\" points=\"";
          for (size_t k = i; k < j; ++k) os << px(s.x[k]) << ',' << py(s.y[k] + s.band[k]) << ' ';
          for (size_t k = j; k-- > i;) os << px(s.x[k]) << ',' << py(s.y[k] - s.band[k]) << ' ';
          os << "\"/>\n";
        }
        i = j;
      }
    }
    os << "<path fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" d=\"";
    bool pen_up = true;
    for (size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        pen_up = true;
        continue;
      }
      os << (pen_up ? 'M' : 'L') << px(s.x[i]) << ' ' << py(s.y[i]);
      pen_up = false;
    }
    os << "\"/>\n";
  }

  // legend for labeled series
  double ly = kT + 14;
  for (const ChartSeries& s : series) {
    if (s.label.empty()) continue;
    os << "<line x1=\"" << kW - kR - 150 << "\" y1=\"" << ly << "\" x2=\"" << kW - kR - 126
       << "\" y2=\"" << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << kW - kR - 120 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << esc(s.label) << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
}

}  // namespace kql
