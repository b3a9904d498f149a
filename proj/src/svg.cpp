#include "inspectsim/svg.hpp"

#include "inspectsim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace inspectsim {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    } else {
      const double m = 0.05 * (hi - lo);
      lo -= m;
      hi += m;
    }
  }
};

double nice_step(double span) {
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  double step = 10.0;
  if (frac <= 1.5) step = 1.0;
  else if (frac <= 3.0) step = 2.0;
  else if (frac <= 7.0) step = 5.0;
  return step * mag;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<SvgSeries>& series, int width, int height) {
  const double ml = 64, mr = 16, mt = 34, mb = 44;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;

  Range rx, ry;
  for (const auto& s : series) {
    for (double v : s.x) rx.add(v);
    for (double v : s.y) ry.add(v);
  }
  if (!std::isfinite(rx.lo)) {
    rx.add(0.0);
    ry.add(0.0);
  }
  rx.pad();
  ry.pad();

  auto sx = [&](double v) { return ml + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto sy = [&](double v) { return mt + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << title << "</text>\n";

  // Grid and ticks.
  const double xstep = nice_step(rx.hi - rx.lo);
  const double ystep = nice_step(ry.hi - ry.lo);
  out << "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#444\">\n";
  for (double v = std::ceil(rx.lo / xstep) * xstep; v <= rx.hi + 1e-12; v += xstep) {
    out << "<line x1=\"" << sx(v) << "\" y1=\"" << mt << "\" x2=\"" << sx(v) << "\" y2=\""
        << mt + ph << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << sx(v) << "\" y=\"" << mt + ph + 14 << "\" text-anchor=\"middle\">"
        << num(v) << "</text>\n";
  }
  for (double v = std::ceil(ry.lo / ystep) * ystep; v <= ry.hi + 1e-12; v += ystep) {
    out << "<line x1=\"" << ml << "\" y1=\"" << sy(v) << "\" x2=\"" << ml + pw << "\" y2=\""
        << sy(v) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << sy(v) + 3 << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  out << "</g>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "<text x=\"14\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
      << mt + ph / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const SvgSeries& s = series[i];
    const char* color = kPalette[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.4\" points=\"";
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(s.y[j])) continue;
      out << sx(s.x[j]) << ',' << sy(s.y[j]) << ' ';
    }
    out << "\"/>\n";
    out << "<g font-family=\"sans-serif\" font-size=\"11\">"
        << "<rect x=\"" << ml + 10 + 120.0 * static_cast<double>(i) << "\" y=\"" << mt + 6
        << "\" width=\"10\" height=\"3\" fill=\"" << color << "\"/>"
        << "<text x=\"" << ml + 24 + 120.0 * static_cast<double>(i) << "\" y=\"" << mt + 11
        << "\">" << s.label << "</text></g>\n";
  }
  out << "</svg>\n";
  write_file_atomic(path, out.str());
}

}  // namespace inspectsim
