#pragma once

// Hand-emitted SVG for learning curves and state heatmaps. Numbers are
// printed with fixed precision so identical inputs give identical bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qoracle/envs.hpp"
#include "qoracle/errors.hpp"
#include "qoracle/io.hpp"

namespace qoracle {

/// Numeric CSV with a header row. Empty cells and "nan" read as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw MissingColumnError(name);
  }

  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline CsvTable read_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV", 1, "header");
  t.header = split(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) + " cells", line_no, "row");
    std::vector<double> row;
    for (std::size_t i = 0; i < cells.size(); ++i)
      row.push_back(cells[i].empty() || cells[i] == "nan" || cells[i] == "-nan"
                        ? std::numeric_limits<double>::quiet_NaN()
                        : detail::parse_double(cells[i], line_no, t.header[i].c_str()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  if (v == 0.0) v = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s(buf);
  if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
  return s;
}

/// Short tick/annotation label.
inline std::string short_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

inline constexpr std::array<const char*, 8> kLinePalette = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                                            "#66a61e", "#e6ab02", "#a6761d", "#666666"};

inline std::string hex_color(int r, int g, int b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

/// Step k of 16 from white (k = 0) to the given end color (k = 15).
inline std::string ramp(int k, int r, int g, int b) {
  auto mix = [k](int end) { return 255 + (end - 255) * k / 15; };
  return hex_color(mix(r), mix(g), mix(b));
}

}  // namespace detail

/// Number of color steps in heatmap ramps.
inline constexpr int kRampSteps = 16;

enum class HeatmapStyle { diverging, sequential };

/// Ramp step for a value given the scale (max |v|): 0 only for exact zeros.
inline int ramp_level(double v, double scale) {
  if (v == 0.0 || !(scale > 0.0) || !std::isfinite(v)) return 0;
  const double t = std::min(1.0, std::abs(v) / scale);
  return std::clamp(static_cast<int>(std::ceil(t * (kRampSteps - 1))), 1, kRampSteps - 1);
}

/// Fill color of one heatmap cell. Diverging: negative red, zero white, positive blue.
/// Sequential: zero white, rising to red.
inline std::string heat_color(double v, double scale, HeatmapStyle style) {
  const int k = ramp_level(v, scale);
  if (style == HeatmapStyle::diverging && v > 0.0) return detail::ramp(k, 0x21, 0x66, 0xac);
  return detail::ramp(k, 0xb2, 0x18, 0x2b);
}

inline constexpr const char* kWallColor = "#bdbdbd";

/// Grid of per-state values laid out as in the environment's 2-D map.
inline std::string render_heatmap(std::span<const double> state_values, const std::optional<GridLayout>& layout,
                                  HeatmapStyle style, const std::string& title) {
  if (!layout) throw UnsupportedLayoutError("heatmap needs a 2-D state layout; this environment has none");
  const GridLayout& g = *layout;
  std::size_t n_mapped = 0;
  for (long s : g.cell_state)
    if (s >= 0) n_mapped = std::max(n_mapped, static_cast<std::size_t>(s) + 1);
  if (state_values.size() < n_mapped) throw DimensionError("heatmap values do not cover the layout");

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (long s : g.cell_state) {
    if (s < 0) continue;
    const double v = state_values[static_cast<std::size_t>(s)];
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  const double scale = std::max(std::abs(lo), std::abs(hi));

  const double cell = std::clamp(480.0 / static_cast<double>(std::max(g.rows, g.cols)), 4.0, 60.0);
  const double left = 50.0, top = 40.0;
  const double w = cell * static_cast<double>(g.cols), h = cell * static_cast<double>(g.rows);
  const double width = left + w + 20.0, height = top + h + 60.0;

  std::ostringstream o;
  using detail::fixed;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width) << "\" height=\"" << fixed(height)
    << "\" viewBox=\"0 0 " << fixed(width) << ' ' << fixed(height) << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << fixed(width) << "\" height=\"" << fixed(height) << "\" fill=\"#ffffff\"/>\n";
  o << "<text x=\"" << fixed(left) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
    << detail::escape(title) << "</text>\n";
  o << "<g class=\"cells\" stroke=\"#e0e0e0\" stroke-width=\"0.5\">\n";
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const long s = g.cell_state[r * g.cols + c];
      const std::string fill =
          s < 0 ? kWallColor : heat_color(state_values[static_cast<std::size_t>(s)], scale, style);
      o << "<rect class=\"" << (s < 0 ? "wall" : "cell") << "\" x=\"" << fixed(left + cell * static_cast<double>(c))
        << "\" y=\"" << fixed(top + cell * static_cast<double>(r)) << "\" width=\"" << fixed(cell) << "\" height=\""
        << fixed(cell) << "\" fill=\"" << fill << "\"/>\n";
    }
  o << "</g>\n";
  o << "<text x=\"" << fixed(left + w / 2) << "\" y=\"" << fixed(top + h + 18) << "\" text-anchor=\"middle\""
    << " font-family=\"sans-serif\" font-size=\"12\">" << detail::escape(g.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << fixed(top + h / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
    << " font-size=\"12\" transform=\"rotate(-90 16 " << fixed(top + h / 2) << ")\">" << detail::escape(g.y_label)
    << "</text>\n";

  // Color scale strip with min/max annotation.
  const double sy = top + h + 30.0, sw = std::min(w, 240.0) / kRampSteps;
  for (int k = 0; k < kRampSteps; ++k) {
    const double v = style == HeatmapStyle::diverging ? -scale + 2.0 * scale * k / (kRampSteps - 1)
                                                      : scale * k / (kRampSteps - 1);
    o << "<rect class=\"scale\" x=\"" << fixed(left + sw * k) << "\" y=\"" << fixed(sy) << "\" width=\"" << fixed(sw)
      << "\" height=\"10\" fill=\"" << heat_color(v, scale, style) << "\"/>\n";
  }
  o << "<text class=\"range\" x=\"" << fixed(left + sw * kRampSteps + 8) << "\" y=\"" << fixed(sy + 9)
    << "\" font-family=\"sans-serif\" font-size=\"11\">min " << detail::short_number(lo) << " max "
    << detail::short_number(hi) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

/// One labelled seed-aggregate table (columns <metric>_mean, _min, _max plus the x column).
struct CurveSeries {
  std::string label;
  CsvTable table;
};

/// Mean line and min/max band per label, legend in input order.
inline std::string render_curves(const std::vector<CurveSeries>& series, const std::string& metric,
                                 const std::string& x_column = "iteration") {
  struct Prepared {
    std::vector<double> x, mean, lo, hi;
  };
  std::vector<Prepared> data;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    Prepared p{s.table.values(x_column), s.table.values(metric + "_mean"), s.table.values(metric + "_min"),
               s.table.values(metric + "_max")};
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      if (!std::isfinite(p.x[i]) || !std::isfinite(p.mean[i])) continue;
      x0 = std::min(x0, p.x[i]);
      x1 = std::max(x1, p.x[i]);
      for (double v : {p.mean[i], p.lo[i], p.hi[i]})
        if (std::isfinite(v)) {
          y0 = std::min(y0, v);
          y1 = std::max(y1, v);
        }
    }
    data.push_back(std::move(p));
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0;
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 1.0, y1 += 1.0;

  const double width = 640.0, height = 400.0, left = 70.0, right = 160.0, top = 30.0, bottom = 50.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  using detail::fixed;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
  o << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(pw) << "\" height=\""
    << fixed(ph) << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text class=\"xtick\" x=\"" << fixed(px(xv)) << "\" y=\"" << fixed(top + ph + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << detail::short_number(xv)
      << "</text>\n";
    o << "<text class=\"ytick\" x=\"" << fixed(left - 6) << "\" y=\"" << fixed(py(yv) + 3)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << detail::short_number(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(height - 12)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << detail::escape(x_column)
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << fixed(top + ph / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
    << " font-size=\"12\" transform=\"rotate(-90 16 " << fixed(top + ph / 2) << ")\">" << detail::escape(metric)
    << "</text>\n";

  for (std::size_t k = 0; k < data.size(); ++k) {
    const Prepared& p = data[k];
    const char* color = detail::kLinePalette[k % detail::kLinePalette.size()];
    const std::string label = detail::escape(series[k].label);
    std::string band_top, band_bottom, line;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      if (!std::isfinite(p.x[i]) || !std::isfinite(p.mean[i])) continue;
      line += (line.empty() ? "" : " ") + fixed(px(p.x[i])) + "," + fixed(py(p.mean[i]));
      if (std::isfinite(p.lo[i]) && std::isfinite(p.hi[i]))
        band_top += (band_top.empty() ? "" : " ") + fixed(px(p.x[i])) + "," + fixed(py(p.hi[i]));
    }
    for (std::size_t i = p.x.size(); i-- > 0;)
      if (std::isfinite(p.x[i]) && std::isfinite(p.mean[i]) && std::isfinite(p.lo[i]) && std::isfinite(p.hi[i]))
        band_bottom += " " + fixed(px(p.x[i])) + "," + fixed(py(p.lo[i]));
    if (!band_top.empty())
      o << "<polygon class=\"band\" data-label=\"" << label << "\" points=\"" << band_top << band_bottom
        << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    if (!line.empty())
      o << "<polyline class=\"mean\" data-label=\"" << label << "\" points=\"" << line << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"1.5\"/>\n";
  }

  for (std::size_t k = 0; k < series.size(); ++k) {
    const double ly = top + 14.0 + 18.0 * static_cast<double>(k);
    const char* color = detail::kLinePalette[k % detail::kLinePalette.size()];
    o << "<g class=\"legend\"><line x1=\"" << fixed(left + pw + 12) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\""
      << fixed(left + pw + 32) << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/><text x=\"" << fixed(left + pw + 38) << "\" y=\"" << fixed(ly)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::escape(series[k].label) << "</text></g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace qoracle
