#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace headprobe::pipeline::svg {

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

std::string fmt(double v, int decimals) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) s = s.front() == '-' ? s.substr(1) : s;
  return s;
}

namespace {

std::string attr_string(const std::map<std::string, std::string>& attrs) {
  std::string out;
  for (const auto& [k, v] : attrs) out += " " + k + "=\"" + escape(v) + "\"";
  return out;
}

std::string tick_label(double v, double step) {
  int decimals = 0;
  if (step < 1) decimals = std::min(6, static_cast<int>(std::ceil(-std::log10(step) - 1e-9)));
  return fmt(v, decimals);
}

}  // namespace

Document::Document(double width, double height) : width_(width), height_(height) {}

void Document::root_attr(const std::string& key, const std::string& value) { root_attrs_[key] = value; }

void Document::open_group(const std::map<std::string, std::string>& attrs) {
  body_ += "<g" + attr_string(attrs) + ">\n";
  ++depth_;
}

void Document::close_group() {
  if (depth_ == 0) return;
  body_ += "</g>\n";
  --depth_;
}

void Document::rect(double x, double y, double w, double h, const std::string& fill,
                    const std::map<std::string, std::string>& attrs) {
  body_ += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
           "\" fill=\"" + fill + "\"" + attr_string(attrs) + "/>\n";
}

void Document::line(double x1, double y1, double x2, double y2, const std::string& stroke, double width,
                    const std::string& dash) {
  body_ += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" + fmt(y2) +
           "\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt(width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
  body_ += "/>\n";
}

void Document::polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke,
                        double width, const std::string& dash) {
  std::string pts;
  for (const auto& [x, y] : points) pts += (pts.empty() ? "" : " ") + fmt(x) + "," + fmt(y);
  body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt(width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
  body_ += " points=\"" + pts + "\"/>\n";
}

void Document::circle(double cx, double cy, double r, const std::string& fill) {
  body_ += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(r) + "\" fill=\"" + fill + "\"/>\n";
}

void Document::text(double x, double y, const std::string& s, double size, const std::string& anchor,
                    const std::map<std::string, std::string>& attrs) {
  body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" + fmt(size, 1) + "\" text-anchor=\"" +
           anchor + "\"" + attr_string(attrs) + ">" + escape(s) + "</text>\n";
}

std::string Document::str() const {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width_, 0) + "\" height=\"" + fmt(height_, 0) +
         "\" viewBox=\"0 0 " + fmt(width_, 0) + " " + fmt(height_, 0) + "\" font-family=\"sans-serif\"" +
         attr_string(root_attrs_) + ">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += body_;
  for (int i = 0; i < depth_; ++i) out += "</g>\n";
  out += "</svg>\n";
  return out;
}

const std::string& palette(std::size_t i) {
  static const std::vector<std::string> colors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % colors.size()];
}

std::string diverging(double t) {
  if (!std::isfinite(t)) return "#cccccc";
  t = std::clamp(t, -1.0, 1.0);
  // white at 0, #2166ac at -1, #b2182b at +1
  const double r0 = t < 0 ? 0x21 : 0xb2, g0 = t < 0 ? 0x66 : 0x18, b0 = t < 0 ? 0xac : 0x2b;
  const double a = std::abs(t);
  auto mix = [&](double c) { return static_cast<int>(std::lround(255.0 + (c - 255.0) * a)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(r0), mix(g0), mix(b0));
  return buf;
}

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step - 1e-9) * step; v <= hi + step * 1e-9; v += step) {
    ticks.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
  }
  return ticks;
}

void no_data(Document& doc, const Box& box, const std::string& title) {
  doc.text(box.x, box.y + 14, title, 13, "start", {{"font-weight", "bold"}});
  doc.rect(box.x, box.y + 22, box.w, box.h - 22, "none", {{"stroke", "#999999"}, {"stroke-dasharray", "4 3"}});
  doc.text(box.x + box.w / 2, box.y + 22 + (box.h - 22) / 2, "no data", 14, "middle",
           {{"class", "no-data"}, {"fill", "#666666"}});
}

void line_panel(Document& doc, const Box& box, const std::string& title, const std::string& xlabel,
                const std::string& ylabel, const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      xlo = std::min(xlo, s.xs[i]);
      xhi = std::max(xhi, s.xs[i]);
      ylo = std::min(ylo, s.ys[i]);
      yhi = std::max(yhi, s.ys[i]);
    }
  }
  if (!std::isfinite(xlo)) {
    no_data(doc, box, title);
    return;
  }
  if (xhi == xlo) {
    xlo -= 0.5;
    xhi += 0.5;
  }
  if (yhi == ylo) {
    const double pad = ylo == 0 ? 1.0 : std::abs(ylo) * 0.1;
    ylo -= pad;
    yhi += pad;
  }
  const double ypad = (yhi - ylo) * 0.05;
  ylo -= ypad;
  yhi += ypad;

  const double legend_w = std::min(340.0, box.w * 0.38);
  const Box plot{box.x + 56, box.y + 26, box.w - legend_w - 70, box.h - 64};
  auto px = [&](double x) { return plot.x + (x - xlo) / (xhi - xlo) * plot.w; };
  auto py = [&](double y) { return plot.y + plot.h - (y - ylo) / (yhi - ylo) * plot.h; };

  doc.open_group({{"class", "panel"}});
  doc.text(box.x, box.y + 14, title, 13, "start", {{"font-weight", "bold"}});
  doc.rect(plot.x, plot.y, plot.w, plot.h, "none", {{"stroke", "#333333"}});
  const auto xt = nice_ticks(xlo, xhi);
  const double xstep = xt.size() > 1 ? xt[1] - xt[0] : 1.0;
  for (double v : xt) {
    doc.line(px(v), plot.y + plot.h, px(v), plot.y + plot.h + 4, "#333333");
    doc.text(px(v), plot.y + plot.h + 16, tick_label(v, xstep), 10, "middle");
  }
  const auto yt = nice_ticks(ylo, yhi);
  const double ystep = yt.size() > 1 ? yt[1] - yt[0] : 1.0;
  for (double v : yt) {
    doc.line(plot.x - 4, py(v), plot.x, py(v), "#333333");
    doc.line(plot.x, py(v), plot.x + plot.w, py(v), "#eeeeee", 0.5);
    doc.text(plot.x - 6, py(v) + 3.5, tick_label(v, ystep), 10, "end");
  }
  if (ylo < 0 && yhi > 0) doc.line(plot.x, py(0), plot.x + plot.w, py(0), "#999999", 0.8, "3 3");
  doc.text(plot.x + plot.w / 2, plot.y + plot.h + 32, xlabel, 11, "middle");
  doc.text(box.x + 12, plot.y + plot.h / 2, ylabel, 11, "middle",
           {{"transform", "rotate(-90 " + fmt(box.x + 12) + " " + fmt(plot.y + plot.h / 2) + ")"}});

  for (const auto& s : series) {
    doc.open_group({{"class", "series"}, {"data-label", s.label}});
    std::vector<std::pair<double, double>> run;
    auto flush = [&] {
      if (run.size() > 1) doc.polyline(run, s.color, 1.5, s.dash);
      if (run.size() == 1) doc.circle(run[0].first, run[0].second, 2.0, s.color);
      run.clear();
    };
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) {
        flush();
        continue;
      }
      run.emplace_back(px(s.xs[i]), py(s.ys[i]));
    }
    flush();
    doc.close_group();
  }

  // Legend in columns to the right of the plot.
  const double lx = plot.x + plot.w + 16, ly = plot.y;
  const int per_col = std::max(1, static_cast<int>(plot.h / 13));
  const double col_w = 112;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const int col = static_cast<int>(i) / per_col, row = static_cast<int>(i) % per_col;
    const double x = lx + col * col_w, y = ly + row * 13 + 6;
    if (x + col_w > box.x + box.w + 1) {
      doc.text(x, y + 4, "+" + std::to_string(series.size() - i) + " more", 10);
      break;
    }
    doc.line(x, y, x + 16, y, series[i].color, 2.0, series[i].dash);
    doc.text(x + 20, y + 3.5, series[i].label, 10);
  }
  doc.close_group();
}

void bar_panel(Document& doc, const Box& box, const std::string& title, const std::string& xlabel,
               const std::vector<Bar>& bars) {
  double lo = 0, hi = 0;
  bool any = false;
  for (const auto& b : bars) {
    if (!std::isfinite(b.value)) continue;
    any = true;
    lo = std::min(lo, b.value);
    hi = std::max(hi, b.value);
  }
  if (!any) {
    no_data(doc, box, title);
    return;
  }
  if (hi == lo) hi = lo + 1;
  const Box plot{box.x + 70, box.y + 26, box.w - 90, box.h - 60};
  auto px = [&](double v) { return plot.x + (v - lo) / (hi - lo) * plot.w; };
  const double slot = plot.h / static_cast<double>(bars.size());

  doc.open_group({{"class", "panel"}});
  doc.text(box.x, box.y + 14, title, 13, "start", {{"font-weight", "bold"}});
  const auto ticks = nice_ticks(lo, hi);
  const double step = ticks.size() > 1 ? ticks[1] - ticks[0] : 1.0;
  for (double v : ticks) {
    doc.line(px(v), plot.y, px(v), plot.y + plot.h, "#eeeeee", 0.5);
    doc.text(px(v), plot.y + plot.h + 14, tick_label(v, step), 10, "middle");
  }
  doc.line(px(0), plot.y, px(0), plot.y + plot.h, "#333333");
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = plot.y + slot * static_cast<double>(i);
    doc.text(plot.x - 6, y + slot / 2 + 3.5, bars[i].label, 10, "end");
    if (!std::isfinite(bars[i].value)) continue;
    const double x0 = px(std::min(0.0, bars[i].value)), x1 = px(std::max(0.0, bars[i].value));
    doc.rect(x0, y + slot * 0.15, std::max(0.5, x1 - x0), slot * 0.7, bars[i].value >= 0 ? "#b2182b" : "#2166ac",
             {{"data-value", fmt(bars[i].value, 6)}});
  }
  doc.text(plot.x + plot.w / 2, plot.y + plot.h + 30, xlabel, 11, "middle");
  doc.close_group();
}

}  // namespace headprobe::pipeline::svg
