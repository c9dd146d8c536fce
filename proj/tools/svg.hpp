#pragma once

// Minimal standalone SVG line plots for CF overlays and large-ball convergence.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "coxballs/core.hpp"

namespace coxballs::cli {

struct Series {
  std::vector<double> x, y;
  std::string color;
  std::string label;
};

struct Band {
  std::vector<double> x, lo, hi;
};

struct Panel {
  std::string title;
  std::string xlabel;
  Series a, b;
  Band band;
  bool log_x = false;
};

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace svg_detail

/// Panels stacked vertically, each with two curves and one shaded band.
inline std::string render_svg(const std::vector<Panel>& panels) {
  using svg_detail::num;
  using svg_detail::tick;
  if (panels.empty()) throw ValidationError("nothing to plot");
  const double W = 640, H = 300, ml = 60, mr = 20, mt = 30, mb = 45;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H * panels.size()
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& P = panels[p];
    if (P.a.x.empty()) throw ValidationError("plot panel '" + P.title + "' has no data");
    auto tx = [&](double x) { return P.log_x ? std::log10(x) : x; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const Series* s : {&P.a, &P.b})
      for (std::size_t i = 0; i < s->x.size(); ++i) {
        x0 = std::min(x0, tx(s->x[i]));
        x1 = std::max(x1, tx(s->x[i]));
        y0 = std::min(y0, s->y[i]);
        y1 = std::max(y1, s->y[i]);
      }
    for (std::size_t i = 0; i < P.band.x.size(); ++i) {
      y0 = std::min(y0, P.band.lo[i]);
      y1 = std::max(y1, P.band.hi[i]);
    }
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double top = p * H;
    auto px = [&](double x) { return ml + (tx(x) - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return top + mt + (y1 - y) / (y1 - y0) * (H - mt - mb); };
    o << "<g>\n<text x=\"" << num(W / 2) << "\" y=\"" << num(top + 18) << "\" text-anchor=\"middle\">" << P.title
      << "</text>\n";
    o << "<rect x=\"" << num(ml) << "\" y=\"" << num(top + mt) << "\" width=\"" << num(W - ml - mr) << "\" height=\""
      << num(H - mt - mb) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
      const double xs = ml + (W - ml - mr) * k / 4, ys = top + mt + (H - mt - mb) * (1 - k / 4.0);
      o << "<text x=\"" << num(xs) << "\" y=\"" << num(top + H - mb + 14) << "\" text-anchor=\"middle\">"
        << tick(P.log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
      o << "<text x=\"" << num(ml - 4) << "\" y=\"" << num(ys + 4) << "\" text-anchor=\"end\">" << tick(yv)
        << "</text>\n";
    }
    o << "<text x=\"" << num(W / 2) << "\" y=\"" << num(top + H - 8) << "\" text-anchor=\"middle\">" << P.xlabel
      << "</text>\n";
    if (!P.band.x.empty()) {
      o << "<polygon class=\"band\" fill=\"#f4a582\" fill-opacity=\"0.35\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < P.band.x.size(); ++i) o << num(px(P.band.x[i])) << ',' << num(py(P.band.hi[i])) << ' ';
      for (std::size_t i = P.band.x.size(); i-- > 0;) o << num(px(P.band.x[i])) << ',' << num(py(P.band.lo[i])) << ' ';
      o << "\"/>\n";
    }
    int li = 0;
    for (const Series* s : {&P.a, &P.b}) {
      o << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << s->color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s->x.size(); ++i) o << num(px(s->x[i])) << ',' << num(py(s->y[i])) << ' ';
      o << "\"/>\n";
      o << "<text x=\"" << num(ml + 8) << "\" y=\"" << num(top + mt + 14 + 14 * li++) << "\" fill=\"" << s->color
        << "\">" << s->label << "</text>\n";
    }
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace coxballs::cli
