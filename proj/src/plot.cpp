#include "embal/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

namespace embal {

namespace {

using EpisodeKey = std::pair<std::uint64_t, std::uint64_t>;

double after_annotations(const std::vector<CurvePoint>& curve, int n_ann) {
  double v = curve.front().miou;
  for (const auto& p : curve) {
    if (p.n_ann > n_ann) break;
    v = p.miou;
  }
  return v;
}

std::string escape(const std::string& s) {
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

double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::vector<PlotSeries> mean_curves(const std::vector<CurveRow>& rows, CurveAxis axis, int grid) {
  if (grid <= 0) throw Error("mean_curves: grid must be positive");
  std::vector<std::string> order;
  std::map<std::string, std::map<EpisodeKey, std::vector<CurvePoint>>> by_method;
  for (const auto& r : rows) {
    if (!by_method.count(r.method)) order.push_back(r.method);
    by_method[r.method][{r.world_seed, r.start_seed}].push_back(r.point);
  }
  std::vector<PlotSeries> out;
  for (const auto& method : order) {
    auto& episodes = by_method[method];
    int extent = 0;
    for (auto& [key, curve] : episodes) {
      std::stable_sort(curve.begin(), curve.end(),
                       [](const CurvePoint& a, const CurvePoint& b) { return a.step < b.step; });
      extent = std::max(extent, axis == CurveAxis::Step ? curve.back().step : curve.back().n_ann);
    }
    PlotSeries s{method, {}, {}};
    for (int x = 0; x <= extent; x += grid) {
      double sum = 0.0;
      for (const auto& [key, curve] : episodes)
        sum += axis == CurveAxis::Step ? curve_value_at(curve, x) : after_annotations(curve, x);
      s.x.push_back(x);
      s.y.push_back(sum / episodes.size());
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_svg(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title,
               const std::string& x_label, const std::string& y_label) {
  constexpr double W = 720, H = 440, L = 70, R = 190, T = 40, B = 60;
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  y0 = std::min(0.0, y0);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double dy = nice_step(y1 - y0);
  y1 = std::ceil(y1 / dy) * dy;
  const double dx = nice_step(x1 - x0);
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(title) << "</text>\n";
  for (double y = y0; y <= y1 + 1e-9; y += dy) {
    os << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << py(y) << "\" y2=\"" << py(y)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  for (double x = std::ceil(x0 / dx) * dx; x <= x1 + 1e-9; x += dx)
    os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << x << "</text>\n";
  os << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << H - B << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" x2=\"" << L << "\" y1=\"" << T << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << (T + (H - T - B) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = colors[k % 10];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << px(s.x[i]) << ',' << py(s.y[i]);
    os << "\"/>\n";
    const double ly = T + 10 + 20.0 * k;
    os << "<line x1=\"" << W - R + 15 << "\" x2=\"" << W - R + 40 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  out << os.str();
}

}  // namespace embal
