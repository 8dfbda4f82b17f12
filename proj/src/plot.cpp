#include "rftval/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

namespace rftval {
namespace {

constexpr double width = 640, height = 420;
constexpr double left = 70, right = 190, top = 40, bottom = 55;
constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string series_name(const FweCell& c) {
  std::string s = std::string(to_string(c.method)) + " " + to_string(c.inference);
  if (c.inference == Inference::cluster) s += " p&lt;" + num(c.cdt_p);
  return s + " (" + (c.test_kind == TestKind::one_sample ? "1-sample" : "2-sample") + ")";
}

}  // namespace

std::string fwe_svg(const SummaryTable& table, RegressorLabel regressor) {
  using Key = std::tuple<int, int, int, double>;
  std::map<Key, std::vector<const FweCell*>> series;
  double x_lo = 1e300, x_hi = -1e300, y_hi = 2.0 * table.alpha;
  for (const auto& row : table.rows) {
    const auto& c = row.cell;
    if (c.regressor != regressor) continue;
    series[{static_cast<int>(c.method), static_cast<int>(c.inference), static_cast<int>(c.test_kind), c.cdt_p}]
        .push_back(&c);
    x_lo = std::min(x_lo, c.smoothing_mm);
    x_hi = std::max(x_hi, c.smoothing_mm);
    y_hi = std::max(y_hi, c.ci_high);
  }
  if (series.empty()) x_lo = 0, x_hi = 1;
  if (x_hi - x_lo < 1e-9) x_lo -= 1, x_hi += 1;
  y_hi = std::min(1.0, y_hi * 1.1);

  const double pw = width - left - right, ph = height - top - bottom;
  auto X = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto Y = [&](double y) { return top + (1.0 - y / y_hi) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">Regressor "
    << to_string(regressor) << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y_hi * i / 5.0;
    s << "<line x1=\"" << left - 4 << "\" y1=\"" << Y(y) << "\" x2=\"" << left << "\" y2=\"" << Y(y)
      << "\" stroke=\"black\"/><text x=\"" << left - 7 << "\" y=\"" << Y(y) + 4 << "\" text-anchor=\"end\">"
      << num(y) << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& row : table.rows)
    if (row.cell.regressor == regressor) xs.push_back(row.cell.smoothing_mm);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    s << "<line x1=\"" << X(x) << "\" y1=\"" << top + ph << "\" x2=\"" << X(x) << "\" y2=\"" << top + ph + 4
      << "\" stroke=\"black\"/><text x=\"" << X(x) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << num(x) << "</text>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">smoothing FWHM (mm)</text>\n";
  s << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">empirical FWE</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << Y(table.alpha) << "\" x2=\"" << left + pw << "\" y2=\""
    << Y(table.alpha) << "\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n";

  std::size_t k = 0;
  for (auto& [key, cells] : series) {
    const char* colour = palette[k % std::size(palette)];
    std::sort(cells.begin(), cells.end(), [](auto* a, auto* b) { return a->smoothing_mm < b->smoothing_mm; });
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto* c : cells) s << X(c->smoothing_mm) << ',' << Y(c->empirical_fwe) << ' ';
    s << "\"/>\n";
    for (const auto* c : cells) {
      const double x = X(c->smoothing_mm);
      s << "<line x1=\"" << x << "\" y1=\"" << Y(c->ci_low) << "\" x2=\"" << x << "\" y2=\"" << Y(c->ci_high)
        << "\" stroke=\"" << colour << "\"/>";
      s << "<circle cx=\"" << x << "\" cy=\"" << Y(c->empirical_fwe) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    s << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/><text x=\"" << left + pw + 34 << "\" y=\"" << ly + 4
      << "\" font-size=\"10\">" << series_name(*cells.front()) << "</text>\n";
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace rftval
