#include "polytrend/svg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "polytrend/pipelines.hpp"

namespace polytrend {

namespace {

const char* kPalette[] = {"#1b6ca8", "#d1495b", "#3a7d44", "#8e5572",
                          "#e09f3e", "#335c67", "#7f557d", "#4f6d7a"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string dose_response_svg(const ScoredDataset& data, const std::string& group_by) {
  auto [per_row, levels] = group_labels(data, group_by);

  const double width = 640, height = 420;
  const double ml = 56, mr = 16, mt = 18, mb = 44;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double dose_max = data.dose.maxCoeff();
  if (dose_max <= 0.0) dose_max = 1.0;
  const double sx = std::sqrt(dose_max);

  // group -> sorted (dose, proportion)
  std::map<std::string, std::map<double, std::pair<double, double>>> series;
  double pmax = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    auto& cell = series[per_row[i]][data.dose[i]];
    cell.first += data.successes[i];
    cell.second += data.successes[i] + data.failures[i];
    pmax = std::max(pmax, cell.first / cell.second);
  }
  if (pmax <= 0.0) pmax = 1.0;
  pmax = std::min(1.0, pmax * 1.15);

  auto xpos = [&](double dose) { return ml + pw * std::sqrt(dose) / sx; };
  auto ypos = [&](double prop) { return mt + ph * (1.0 - prop / pmax); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
     << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
     << mt + ph << "\" stroke=\"black\"/>\n";

  // sqrt-spaced x ticks (paper-style breaks, filtered to the data range)
  std::vector<double> breaks = {0, 100, 200, 400, 800, 1600, 5000};
  if (dose_max < 50.0) breaks = {0, dose_max / 4, dose_max / 2, dose_max};
  for (double b : breaks) {
    if (b > dose_max * 1.02) continue;
    double x = xpos(b);
    os << "<line x1=\"" << fmt(x) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt(x)
       << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fmt(x) << "\" y=\"" << mt + ph + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << b << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    double p = pmax * i / 4.0;
    double y = ypos(p);
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt(y) << "\" x2=\"" << ml
       << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
    std::ostringstream lab;
    lab.precision(2);
    lab << p;
    os << "<text x=\"" << ml - 8 << "\" y=\"" << fmt(y + 4)
       << "\" font-size=\"11\" text-anchor=\"end\">" << lab.str() << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
     << "\" font-size=\"12\" text-anchor=\"middle\">dose (sqrt scale)</text>\n";
  os << "<text x=\"14\" y=\"" << mt + ph / 2
     << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << mt + ph / 2 << ")\">tumor / at risk</text>\n";

  int color = 0;
  double legend_y = mt + 6;
  for (const std::string& g : levels) {
    const char* stroke = kPalette[color % 8];
    std::ostringstream pts;
    for (const auto& [dose, cell] : series[g]) {
      pts << fmt(xpos(dose)) << "," << fmt(ypos(cell.first / cell.second)) << " ";
      os << "<circle cx=\"" << fmt(xpos(dose)) << "\" cy=\""
         << fmt(ypos(cell.first / cell.second)) << "\" r=\"3\" fill=\"" << stroke
         << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\""
       << pts.str() << "\"/>\n";
    os << "<text x=\"" << ml + pw - 4 << "\" y=\"" << fmt(legend_y)
       << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << stroke << "\">" << g
       << "</text>\n";
    legend_y += 14;
    ++color;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace polytrend
