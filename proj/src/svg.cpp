#include "dull/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dull {

namespace {

constexpr int kW = 640, kH = 400;
constexpr int kPad = 50;

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                         "#9467bd", "#8c564b"};

std::string header(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW
     << "' height='" << kH << "' viewBox='0 0 " << kW << " " << kH << "'>\n"
     << "<rect width='100%' height='100%' fill='white'/>\n"
     << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' "
        "font-family='sans-serif' font-size='14'>"
     << title << "</text>\n";
  return os.str();
}

}  // namespace

std::string svg_line_chart(const std::string& title,
                           const std::vector<Series>& series) {
  double lo = 0.0, hi = 1e-12;
  std::size_t maxlen = 1;
  for (const auto& [name, ys] : series) {
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    maxlen = std::max(maxlen, ys.size());
  }
  std::ostringstream os;
  os << header(title);
  os << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad
     << "' y2='" << kH - kPad << "' stroke='black'/>\n";
  os << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad
     << "' y2='" << kH - kPad << "' stroke='black'/>\n";
  auto px = [&](std::size_t i) {
    return kPad + (kW - 2.0 * kPad) * (maxlen > 1 ? static_cast<double>(i) /
                                                        (maxlen - 1)
                                                  : 0.5);
  };
  auto py = [&](double v) {
    return kH - kPad - (kH - 2.0 * kPad) * (v - lo) / (hi - lo);
  };
  int si = 0;
  for (const auto& [name, ys] : series) {
    const char* color = kColors[si % 6];
    os << "<polyline fill='none' stroke='" << color << "' points='";
    for (std::size_t i = 0; i < ys.size(); ++i)
      os << px(i) << "," << py(ys[i]) << " ";
    os << "'/>\n";
    os << "<text x='" << kW - kPad + 4 << "' y='" << kPad + 16 * si
       << "' font-family='sans-serif' font-size='11' fill='" << color << "'>"
       << name << "</text>\n";
    ++si;
  }
  os << "<text x='10' y='" << kPad << "' font-family='sans-serif' "
        "font-size='10'>" << hi << "</text>\n";
  os << "<text x='10' y='" << kH - kPad << "' font-family='sans-serif' "
        "font-size='10'>" << lo << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::string>& categories,
                          const std::vector<Series>& groups) {
  double hi = 1e-12;
  for (const auto& [name, ys] : groups)
    for (double y : ys) hi = std::max(hi, y);
  std::ostringstream os;
  os << header(title);
  const double span = kW - 2.0 * kPad;
  const double cat_w = span / std::max<std::size_t>(1, categories.size());
  const double bar_w = cat_w / (groups.size() + 1);
  for (std::size_t ci = 0; ci < categories.size(); ++ci) {
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& ys = groups[gi].second;
      if (ci >= ys.size()) continue;
      const double h = (kH - 2.0 * kPad) * ys[ci] / hi;
      const double x = kPad + ci * cat_w + gi * bar_w + bar_w / 2;
      os << "<rect x='" << x << "' y='" << kH - kPad - h << "' width='"
         << bar_w * 0.9 << "' height='" << h << "' fill='"
         << kColors[gi % 6] << "'/>\n";
    }
    os << "<text x='" << kPad + ci * cat_w + cat_w / 2 << "' y='"
       << kH - kPad + 16
       << "' text-anchor='middle' font-family='sans-serif' font-size='11'>"
       << categories[ci] << "</text>\n";
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    os << "<text x='" << kW - kPad + 4 << "' y='" << kPad + 16 * gi
       << "' font-family='sans-serif' font-size='11' fill='"
       << kColors[gi % 6] << "'>" << groups[gi].first << "</text>\n";
  os << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad
     << "' y2='" << kH - kPad << "' stroke='black'/>\n";
  os << "</svg>\n";
  return os.str();
}

std::string svg_heatmap(const std::string& title,
                        const std::vector<double>& values, int rows,
                        int cols) {
  double hi = 1e-12;
  for (double v : values) hi = std::max(hi, v);
  std::ostringstream os;
  os << header(title);
  const double cw = (kW - 2.0 * kPad) / cols;
  const double ch = (kH - 2.0 * kPad) / rows;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double v = values[static_cast<std::size_t>(r) * cols + c] / hi;
      const int shade = static_cast<int>(255 - 215 * std::min(1.0, v));
      os << "<rect x='" << kPad + c * cw << "' y='" << kPad + r * ch
         << "' width='" << cw << "' height='" << ch << "' fill='rgb(" << shade
         << "," << shade << ",255)'/>\n";
    }
  os << "</svg>\n";
  return os.str();
}

}  // namespace dull
