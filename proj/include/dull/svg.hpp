#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dull {

using Series = std::pair<std::string, std::vector<double>>;

std::string svg_line_chart(const std::string& title,
                           const std::vector<Series>& series);

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::string>& categories,
                          const std::vector<Series>& groups);

std::string svg_heatmap(const std::string& title,
                        const std::vector<double>& values, int rows, int cols);

}  // namespace dull
