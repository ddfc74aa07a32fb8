#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gradmarket::cli {

// Minimal static-chart builders. Each returns a complete standalone SVG
// document; the caller decides the filename.

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), drawn in order
};

// Named x positions, e.g. categorical cells mapped to 0, 1, 2, ...
using TickLabels = std::vector<std::pair<double, std::string>>;

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series,
                       const std::optional<TickLabels>& x_ticks = std::nullopt);

struct BarGroup {
  std::string label;
  std::vector<std::optional<double>> values;  // aligned with series names
};

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::string>& series_names,
                      const std::vector<BarGroup>& groups, bool stacked);

}  // namespace gradmarket::cli
