#include "derrt/bench/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace derrt::bench {

HeatmapGrid::HeatmapGrid(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("HeatmapGrid: dimensions must be positive");
  counts_.assign(static_cast<std::size_t>(width) * height, 0);
}

void HeatmapGrid::add(const env::Configuration& x) {
  const int cx = std::clamp(static_cast<int>(std::floor(x[0])), 0, width_ - 1);
  const int cy = std::clamp(static_cast<int>(std::floor(x[1])), 0, height_ - 1);
  ++counts_[static_cast<std::size_t>(cy) * width_ + cx];
  ++total_;
}

std::uint8_t HeatmapGrid::pixel(int cx, int cy, double anchor) const {
  if (!(anchor > 0.0)) throw std::invalid_argument("heatmap anchor must be positive");
  if (total_ == 0) throw std::logic_error("heatmap has no samples");
  const double frac = static_cast<double>(count(cx, cy)) / static_cast<double>(total_);
  const double intensity = std::clamp(frac / anchor, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - intensity)));
}

void accumulate_tree_jsonl(HeatmapGrid& grid, std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto& x = j.at("x");
    grid.add(env::Configuration{x.at(0).get<double>(), x.at(1).get<double>()});
  }
}

void write_pgm(std::ostream& out, const HeatmapGrid& grid, double anchor) {
  if (grid.total() == 0) throw std::invalid_argument("write_pgm: empty heatmap");
  out << "P5\n" << grid.width() << ' ' << grid.height() << "\n255\n";
  std::string row(static_cast<std::size_t>(grid.width()), '\0');
  for (int r = 0; r < grid.height(); ++r) {
    const int cy = grid.height() - 1 - r;
    for (int cx = 0; cx < grid.width(); ++cx) row[static_cast<std::size_t>(cx)] = static_cast<char>(grid.pixel(cx, cy, anchor));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace derrt::bench
