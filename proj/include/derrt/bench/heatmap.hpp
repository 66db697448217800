#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "derrt/env/configuration.hpp"

namespace derrt::bench {

inline constexpr double kPassageHeatAnchor = 0.01;
inline constexpr double kBugtrapHeatAnchor = 0.002;

/// Visit counts over unit map cells.
class HeatmapGrid {
 public:
  HeatmapGrid(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  /// Counts the cell containing x; points off the map are clamped to the border.
  void add(const env::Configuration& x);
  std::uint64_t count(int cx, int cy) const { return counts_[static_cast<std::size_t>(cy) * width_ + cx]; }
  std::uint64_t total() const { return total_; }

  /// 255 (1 - clamp(count / total / anchor, 0, 1)), rounded; 1 % of samples at anchor 0.01 is black.
  std::uint8_t pixel(int cx, int cy, double anchor) const;

 private:
  int width_;
  int height_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Adds every node position of a tree dump written by planner::write_tree_jsonl.
void accumulate_tree_jsonl(HeatmapGrid& grid, std::istream& in);

/// Binary PGM (P5). Row 0 of the image is the top of the map (largest y).
void write_pgm(std::ostream& out, const HeatmapGrid& grid, double anchor);

}  // namespace derrt::bench
