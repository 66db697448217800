#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "derrt/planner/steering.hpp"

namespace derrt::planner {

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

struct TreeNode {
  std::size_t id = 0;
  std::size_t parent = kNoParent;
  Configuration x;
  Configuration mu;  ///< steering target the node was created with
  double cost = 0.0;
  ModelState state;
  bool stale = false;
  std::vector<std::size_t> children;
  std::shared_ptr<const NodeObservation> obs;
  bool observed = false;
};

/// Uniform bucket grid over the first two coordinates.
class GridIndex {
 public:
  GridIndex() = default;
  GridIndex(double width, double height, double cell);

  void insert(std::size_t id, double x, double y);
  /// Ids whose bucket lies in the Chebyshev ring `ring` around (cx, cy).
  template <class F>
  void for_each_in_ring(int cx, int cy, int ring, F&& f) const;
  int cell_x(double x) const;
  int cell_y(double y) const;
  double cell() const { return cell_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

 private:
  double cell_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;
  friend class PlanTree;
};

class PlanTree {
 public:
  /// `index_cell` > 0 enables the grid index (2-D configurations only).
  PlanTree(const Configuration& root, ModelState root_state, double world_width, double world_height,
           double index_cell);

  std::size_t size() const { return nodes_.size(); }
  const TreeNode& node(std::size_t id) const { return nodes_[id]; }
  TreeNode& node(std::size_t id) { return nodes_[id]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::size_t add(const Configuration& x, const Configuration& mu, std::size_t parent, double cost, ModelState state);

  /// Euclidean-nearest node; ties go to the lowest id.
  std::size_t nearest(const Configuration& x) const;
  /// Ids within `radius` of x (inclusive), ascending.
  std::vector<std::size_t> near(const Configuration& x, double radius) const;

  /// Moves `child` under `new_parent` with cost `new_cost`; descendant costs
  /// shift by the same amount.
  void reparent(std::size_t child, std::size_t new_parent, double new_cost);
  /// Marks every strict descendant of id stale.
  void mark_descendants_stale(std::size_t id);

  /// Node ids from the root to id.
  std::vector<std::size_t> path_to(std::size_t id) const;

  /// Structural invariants; returns the violations found.
  std::vector<std::string> check_invariants(double tol = 1e-9) const;

 private:
  std::vector<TreeNode> nodes_;
  bool indexed_ = false;
  GridIndex index_;
};

template <class F>
void GridIndex::for_each_in_ring(int cx, int cy, int ring, F&& f) const {
  auto visit = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= nx_ || y >= ny_) return;
    for (std::size_t id : buckets_[static_cast<std::size_t>(y) * nx_ + x]) f(id);
  };
  if (ring == 0) {
    visit(cx, cy);
    return;
  }
  for (int x = cx - ring; x <= cx + ring; ++x) {
    visit(x, cy - ring);
    visit(x, cy + ring);
  }
  for (int y = cy - ring + 1; y <= cy + ring - 1; ++y) {
    visit(cx - ring, y);
    visit(cx + ring, y);
  }
}

}  // namespace derrt::planner
