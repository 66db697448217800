#include "derrt/planner/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace derrt::planner {

GridIndex::GridIndex(double width, double height, double cell)
    : cell_(cell),
      nx_(std::max(1, static_cast<int>(std::ceil(width / cell)))),
      ny_(std::max(1, static_cast<int>(std::ceil(height / cell)))),
      buckets_(static_cast<std::size_t>(nx_) * ny_) {}

int GridIndex::cell_x(double x) const { return std::clamp(static_cast<int>(std::floor(x / cell_)), 0, nx_ - 1); }
int GridIndex::cell_y(double y) const { return std::clamp(static_cast<int>(std::floor(y / cell_)), 0, ny_ - 1); }

void GridIndex::insert(std::size_t id, double x, double y) {
  buckets_[static_cast<std::size_t>(cell_y(y)) * nx_ + cell_x(x)].push_back(id);
}

PlanTree::PlanTree(const Configuration& root, ModelState root_state, double world_width, double world_height,
                   double index_cell) {
  TreeNode n;
  n.id = 0;
  n.x = root;
  n.mu = root;
  n.state = std::move(root_state);
  nodes_.push_back(std::move(n));
  if (index_cell > 0.0 && root.dim() == 2) {
    indexed_ = true;
    index_ = GridIndex(world_width, world_height, index_cell);
    index_.insert(0, root[0], root[1]);
  }
}

std::size_t PlanTree::add(const Configuration& x, const Configuration& mu, std::size_t parent, double cost,
                          ModelState state) {
  if (parent >= nodes_.size()) throw std::out_of_range("PlanTree::add: bad parent");
  TreeNode n;
  n.id = nodes_.size();
  n.parent = parent;
  n.x = x;
  n.mu = mu;
  n.cost = cost;
  n.state = std::move(state);
  nodes_[parent].children.push_back(n.id);
  if (indexed_) index_.insert(n.id, x[0], x[1]);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

std::size_t PlanTree::nearest(const Configuration& x) const {
  if (nodes_.empty()) throw std::logic_error("nearest: empty tree");
  std::size_t best = kNoParent;
  double best_d = std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t id) {
    const double d = distance(nodes_[id].x, x);
    if (d < best_d || (d == best_d && id < best)) {
      best_d = d;
      best = id;
    }
  };
  if (!indexed_) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) consider(i);
    return best;
  }
  const int cx = index_.cell_x(x[0]);
  const int cy = index_.cell_y(x[1]);
  const int max_ring = std::max(index_.nx(), index_.ny());
  for (int ring = 0; ring <= max_ring; ++ring) {
    index_.for_each_in_ring(cx, cy, ring, consider);
    // Anything in ring + 1 or beyond is at least ring * cell away.
    if (best != kNoParent && best_d < ring * index_.cell()) break;
  }
  return best;
}

std::vector<std::size_t> PlanTree::near(const Configuration& x, double radius) const {
  std::vector<std::size_t> out;
  if (!indexed_) {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (distance(nodes_[i].x, x) <= radius) out.push_back(i);
    return out;
  }
  const int cx = index_.cell_x(x[0]);
  const int cy = index_.cell_y(x[1]);
  const int rings = static_cast<int>(std::ceil(radius / index_.cell())) + 1;
  for (int ring = 0; ring <= rings; ++ring)
    index_.for_each_in_ring(cx, cy, ring, [&](std::size_t id) {
      if (distance(nodes_[id].x, x) <= radius) out.push_back(id);
    });
  std::sort(out.begin(), out.end());
  return out;
}

void PlanTree::reparent(std::size_t child, std::size_t new_parent, double new_cost) {
  TreeNode& c = nodes_[child];
  if (c.parent == kNoParent) throw std::logic_error("reparent: cannot move the root");
  auto& siblings = nodes_[c.parent].children;
  siblings.erase(std::find(siblings.begin(), siblings.end(), child));
  c.parent = new_parent;
  nodes_[new_parent].children.push_back(child);
  c.cost = new_cost;
  std::vector<std::size_t> stack(c.children.begin(), c.children.end());
  while (!stack.empty()) {
    TreeNode& n = nodes_[stack.back()];
    stack.pop_back();
    n.cost = nodes_[n.parent].cost + distance(nodes_[n.parent].x, n.x);
    stack.insert(stack.end(), n.children.begin(), n.children.end());
  }
}

void PlanTree::mark_descendants_stale(std::size_t id) {
  std::vector<std::size_t> stack(nodes_[id].children.begin(), nodes_[id].children.end());
  while (!stack.empty()) {
    TreeNode& n = nodes_[stack.back()];
    stack.pop_back();
    n.stale = true;
    stack.insert(stack.end(), n.children.begin(), n.children.end());
  }
}

std::vector<std::size_t> PlanTree::path_to(std::size_t id) const {
  std::vector<std::size_t> path;
  for (std::size_t n = id; n != kNoParent; n = nodes_[n].parent) path.push_back(n);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::string> PlanTree::check_invariants(double tol) const {
  std::vector<std::string> errors;
  std::size_t roots = 0, edges = 0;
  for (const auto& n : nodes_) {
    if (n.parent == kNoParent) {
      ++roots;
      if (n.cost != 0.0) errors.push_back("root cost is not zero");
      continue;
    }
    ++edges;
    if (n.parent >= nodes_.size()) {
      errors.push_back("node " + std::to_string(n.id) + " has an invalid parent");
      continue;
    }
    const auto& p = nodes_[n.parent];
    if (std::abs(n.cost - (p.cost + distance(p.x, n.x))) > tol)
      errors.push_back("node " + std::to_string(n.id) + " cost is inconsistent with its parent");
    if (std::count(p.children.begin(), p.children.end(), n.id) != 1)
      errors.push_back("node " + std::to_string(n.id) + " missing from its parent's child list");
    // Acyclic iff the root is reached within size() hops.
    std::size_t hops = 0;
    for (std::size_t a = n.id; a != kNoParent && hops <= nodes_.size(); a = nodes_[a].parent) ++hops;
    if (hops > nodes_.size()) errors.push_back("cycle through node " + std::to_string(n.id));
  }
  if (roots != 1) errors.push_back("expected exactly one root, found " + std::to_string(roots));
  if (edges != nodes_.size() - 1) errors.push_back("edge count is not |V| - 1");
  if (indexed_) {
    std::size_t indexed = 0;
    for (const auto& b : index_.buckets_) indexed += b.size();
    if (indexed != nodes_.size()) errors.push_back("spatial index size differs from node count");
  }
  return errors;
}

}  // namespace derrt::planner
