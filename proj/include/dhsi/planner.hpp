#pragma once

// Global path planning on the inflated X-Z navigation grid.
//
// 8-connected A* with unit axis and sqrt(2) diagonal steps. Diagonal moves may
// not cut a blocked corner. Costs are kept as exact (axis, diagonal) step
// counts so equal-cost comparisons never depend on floating-point summation
// order. Ties break on the smaller heuristic, then the lexicographically
// smaller (ix, iz) cell.

#include "dhsi/voxel_scene.hpp"

#include <compare>
#include <utility>
#include <vector>

namespace dhsi {

struct OctileCost {
  int axis = 0;
  int diag = 0;

  double value() const noexcept;
  OctileCost operator+(const OctileCost& o) const noexcept { return {axis + o.axis, diag + o.diag}; }
  bool operator==(const OctileCost&) const = default;
  std::strong_ordering operator<=>(const OctileCost& o) const noexcept;
};

// Octile distance between two cells, in steps.
OctileCost octile_distance(std::pair<int, int> a, std::pair<int, int> b) noexcept;

struct PathPlan {
  std::vector<std::pair<int, int>> cells;
  std::vector<Vec2> world_points;  // X-Z; first/last are the exact start and goal
  OctileCost cost;                 // in cells
  double length_m() const;         // polyline length of world_points
};

PathPlan plan_global(const NavGrid2D& inflated, const Vec2& start, const Vec2& goal);

// Whether the diagonal step from a to b is allowed (both cells free, corners free).
bool step_allowed(const NavGrid2D& nav, std::pair<int, int> a, std::pair<int, int> b) noexcept;

// Points at arc-length fractions i/k, i = 1..k, along the plan's world points,
// lifted to 3-D at Y = 0 except the last, which takes `goal_height`.
std::vector<Vec3> select_keypoints(const PathPlan& plan, int k, double goal_height = 0.0);

// Greedy line-of-sight shortcutting of a planned polyline against the grid.
std::vector<Vec2> shortcut_path(const NavGrid2D& nav, const std::vector<Vec2>& points);
bool line_of_sight(const NavGrid2D& nav, const Vec2& a, const Vec2& b);

// Nearest free cell to `cell` by breadth-first search; nullopt if the grid is fully blocked.
std::optional<std::pair<int, int>> nearest_free(const NavGrid2D& nav, std::pair<int, int> cell);

}  // namespace dhsi
