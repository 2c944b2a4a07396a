#include "dhsi/planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <queue>
#include <tuple>

namespace dhsi {

double OctileCost::value() const noexcept { return axis + diag * std::numbers::sqrt2; }

std::strong_ordering OctileCost::operator<=>(const OctileCost& o) const noexcept {
  // compare axis + diag*sqrt2 exactly: da vs db*sqrt2 with da = axis - o.axis, db = o.diag - diag
  const long long da = axis - o.axis;
  const long long db = o.diag - diag;
  if (da == 0 && db == 0) return std::strong_ordering::equal;
  bool less;
  if (db >= 0 && da <= 0)
    less = true;
  else if (db <= 0 && da >= 0)
    less = false;
  else if (da > 0)  // both positive
    less = da * da < 2 * db * db;
  else  // both negative
    less = da * da > 2 * db * db;
  return less ? std::strong_ordering::less : std::strong_ordering::greater;
}

OctileCost octile_distance(std::pair<int, int> a, std::pair<int, int> b) noexcept {
  const int dx = std::abs(a.first - b.first), dz = std::abs(a.second - b.second);
  return {std::max(dx, dz) - std::min(dx, dz), std::min(dx, dz)};
}

double PathPlan::length_m() const {
  double len = 0;
  for (std::size_t i = 1; i < world_points.size(); ++i) len += (world_points[i] - world_points[i - 1]).norm();
  return len;
}

bool step_allowed(const NavGrid2D& nav, std::pair<int, int> a, std::pair<int, int> b) noexcept {
  if (!nav.in_bounds(b.first, b.second) || nav.is_blocked(b.first, b.second)) return false;
  if (a.first != b.first && a.second != b.second)
    return !nav.is_blocked(a.first, b.second) && !nav.is_blocked(b.first, a.second);
  return true;
}

PathPlan plan_global(const NavGrid2D& nav, const Vec2& start, const Vec2& goal) {
  require(start.allFinite() && goal.allFinite(), ErrorKind::Input, "non-finite endpoint");
  const auto s = nav.cell_of(start), g = nav.cell_of(goal);
  if (!nav.in_bounds(s.first, s.second) || nav.is_blocked(s.first, s.second))
    fail(ErrorKind::UnreachableEndpoint, "start cell is blocked or outside the grid");
  if (!nav.in_bounds(g.first, g.second) || nav.is_blocked(g.first, g.second))
    fail(ErrorKind::UnreachableEndpoint, "goal cell is blocked or outside the grid");

  const std::size_t n = static_cast<std::size_t>(nav.nx) * nav.nz;
  constexpr int kUnset = -1;
  std::vector<OctileCost> best(n);
  std::vector<int> parent(n, kUnset);
  std::vector<std::uint8_t> seen(n, 0), closed(n, 0);

  // (f, h, ix, iz), smallest first
  using Entry = std::tuple<OctileCost, OctileCost, int, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const auto si = nav.index(s.first, s.second);
  best[si] = {};
  seen[si] = 1;
  open.emplace(octile_distance(s, g), octile_distance(s, g), s.first, s.second);

  static constexpr int kDx[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static constexpr int kDz[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  bool found = false;
  while (!open.empty()) {
    const auto [f, h, x, z] = open.top();
    open.pop();
    const auto ci = nav.index(x, z);
    if (closed[ci]) continue;
    closed[ci] = 1;
    if (x == g.first && z == g.second) {
      found = true;
      break;
    }
    for (int d = 0; d < 8; ++d) {
      const std::pair<int, int> nb{x + kDx[d], z + kDz[d]};
      if (!step_allowed(nav, {x, z}, nb)) continue;
      const auto ni = nav.index(nb.first, nb.second);
      if (closed[ni]) continue;
      const bool diagonal = kDx[d] != 0 && kDz[d] != 0;
      const OctileCost cand = best[ci] + OctileCost{diagonal ? 0 : 1, diagonal ? 1 : 0};
      if (!seen[ni] || cand < best[ni]) {
        seen[ni] = 1;
        best[ni] = cand;
        parent[ni] = static_cast<int>(ci);
        const auto hn = octile_distance(nb, g);
        open.emplace(cand + hn, hn, nb.first, nb.second);
      }
    }
  }
  if (!found) fail(ErrorKind::NoPath, "no path between start and goal");

  PathPlan plan;
  plan.cost = best[nav.index(g.first, g.second)];
  for (int i = static_cast<int>(nav.index(g.first, g.second)); i != kUnset; i = parent[static_cast<std::size_t>(i)]) {
    plan.cells.emplace_back(i / nav.nz, i % nav.nz);
    if (i == static_cast<int>(si)) break;
  }
  std::reverse(plan.cells.begin(), plan.cells.end());
  for (const auto& c : plan.cells) plan.world_points.push_back(nav.cell_center(c.first, c.second));
  plan.world_points.front() = start;
  plan.world_points.back() = goal;
  if (plan.cells.size() == 1) plan.world_points = {start, goal};
  return plan;
}

std::vector<Vec3> select_keypoints(const PathPlan& plan, int k, double goal_height) {
  require(k >= 1, ErrorKind::Input, "keypoint count must be >= 1");
  require(!plan.world_points.empty(), ErrorKind::Input, "empty path");
  const auto& pts = plan.world_points;
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = cum.back();
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(k));
  std::size_t seg = 1;
  for (int i = 1; i <= k; ++i) {
    Vec2 p;
    if (i == k || total == 0.0) {
      p = pts.back();
    } else {
      const double target = total * i / k;
      while (seg + 1 < pts.size() && cum[seg] < target) ++seg;
      const double len = cum[seg] - cum[seg - 1];
      const double t = len > 0 ? (target - cum[seg - 1]) / len : 0.0;
      p = pts[seg - 1] + t * (pts[seg] - pts[seg - 1]);
    }
    out.emplace_back(p.x(), i == k ? goal_height : 0.0, p.y());
  }
  return out;
}

bool line_of_sight(const NavGrid2D& nav, const Vec2& a, const Vec2& b) {
  const double len = (b - a).norm();
  const int samples = std::max(1, static_cast<int>(std::ceil(len / (0.25 * nav.cell_size))));
  for (int i = 0; i <= samples; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / samples);
    const auto [x, z] = nav.cell_of(p);
    if (!nav.in_bounds(x, z) || nav.is_blocked(x, z)) return false;
  }
  return true;
}

std::vector<Vec2> shortcut_path(const NavGrid2D& nav, const std::vector<Vec2>& points) {
  if (points.size() <= 2) return points;
  std::vector<Vec2> out{points.front()};
  std::size_t anchor = 0;
  while (anchor + 1 < points.size()) {
    std::size_t next = anchor + 1;
    for (std::size_t j = points.size() - 1; j > anchor + 1; --j)
      if (line_of_sight(nav, points[anchor], points[j])) {
        next = j;
        break;
      }
    out.push_back(points[next]);
    anchor = next;
  }
  return out;
}

std::optional<std::pair<int, int>> nearest_free(const NavGrid2D& nav, std::pair<int, int> cell) {
  cell.first = std::clamp(cell.first, 0, nav.nx - 1);
  cell.second = std::clamp(cell.second, 0, nav.nz - 1);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(nav.nx) * nav.nz, 0);
  std::deque<std::pair<int, int>> q{cell};
  seen[nav.index(cell.first, cell.second)] = 1;
  while (!q.empty()) {
    const auto c = q.front();
    q.pop_front();
    if (!nav.is_blocked(c.first, c.second)) return c;
    for (auto [dx, dz] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const std::pair<int, int> nb{c.first + dx, c.second + dz};
      if (!nav.in_bounds(nb.first, nb.second) || seen[nav.index(nb.first, nb.second)]) continue;
      seen[nav.index(nb.first, nb.second)] = 1;
      q.push_back(nb);
    }
  }
  return std::nullopt;
}

}  // namespace dhsi
