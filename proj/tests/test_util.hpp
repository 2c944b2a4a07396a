#pragma once

// Shared generators and independent oracles for the test suites.

#include "dhsi/planner.hpp"
#include "dhsi/voxel_scene.hpp"

#include <cmath>
#include <optional>
#include <queue>
#include <random>
#include <vector>

namespace dhsi::testing {

// Square room grid centred on the origin in X-Z, 0.05 m voxels.
inline GridSpec room_spec(double half_extent = 2.0, double height = 2.0, double voxel = 0.05) {
  GridSpec s;
  s.voxel_size = voxel;
  s.origin = Vec3(-half_extent, 0.0, -half_extent);
  const auto n = static_cast<std::uint32_t>(std::llround(2 * half_extent / voxel));
  s.dims = {n, static_cast<std::uint32_t>(std::llround(height / voxel)), n};
  return s;
}

inline std::vector<Box> random_boxes(Rng& rng, int count, double half_extent = 1.8, double max_height = 1.6) {
  std::uniform_real_distribution<double> pos(-half_extent, half_extent);
  std::uniform_real_distribution<double> size(0.1, 0.9);
  std::uniform_real_distribution<double> h(0.05, max_height);
  std::vector<Box> boxes;
  for (int i = 0; i < count; ++i) {
    Box b;
    b.min = Vec3(pos(rng), 0.0, pos(rng));
    b.max = b.min + Vec3(size(rng), h(rng), size(rng));
    b.tag = "box";
    boxes.push_back(b);
  }
  return boxes;
}

// Boxes whose faces lie on voxel boundaries, so quarter turns about a lattice corner
// map the voxelization onto itself.
inline std::vector<Box> lattice_boxes(Rng& rng, int count, double voxel, int half_cells, int height_cells) {
  std::uniform_int_distribution<int> pos(-half_cells, half_cells - 1);
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_int_distribution<int> h(1, height_cells);
  std::vector<Box> boxes;
  for (int i = 0; i < count; ++i) {
    const int x = pos(rng), z = pos(rng);
    const int sx = size(rng), sz = size(rng);
    Box b;
    b.min = Vec3(x * voxel, 0.0, z * voxel);
    b.max = Vec3(std::min(x + sx, half_cells) * voxel, h(rng) * voxel, std::min(z + sz, half_cells) * voxel);
    boxes.push_back(b);
  }
  return boxes;
}

// Naive coordinate-to-voxel lookup written independently of OccupancyGrid::locate.
inline bool oracle_occupied(const OccupancyGrid& g, const Vec3& p) {
  const auto& s = g.spec();
  long idx[3];
  for (int a = 0; a < 3; ++a) {
    const double rel = (p[a] - s.origin[a]) / s.voxel_size;
    if (rel < 0) return false;
    idx[a] = static_cast<long>(rel);
    if (idx[a] >= static_cast<long>(s.dims[a])) return false;
  }
  return g.occupied({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[1]),
                     static_cast<std::uint32_t>(idx[2])});
}

// Quarter turn of boxes about a vertical axis through `pivot`.
inline std::vector<Box> rotate_quarter(const std::vector<Box>& boxes, const Vec3& pivot) {
  std::vector<Box> out;
  for (const auto& b : boxes) {
    // (x, z) -> (z, -x) about the pivot, i.e. a +90 degree yaw
    const Vec3 a = b.min - pivot, c = b.max - pivot;
    Box r;
    r.min = pivot + Vec3(std::min(a.z(), c.z()), a.y(), std::min(-a.x(), -c.x()));
    r.max = pivot + Vec3(std::max(a.z(), c.z()), c.y(), std::max(-a.x(), -c.x()));
    out.push_back(r);
  }
  return out;
}


// Exact comparison of a1 + b1*sqrt2 < a2 + b2*sqrt2 over the integers.
inline bool less_exact(long a1, long b1, long a2, long b2) {
  const long da = a2 - a1;  // need b1*sqrt2 - b2*sqrt2 < da
  const long db = b1 - b2;  // db*sqrt2 < da
  if (db == 0) return da > 0;
  if (db > 0) return da > 0 && 2 * db * db < da * da;
  return da >= 0 || 2 * db * db > da * da;
}

struct ExactCost {
  long a = 0, b = 0;
  bool operator>(const ExactCost& o) const { return less_exact(o.a, o.b, a, b); }
};

// Plain Dijkstra with the same move rules, written without reference to the planner.
inline std::optional<ExactCost> dijkstra(const NavGrid2D& nav, std::pair<int, int> s, std::pair<int, int> g) {
  const auto free = [&](int x, int z) { return x >= 0 && z >= 0 && x < nav.nx && z < nav.nz && !nav.blocked[x * nav.nz + z]; };
  std::vector<std::optional<ExactCost>> best(nav.blocked.size());
  using Item = std::pair<ExactCost, int>;
  auto cmp = [](const Item& l, const Item& r) { return l.first > r.first; };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> open(cmp);
  best[s.first * nav.nz + s.second] = ExactCost{};
  open.push({ExactCost{}, s.first * nav.nz + s.second});
  while (!open.empty()) {
    auto [c, id] = open.top();
    open.pop();
    const auto& cur = best[id];
    if (cur->a != c.a || cur->b != c.b) continue;
    const int x = id / nav.nz, z = id % nav.nz;
    if (x == g.first && z == g.second) return c;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dz = -1; dz <= 1; ++dz) {
        if (!dx && !dz) continue;
        const int nx = x + dx, nz = z + dz;
        if (!free(nx, nz)) continue;
        if (dx && dz && (!free(x + dx, z) || !free(x, z + dz))) continue;
        ExactCost n = c;
        (dx && dz ? n.b : n.a) += 1;
        auto& slot = best[nx * nav.nz + nz];
        if (!slot || *slot > n) {
          slot = n;
          open.push({n, nx * nav.nz + nz});
        }
      }
  }
  return std::nullopt;
}

}  // namespace dhsi::testing
