#pragma once

// Voxelized scenes: global occupancy grids, frame-indexed scene timelines,
// character-local 32^3 windows and the X-Z navigation projection.
//
// Coordinate frame: Y is up. Grid dims are voxel counts in (x, y, z) order.
// Bits are stored row-major in X, Z, Y order, so
//   linear index = (ix * nz + iz) * ny + iy
// and a voxel is occupied iff its center lies inside some geometry.

#include "dhsi/common.hpp"

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dhsi {

struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.05;
  std::array<std::uint32_t, 3> dims{1, 1, 1};

  void validate() const;
  std::size_t voxel_count() const noexcept {
    return std::size_t{dims[0]} * dims[1] * dims[2];
  }
  Vec3 extent() const noexcept {
    return Vec3(dims[0], dims[1], dims[2]) * voxel_size;
  }
  bool operator==(const GridSpec&) const = default;
};

struct VoxelIndex {
  std::uint32_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelIndex&) const = default;
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  explicit OccupancyGrid(const GridSpec& spec);

  const GridSpec& spec() const noexcept { return spec_; }

  std::size_t linear_index(VoxelIndex v) const noexcept {
    return (std::size_t{v.x} * spec_.dims[2] + v.z) * spec_.dims[1] + v.y;
  }
  bool occupied(VoxelIndex v) const noexcept {
    const auto i = linear_index(v);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(VoxelIndex v, bool value) noexcept;

  Vec3 voxel_center(VoxelIndex v) const noexcept;
  // Voxel containing the point, or nullopt when outside the grid.
  std::optional<VoxelIndex> locate(const Vec3& point) const noexcept;

  std::size_t count() const noexcept;
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  bool operator==(const OccupancyGrid&) const = default;

 private:
  GridSpec spec_;
  std::vector<std::uint64_t> words_;
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  std::string tag;

  bool contains(const Vec3& p) const noexcept {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

// A box-primitive scene document, the JSON counterpart of a voxel grid.
struct BoxScene {
  GridSpec spec;
  std::vector<Box> boxes;
};

OccupancyGrid build_from_boxes(const std::vector<Box>& boxes, const GridSpec& spec);

BoxScene parse_box_scene(const std::string& json_text);
std::string box_scene_to_json(const BoxScene& scene);
BoxScene load_box_scene(const std::filesystem::path& path);

// True iff the containing voxel exists and is occupied.
bool query_occupied(const OccupancyGrid& grid, const Vec3& point) noexcept;

// .grid binary format: "DHSGRID1", origin 3xf64, voxel_size f64, dims 3xu32,
// then ceil(n/8) payload bytes with bit i of the linear index at byte i/8, bit i%8.
void write_grid(std::ostream& out, const OccupancyGrid& grid);
OccupancyGrid read_grid(std::istream& in);
void save_grid(const std::filesystem::path& path, const OccupancyGrid& grid);
OccupancyGrid load_grid(const std::filesystem::path& path);

class SceneTimeline {
 public:
  struct State {
    int activation_frame = 0;
    OccupancyGrid grid;
  };

  explicit SceneTimeline(OccupancyGrid initial);
  explicit SceneTimeline(std::vector<State> states);

  // Grid with the largest activation frame <= frame.
  const OccupancyGrid& grid_at(int frame) const;
  const std::vector<State>& states() const noexcept { return states_; }
  const GridSpec& spec() const noexcept { return states_.front().grid.spec(); }

 private:
  std::vector<State> states_;
};

const OccupancyGrid& grid_at(const SceneTimeline& timeline, int frame);

// Character-local occupancy window: 32^3 cells spanning
// [-0.6, 0.6] x [0, 1.2] x [-0.6, 0.6] m in the anchor's yaw-aligned frame.
struct LocalGrid {
  static constexpr int kCells = 32;
  static constexpr std::size_t kCount = 32 * 32 * 32;
  static constexpr double kHalfWidth = 0.6;
  static constexpr double kHeight = 1.2;
  static constexpr double kCellSize = 1.2 / 32.0;

  std::bitset<kCount> bits;
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;

  static std::size_t index(int i, int j, int k) noexcept {
    return (static_cast<std::size_t>(i) * kCells + k) * kCells + j;
  }
  bool at(int i, int j, int k) const noexcept { return bits[index(i, j, k)]; }
  // Cell center in the local (unrotated, untranslated) frame.
  static Vec3 cell_center(int i, int j, int k) noexcept;
};

// Rotation about +Y; yaw 0 faces +Z. Quarter turns are snapped to exact values.
Eigen::Matrix3d yaw_rotation(double yaw) noexcept;

// Cell (i,j,k) holds the global occupancy at anchor + R(yaw) * cell_center(i,j,k).
LocalGrid extract_local(const OccupancyGrid& grid, const Vec3& anchor, double yaw);

struct VoxelDelta {
  std::size_t changed_count = 0;
  std::bitset<LocalGrid::kCount> changed_mask;
};
VoxelDelta voxel_delta(const LocalGrid& a, const LocalGrid& b);

struct NavGrid2D {
  double origin_x = 0.0;
  double origin_z = 0.0;
  double cell_size = 0.05;
  int nx = 0;
  int nz = 0;
  std::vector<std::uint8_t> blocked;  // index = ix * nz + iz

  std::size_t index(int ix, int iz) const noexcept { return static_cast<std::size_t>(ix) * nz + iz; }
  bool in_bounds(int ix, int iz) const noexcept { return ix >= 0 && iz >= 0 && ix < nx && iz < nz; }
  bool is_blocked(int ix, int iz) const noexcept { return blocked[index(ix, iz)] != 0; }
  Vec2 cell_center(int ix, int iz) const noexcept {
    return {origin_x + (ix + 0.5) * cell_size, origin_z + (iz + 0.5) * cell_size};
  }
  // Cell containing an X-Z point; may be out of bounds.
  std::pair<int, int> cell_of(const Vec2& xz) const noexcept;
  std::size_t blocked_count() const noexcept;
  bool operator==(const NavGrid2D&) const = default;
};

struct HeightBand {
  double y_min = 0.1;
  double y_max = 1.8;
};

// A column is blocked iff a voxel whose center lies within the band is occupied.
NavGrid2D project_2d(const OccupancyGrid& grid, HeightBand band = {});

// A cell is blocked iff some source-blocked cell center lies within `radius` of its center.
NavGrid2D inflate(const NavGrid2D& nav, double radius);

inline constexpr double kDefaultInflationRadius = 0.25;

// Highest occupied surface (top face of the highest occupied voxel with center below
// max_height) in the column containing xz, or 0 for the ground.
double support_height(const OccupancyGrid& grid, const Vec2& xz, double max_height = 1.2);

}  // namespace dhsi
