#include "dhsi/voxel_scene.hpp"

#include "dhsi/binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dhsi {

namespace {

constexpr std::string_view kGridMagic = "DHSGRID1";

std::size_t word_count(std::size_t bits) { return (bits + 63) / 64; }

}  // namespace

void GridSpec::validate() const {
  require(std::isfinite(voxel_size) && voxel_size > 0, ErrorKind::Config, "voxel_size must be positive");
  require(origin.allFinite(), ErrorKind::Config, "grid origin must be finite");
  for (auto d : dims) require(d >= 1, ErrorKind::Config, "grid dims must be >= 1");
  require(voxel_count() <= (std::size_t{1} << 34), ErrorKind::Config, "grid too large");
}

OccupancyGrid::OccupancyGrid(const GridSpec& spec) : spec_(spec) {
  spec_.validate();
  words_.assign(word_count(spec_.voxel_count()), 0);
}

void OccupancyGrid::set(VoxelIndex v, bool value) noexcept {
  const auto i = linear_index(v);
  const std::uint64_t mask = std::uint64_t{1} << (i & 63);
  if (value)
    words_[i >> 6] |= mask;
  else
    words_[i >> 6] &= ~mask;
}

Vec3 OccupancyGrid::voxel_center(VoxelIndex v) const noexcept {
  return spec_.origin + (Vec3(v.x, v.y, v.z).array() + 0.5).matrix() * spec_.voxel_size;
}

std::optional<VoxelIndex> OccupancyGrid::locate(const Vec3& point) const noexcept {
  std::array<std::uint32_t, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((point[a] - spec_.origin[a]) / spec_.voxel_size);
    if (!(f >= 0.0) || f >= static_cast<double>(spec_.dims[a])) return std::nullopt;
    idx[a] = static_cast<std::uint32_t>(f);
  }
  return VoxelIndex{idx[0], idx[1], idx[2]};
}

std::size_t OccupancyGrid::count() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

OccupancyGrid build_from_boxes(const std::vector<Box>& boxes, const GridSpec& spec) {
  OccupancyGrid grid(spec);
  for (const auto& box : boxes) {
    require(box.min.allFinite() && box.max.allFinite(), ErrorKind::Input, "box corners must be finite");
    std::array<std::int64_t, 3> lo{}, hi{};
    bool empty = false;
    for (int a = 0; a < 3; ++a) {
      // Candidate range with one voxel of slack; the exact test below decides.
      const double l = (box.min[a] - spec.origin[a]) / spec.voxel_size - 0.5;
      const double h = (box.max[a] - spec.origin[a]) / spec.voxel_size - 0.5;
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(l)) - 1);
      hi[a] = std::min<std::int64_t>(spec.dims[a] - 1, static_cast<std::int64_t>(std::floor(h)) + 1);
      if (lo[a] > hi[a]) empty = true;
    }
    if (empty) continue;
    for (auto x = lo[0]; x <= hi[0]; ++x)
      for (auto z = lo[2]; z <= hi[2]; ++z)
        for (auto y = lo[1]; y <= hi[1]; ++y) {
          const VoxelIndex v{static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                             static_cast<std::uint32_t>(z)};
          if (box.contains(grid.voxel_center(v))) grid.set(v, true);
        }
  }
  return grid;
}

namespace {

Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  require(j.is_array() && j.size() == 3, ErrorKind::Input, std::string(what) + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

BoxScene parse_box_scene(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Input, std::string("box scene JSON: ") + e.what());
  }
  BoxScene scene;
  try {
    scene.spec.voxel_size = doc.at("voxel_size").get<double>();
    scene.spec.origin = vec3_from_json(doc.at("origin"), "origin");
    const auto& dims = doc.at("dims");
    require(dims.is_array() && dims.size() == 3, ErrorKind::Input, "dims must be a 3-element array");
    for (int a = 0; a < 3; ++a) {
      const auto d = dims[a].get<std::int64_t>();
      require(d >= 1 && d <= std::numeric_limits<std::uint32_t>::max(), ErrorKind::Config, "grid dims must be >= 1");
      scene.spec.dims[a] = static_cast<std::uint32_t>(d);
    }
    if (doc.contains("boxes")) {
      for (const auto& b : doc.at("boxes")) {
        Box box;
        box.min = vec3_from_json(b.at("min"), "box min");
        box.max = vec3_from_json(b.at("max"), "box max");
        box.tag = b.value("tag", "");
        scene.boxes.push_back(std::move(box));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Input, std::string("box scene JSON: ") + e.what());
  }
  scene.spec.validate();
  return scene;
}

std::string box_scene_to_json(const BoxScene& scene) {
  auto arr = [](const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); };
  nlohmann::json doc;
  doc["voxel_size"] = scene.spec.voxel_size;
  doc["origin"] = arr(scene.spec.origin);
  doc["dims"] = {scene.spec.dims[0], scene.spec.dims[1], scene.spec.dims[2]};
  doc["boxes"] = nlohmann::json::array();
  for (const auto& b : scene.boxes) doc["boxes"].push_back({{"min", arr(b.min)}, {"max", arr(b.max)}, {"tag", b.tag}});
  return doc.dump(2);
}

BoxScene load_box_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_box_scene(ss.str());
}

bool query_occupied(const OccupancyGrid& grid, const Vec3& point) noexcept {
  const auto v = grid.locate(point);
  return v && grid.occupied(*v);
}

void write_grid(std::ostream& out, const OccupancyGrid& grid) {
  const auto& spec = grid.spec();
  bin::put_bytes(out, kGridMagic);
  for (int a = 0; a < 3; ++a) bin::put<double>(out, spec.origin[a]);
  bin::put<double>(out, spec.voxel_size);
  for (auto d : spec.dims) bin::put<std::uint32_t>(out, d);
  const std::size_t nbytes = (spec.voxel_count() + 7) / 8;
  std::string payload(nbytes, '\0');
  for (std::size_t i = 0; i < nbytes; ++i)
    payload[i] = static_cast<char>((grid.words()[i / 8] >> (8 * (i % 8))) & 0xFFu);
  bin::put_bytes(out, payload);
}

OccupancyGrid read_grid(std::istream& in) {
  bin::expect_magic(in, kGridMagic);
  GridSpec spec;
  for (int a = 0; a < 3; ++a) spec.origin[a] = bin::get<double>(in);
  spec.voxel_size = bin::get<double>(in);
  for (auto& d : spec.dims) d = bin::get<std::uint32_t>(in);
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("invalid grid header: ") + e.what());
  }
  OccupancyGrid grid(spec);
  const std::size_t n = spec.voxel_count();
  const std::string payload = bin::get_bytes(in, (n + 7) / 8);
  for (std::size_t i = 0; i < n; ++i)
    if ((static_cast<unsigned char>(payload[i / 8]) >> (i % 8)) & 1u) {
      const auto y = static_cast<std::uint32_t>(i % spec.dims[1]);
      const auto xz = i / spec.dims[1];
      grid.set({static_cast<std::uint32_t>(xz / spec.dims[2]), y, static_cast<std::uint32_t>(xz % spec.dims[2])}, true);
    }
  return grid;
}

void save_grid(const std::filesystem::path& path, const OccupancyGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorKind::Io, "cannot write " + path.string());
  write_grid(out, grid);
  require(bool(out), ErrorKind::Io, "write failed for " + path.string());
}

OccupancyGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::Io, "cannot open " + path.string());
  return read_grid(in);
}

SceneTimeline::SceneTimeline(OccupancyGrid initial) {
  states_.push_back({0, std::move(initial)});
}

SceneTimeline::SceneTimeline(std::vector<State> states) : states_(std::move(states)) {
  require(!states_.empty(), ErrorKind::Input, "timeline needs at least one state");
  require(states_.front().activation_frame == 0, ErrorKind::Input, "first activation frame must be 0");
  for (std::size_t i = 1; i < states_.size(); ++i) {
    require(states_[i].activation_frame > states_[i - 1].activation_frame, ErrorKind::Input,
            "activation frames must be strictly increasing");
    require(states_[i].grid.spec() == states_.front().grid.spec(), ErrorKind::Input,
            "timeline grids must share one GridSpec");
  }
}

const OccupancyGrid& SceneTimeline::grid_at(int frame) const {
  require(frame >= 0, ErrorKind::Input, "frame must be non-negative");
  auto it = std::upper_bound(states_.begin(), states_.end(), frame,
                             [](int f, const State& s) { return f < s.activation_frame; });
  return std::prev(it)->grid;
}

const OccupancyGrid& grid_at(const SceneTimeline& timeline, int frame) { return timeline.grid_at(frame); }

Vec3 LocalGrid::cell_center(int i, int j, int k) noexcept {
  return {-kHalfWidth + (i + 0.5) * kCellSize, (j + 0.5) * kCellSize, -kHalfWidth + (k + 0.5) * kCellSize};
}

Eigen::Matrix3d yaw_rotation(double yaw) noexcept {
  double c = std::cos(yaw), s = std::sin(yaw);
  const double quarters = yaw / (std::numbers::pi / 2);
  const double nearest = std::round(quarters);
  if (std::abs(quarters - nearest) < 1e-12) {
    const auto q = ((static_cast<long long>(nearest) % 4) + 4) % 4;
    constexpr double cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    c = cs[q][0];
    s = cs[q][1];
  }
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

LocalGrid extract_local(const OccupancyGrid& grid, const Vec3& anchor, double yaw) {
  LocalGrid local;
  local.center = anchor;
  local.yaw = yaw;
  const Eigen::Matrix3d r = yaw_rotation(yaw);
  for (int i = 0; i < LocalGrid::kCells; ++i)
    for (int k = 0; k < LocalGrid::kCells; ++k) {
      const Vec3 base = anchor + r * LocalGrid::cell_center(i, 0, k);
      for (int j = 0; j < LocalGrid::kCells; ++j) {
        Vec3 p = base;
        p.y() = anchor.y() + (j + 0.5) * LocalGrid::kCellSize;
        if (query_occupied(grid, p)) local.bits.set(LocalGrid::index(i, j, k));
      }
    }
  return local;
}

VoxelDelta voxel_delta(const LocalGrid& a, const LocalGrid& b) {
  VoxelDelta d;
  d.changed_mask = a.bits ^ b.bits;
  d.changed_count = d.changed_mask.count();
  return d;
}

std::pair<int, int> NavGrid2D::cell_of(const Vec2& xz) const noexcept {
  return {static_cast<int>(std::floor((xz.x() - origin_x) / cell_size)),
          static_cast<int>(std::floor((xz.y() - origin_z) / cell_size))};
}

std::size_t NavGrid2D::blocked_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(blocked.begin(), blocked.end(), [](auto b) { return b != 0; }));
}

NavGrid2D project_2d(const OccupancyGrid& grid, HeightBand band) {
  require(band.y_min < band.y_max, ErrorKind::Input, "height band requires y_min < y_max");
  const auto& spec = grid.spec();
  NavGrid2D nav;
  nav.origin_x = spec.origin.x();
  nav.origin_z = spec.origin.z();
  nav.cell_size = spec.voxel_size;
  nav.nx = static_cast<int>(spec.dims[0]);
  nav.nz = static_cast<int>(spec.dims[2]);
  nav.blocked.assign(static_cast<std::size_t>(nav.nx) * nav.nz, 0);

  std::vector<std::uint32_t> layers;
  for (std::uint32_t y = 0; y < spec.dims[1]; ++y) {
    const double cy = spec.origin.y() + (y + 0.5) * spec.voxel_size;
    if (cy >= band.y_min && cy <= band.y_max) layers.push_back(y);
  }
  for (int x = 0; x < nav.nx; ++x)
    for (int z = 0; z < nav.nz; ++z)
      for (auto y : layers)
        if (grid.occupied({static_cast<std::uint32_t>(x), y, static_cast<std::uint32_t>(z)})) {
          nav.blocked[nav.index(x, z)] = 1;
          break;
        }
  return nav;
}

NavGrid2D inflate(const NavGrid2D& nav, double radius) {
  require(radius >= 0 && std::isfinite(radius), ErrorKind::Input, "inflation radius must be >= 0");
  NavGrid2D out = nav;
  const int reach = static_cast<int>(std::floor(radius / nav.cell_size));
  std::vector<std::pair<int, int>> disk;
  for (int dx = -reach; dx <= reach; ++dx)
    for (int dz = -reach; dz <= reach; ++dz)
      if (std::hypot(dx * nav.cell_size, dz * nav.cell_size) <= radius) disk.emplace_back(dx, dz);
  for (int x = 0; x < nav.nx; ++x)
    for (int z = 0; z < nav.nz; ++z) {
      if (!nav.is_blocked(x, z)) continue;
      for (auto [dx, dz] : disk)
        if (nav.in_bounds(x + dx, z + dz)) out.blocked[out.index(x + dx, z + dz)] = 1;
    }
  return out;
}

double support_height(const OccupancyGrid& grid, const Vec2& xz, double max_height) {
  const auto& spec = grid.spec();
  const auto v = grid.locate(Vec3(xz.x(), spec.origin.y() + 0.5 * spec.voxel_size, xz.y()));
  if (!v) return 0.0;
  double top = 0.0;
  for (std::uint32_t y = 0; y < spec.dims[1]; ++y) {
    const double cy = spec.origin.y() + (y + 0.5) * spec.voxel_size;
    if (cy >= max_height) break;
    if (grid.occupied({v->x, y, v->z})) top = spec.origin.y() + (y + 1) * spec.voxel_size;
  }
  return top;
}

}  // namespace dhsi
