#include "dhsi/toy_world.hpp"

#include "dhsi/metrics.hpp"
#include "dhsi/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dhsi {

namespace {

constexpr double kStride = 1.3;         // metres per full gait cycle
constexpr double kMaxTurn = 0.2;        // radians per frame
constexpr double kFurnitureGap = 0.75;  // minimum footprint clearance between furniture
constexpr double kWallMargin = 0.6;

struct Footprint {
  double x0, z0, x1, z1;
};

Footprint footprint(const Box& b) { return {b.min.x(), b.min.z(), b.max.x(), b.max.z()}; }

double rect_distance(const Footprint& a, const Footprint& b) {
  const double dx = std::max({0.0, b.x0 - a.x1, a.x0 - b.x1});
  const double dz = std::max({0.0, b.z0 - a.z1, a.z0 - b.z1});
  return std::hypot(dx, dz);
}

double point_rect_distance(const Vec2& p, const Footprint& r) {
  const double dx = std::max({0.0, r.x0 - p.x(), p.x() - r.x1});
  const double dz = std::max({0.0, r.z0 - p.y(), p.y() - r.z1});
  return std::hypot(dx, dz);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

// Rotation about the body's lateral axis; positive angles swing a hanging limb forward (+Z).
Eigen::Matrix3d swing(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), std::sin(a), 0, -std::sin(a), std::cos(a);
  return m;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3 - 2 * x);
}

bool free_at(const NavGrid2D& nav, const Vec2& p) {
  const auto c = nav.cell_of(p);
  return nav.in_bounds(c.first, c.second) && !nav.is_blocked(c.first, c.second);
}

std::optional<Vec2> random_free_point(Rng& rng, const NavGrid2D& nav) {
  for (int i = 0; i < 500; ++i) {
    const Vec2 p(uniform(rng, -kRoomHalfExtent + 0.4, kRoomHalfExtent - 0.4),
                 uniform(rng, -kRoomHalfExtent + 0.4, kRoomHalfExtent - 0.4));
    if (free_at(nav, p)) return p;
  }
  return std::nullopt;
}

std::optional<PathPlan> try_plan(const NavGrid2D& nav, const Vec2& a, const Vec2& b) {
  try {
    return plan_global(nav, a, b);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string nearest_object(const BoxScene& scene, const Vec2& p) {
  std::string best = "wall";
  double best_d = 1.2;
  for (const auto& b : scene.boxes) {
    if (b.tag == "wall") continue;
    const double d = point_rect_distance(p, footprint(b));
    if (d < best_d) best_d = d, best = b.tag;
  }
  return best;
}

std::string walk_prompt(Rng& rng, const BoxScene& scene, const Vec2& goal, double speed) {
  const std::string obj = nearest_object(scene, goal);
  std::string base = obj == "wall" ? pick(rng, std::vector<std::string>{"walk across the room", "walk to the open space"})
                                   : pick(rng, std::vector<std::string>{"walk to the ", "walk over to the "}) + obj;
  if (speed < 0.9) base += " slowly";
  if (speed > 1.5) base += " quickly";
  return base;
}

// Pelvis ground track from the oracle, trimmed to `hold` frames after arrival.
std::optional<std::vector<Vec2>> oracle_track(const SceneTimeline& tl, const Vec2& start, const Vec2& goal,
                                              double path_len, double speed, int hold) {
  OracleConfig cfg;
  cfg.speed = speed;
  const int frames = static_cast<int>(std::ceil(path_len * 1.8 / speed * kFrameRate)) + 40;
  TrajectorySegment seg;
  try {
    seg = oracle_navigator(tl, Vec3(start.x(), 0, start.y()), Vec3(goal.x(), 0, goal.y()), frames, cfg);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::vector<Vec2> track;
  int arrival = -1;
  for (int f = 0; f < frames; ++f) {
    const Vec3& p = seg.waypoints[static_cast<std::size_t>(f)].position;
    track.emplace_back(p.x(), p.z());
    if (arrival < 0 && (track.back() - goal).norm() < 1e-9) arrival = f;
  }
  if (arrival < 0) return std::nullopt;
  track.resize(static_cast<std::size_t>(std::min(frames, arrival + hold)));
  return track;
}

std::vector<PoseParams> append_turn(std::vector<PoseParams> ps, double target_yaw, int frames) {
  const PoseParams last = ps.back();
  const double delta = wrap_angle(target_yaw - last.yaw);
  for (int i = 1; i <= frames; ++i) {
    PoseParams p = last;
    p.yaw = wrap_angle(last.yaw + delta * smoothstep(static_cast<double>(i) / frames));
    p.gait = last.gait * (1.0 - static_cast<double>(i) / frames);
    ps.push_back(p);
  }
  return ps;
}

struct Side {
  Vec2 normal;
  Vec2 approach;
};

// Free approach points at `distance` beyond each face of a box.
std::vector<Side> approach_sides(const Box& b, const NavGrid2D& nav, double distance) {
  const Vec2 c(0.5 * (b.min.x() + b.max.x()), 0.5 * (b.min.z() + b.max.z()));
  const Vec2 half(0.5 * (b.max.x() - b.min.x()), 0.5 * (b.max.z() - b.min.z()));
  std::vector<Side> out;
  for (const Vec2& n : {Vec2(1, 0), Vec2(-1, 0), Vec2(0, 1), Vec2(0, -1)}) {
    const double extent = std::abs(n.x()) * half.x() + std::abs(n.y()) * half.y();
    const Vec2 a = c + n * (extent + distance);
    if (free_at(nav, a)) out.push_back({n, a});
  }
  return out;
}

bool fits_room(const Footprint& f) {
  const double lim = kRoomHalfExtent - kWallMargin + 0.1;
  return f.x0 >= -lim && f.z0 >= -lim && f.x1 <= lim && f.z1 <= lim;
}

// Moves box `index` so its footprint is centred at `centre`; nullopt if it would collide.
std::optional<BoxScene> moved(const BoxScene& scene, std::size_t index, const Vec2& centre) {
  BoxScene out = scene;
  Box& b = out.boxes[index];
  const Vec2 half(0.5 * (b.max.x() - b.min.x()), 0.5 * (b.max.z() - b.min.z()));
  b.min.x() = centre.x() - half.x();
  b.max.x() = centre.x() + half.x();
  b.min.z() = centre.y() - half.y();
  b.max.z() = centre.y() + half.y();
  const Footprint f = footprint(b);
  if (!fits_room(f)) return std::nullopt;
  for (std::size_t i = 0; i < out.boxes.size(); ++i)
    if (i != index && out.boxes[i].tag != "wall" && rect_distance(f, footprint(out.boxes[i])) < 0.1) return std::nullopt;
  return out;
}

// Arc-length parametrized point on a polyline.
Vec2 point_at(const std::vector<Vec2>& pts, double s) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double len = (pts[i] - pts[i - 1]).norm();
    if (s <= len) return len > 0 ? pts[i - 1] + (pts[i] - pts[i - 1]) * (s / len) : pts[i];
    s -= len;
  }
  return pts.back();
}

// Tries to drop a movable box onto the route between arc lengths [lo, hi],
// keeping clear of every point in `keep_clear`.
std::optional<BoxScene> block_route(Rng& rng, const BoxScene& scene, const std::vector<Vec2>& route, double lo, double hi,
                                    const std::vector<Vec2>& keep_clear) {
  std::vector<std::size_t> movable;
  for (std::size_t i = 0; i < scene.boxes.size(); ++i)
    if (is_movable(scene.boxes[i])) movable.push_back(i);
  if (movable.empty() || hi <= lo) return std::nullopt;
  for (int attempt = 0; attempt < 60; ++attempt) {
    const std::size_t idx = pick(rng, movable);
    const Vec2 q = point_at(route, uniform(rng, lo, hi)) + Vec2(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
    auto out = moved(scene, idx, q);
    if (!out) continue;
    const Footprint f = footprint(out->boxes[idx]);
    bool clear = true;
    for (const auto& p : keep_clear) clear = clear && point_rect_distance(p, f) > 0.45;
    if (clear) return out;
  }
  return std::nullopt;
}

}  // namespace

GridSpec toy_grid_spec() {
  GridSpec s;
  s.origin = Vec3(-kRoomHalfExtent, 0.0, -kRoomHalfExtent);
  s.voxel_size = kRoomVoxel;
  const auto n = static_cast<std::uint32_t>(std::llround(2 * kRoomHalfExtent / kRoomVoxel));
  s.dims = {n, static_cast<std::uint32_t>(std::llround(kRoomHeight / kRoomVoxel)), n};
  return s;
}

NavGrid2D toy_nav(const OccupancyGrid& grid) { return inflate(project_2d(grid), kDefaultInflationRadius); }

SceneTimeline SceneStates::timeline() const {
  require(!layouts.empty() && frames.size() == layouts.size() && frames.front() == 0, ErrorKind::Input,
          "scene states need a layout at frame 0");
  std::vector<SceneTimeline::State> states;
  for (std::size_t i = 0; i < layouts.size(); ++i)
    states.push_back({frames[i], build_from_boxes(layouts[i].boxes, layouts[i].spec)});
  return SceneTimeline(std::move(states));
}

bool is_movable(const Box& b) { return b.tag == "chair" || b.tag == "box"; }

BoxScene make_toy_room(Rng& rng, int boxes_min, int boxes_max) {
  BoxScene scene;
  scene.spec = toy_grid_spec();
  const double e = kRoomHalfExtent, w = 0.1, h = kRoomHeight;
  scene.boxes.push_back({Vec3(-e, 0, -e), Vec3(-e + w, h, e), "wall"});
  scene.boxes.push_back({Vec3(e - w, 0, -e), Vec3(e, h, e), "wall"});
  scene.boxes.push_back({Vec3(-e, 0, -e), Vec3(e, h, -e + w), "wall"});
  scene.boxes.push_back({Vec3(-e, 0, e - w), Vec3(e, h, e), "wall"});

  const int count = std::uniform_int_distribution<int>(boxes_min, boxes_max)(rng);
  const std::vector<std::string> kinds{"chair", "table", "shelf", "box"};
  for (int i = 0; i < count; ++i) {
    // every room gets a chair first so sit clips are always possible
    const std::string kind = i == 0 ? "chair" : pick(rng, kinds);
    double sx, sz, sy;
    if (kind == "chair") {
      sx = uniform(rng, 0.42, 0.5), sz = uniform(rng, 0.42, 0.5), sy = uniform(rng, 0.42, 0.5);
    } else if (kind == "table") {
      sx = uniform(rng, 0.8, 1.2), sz = uniform(rng, 0.5, 0.8), sy = uniform(rng, 0.72, 0.78);
    } else if (kind == "shelf") {
      sx = uniform(rng, 0.3, 0.45), sz = uniform(rng, 0.8, 1.2), sy = uniform(rng, 1.5, 1.8);
    } else {
      sx = uniform(rng, 0.3, 0.7), sz = uniform(rng, 0.3, 0.7), sy = uniform(rng, 0.3, 0.9);
    }
    if (std::bernoulli_distribution(0.5)(rng)) std::swap(sx, sz);
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double lim = e - kWallMargin;
      const double cx = uniform(rng, -lim + sx / 2, lim - sx / 2), cz = uniform(rng, -lim + sz / 2, lim - sz / 2);
      const Box b{Vec3(cx - sx / 2, 0, cz - sz / 2), Vec3(cx + sx / 2, sy, cz + sz / 2), kind};
      bool ok = true;
      for (const auto& o : scene.boxes)
        if (o.tag != "wall" && rect_distance(footprint(b), footprint(o)) < kFurnitureGap) ok = false;
      if (ok) {
        scene.boxes.push_back(b);
        break;
      }
    }
  }
  return scene;
}

MotionSegment animate(const std::vector<PoseParams>& frames) {
  using namespace skeleton;
  const auto& off = rest_offsets();
  MotionSegment m(static_cast<int>(frames.size()), kCount);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const PoseParams& p = frames[f];
    const Eigen::Matrix3d R = yaw_rotation(p.yaw);
    const double stand = 1.0 - p.sit;
    const double swing_l = p.gait * 0.42 * std::sin(p.phase);
    const double swing_r = -swing_l;
    const double knee_l = p.gait * 0.6 * std::max(0.0, std::cos(p.phase));
    const double knee_r = p.gait * 0.6 * std::max(0.0, -std::cos(p.phase));

    // ankle height of the rest pose
    const double x0_ankle = kPelvisHeight + off[kLeftHip].y() + off[kLeftKnee].y() + off[kLeftAnkle].y();
    std::array<Vec3, kCount> x;
    x[kPelvis] = p.pelvis;
    auto leg = [&](int hip, int knee, int ankle, int foot, double thigh, double bend) {
      const double stand_thigh = thigh, stand_bend = bend;
      thigh = stand * thigh + p.sit * (M_PI / 2);
      bend = stand * bend + p.sit * (M_PI / 2);
      x[hip] = x[kPelvis] + R * off[hip];
      x[knee] = x[hip] + R * swing(thigh) * off[knee];
      double shin = thigh - bend;
      if (p.sit > 0) {
        // seated shins tilt just enough to keep the ankle at standing height
        const double reach_down = std::clamp((x[knee].y() - x0_ankle) / -off[ankle].y(), -1.0, 1.0);
        shin = stand * (stand_thigh - stand_bend) + p.sit * std::acos(reach_down);
      }
      x[ankle] = x[knee] + R * swing(shin) * off[ankle];
      x[foot] = x[ankle] + R * off[foot];
    };
    leg(kLeftHip, kLeftKnee, kLeftAnkle, kLeftFoot, swing_l, knee_l);
    leg(kRightHip, kRightKnee, kRightAnkle, kRightFoot, swing_r, knee_r);
    // shift the pelvis so the lower ankle is planted; seated poses are never pulled down
    const double low = std::min(x[kLeftAnkle].y(), x[kRightAnkle].y()) - x0_ankle;
    const double drop = low < 0 ? low : stand * low;
    for (int j : {kPelvis, kLeftHip, kLeftKnee, kLeftAnkle, kLeftFoot, kRightHip, kRightKnee, kRightAnkle, kRightFoot})
      x[static_cast<std::size_t>(j)].y() -= drop;

    const Eigen::Matrix3d lean = R * swing(-(0.15 * p.sit + 0.05 * p.gait));
    x[kSpine1] = x[kPelvis] + lean * off[kSpine1];
    x[kSpine2] = x[kSpine1] + lean * off[kSpine2];
    x[kSpine3] = x[kSpine2] + lean * off[kSpine3];
    x[kNeck] = x[kSpine3] + lean * off[kNeck];
    x[kHead] = x[kNeck] + lean * off[kHead];
    x[kLeftCollar] = x[kSpine3] + lean * off[kLeftCollar];
    x[kRightCollar] = x[kSpine3] + lean * off[kRightCollar];
    x[kLeftShoulder] = x[kLeftCollar] + lean * off[kLeftShoulder];
    x[kRightShoulder] = x[kRightCollar] + lean * off[kRightShoulder];

    auto arm = [&](int shoulder, int elbow, int wrist, double upper, double bend) {
      x[elbow] = x[shoulder] + lean * swing(upper) * off[elbow];
      x[wrist] = x[elbow] + lean * swing(upper + bend) * off[wrist];
    };
    const double rest_bend = 0.15 + 0.3 * p.gait;
    const double arm_l = 0.9 * swing_r * stand + 0.3 * p.sit;
    double arm_r = 0.9 * swing_l * stand + 0.3 * p.sit, bend_r = rest_bend;
    arm_r += p.reach * (1.35 - arm_r);
    bend_r += p.reach * (0.05 - bend_r);
    arm_r += p.drink * (0.45 - arm_r);
    bend_r += p.drink * (2.3 - bend_r);
    arm(kLeftShoulder, kLeftElbow, kLeftWrist, arm_l, rest_bend);
    arm(kRightShoulder, kRightElbow, kRightWrist, arm_r, bend_r);

    for (int j = 0; j < kCount; ++j) m.set_joint(static_cast<int>(f), j, x[static_cast<std::size_t>(j)]);
  }
  return m;
}

std::vector<PoseParams> walk_params(const std::vector<Vec2>& track, double initial_yaw, double fps) {
  std::vector<PoseParams> out;
  double yaw = initial_yaw, gait = 0.0, phase = 0.0;
  for (std::size_t f = 0; f < track.size(); ++f) {
    const Vec2 d = f + 1 < track.size() ? Vec2(track[f + 1] - track[f]) : Vec2::Zero();
    if (d.norm() > 1e-4) yaw = wrap_angle(yaw + std::clamp(wrap_angle(yaw_of(d) - yaw), -kMaxTurn, kMaxTurn));
    gait += 0.25 * (std::min(1.0, d.norm() * fps) - gait);
    PoseParams p;
    p.pelvis = Vec3(track[f].x(), skeleton::kPelvisHeight, track[f].y());
    p.yaw = yaw;
    p.phase = phase;
    p.gait = gait;
    out.push_back(p);
    phase += 2 * M_PI * d.norm() / kStride;
  }
  return out;
}

void ToyDatasetSpec::validate() const {
  require(num_scenes >= 1 && clips_per_scene >= 1, ErrorKind::Config, "dataset counts must be >= 1");
  require(boxes_min >= 1 && boxes_max >= boxes_min, ErrorKind::Config, "invalid boxes-per-scene range");
  require(!actions.empty(), ErrorKind::Config, "dataset needs at least one action");
  for (const auto& a : actions)
    require(a == "walk" || a == "sit" || a == "reach" || a == "drink", ErrorKind::Config, "unknown action " + a);
  require(dynamic_fraction >= 0 && dynamic_fraction <= 1, ErrorKind::Config, "dynamic fraction must be in [0, 1]");
  require(speed_min > 0 && speed_max >= speed_min, ErrorKind::Config, "invalid speed range");
}

namespace {

std::optional<ToyClip> make_walk_clip(Rng& rng, const ToyDatasetSpec& spec, const BoxScene& scene,
                                      const NavGrid2D& nav, bool dynamic) {
  const auto a = random_free_point(rng, nav), b = random_free_point(rng, nav);
  if (!a || !b || (*a - *b).norm() < 1.5) return std::nullopt;
  const auto plan = try_plan(nav, *a, *b);
  if (!plan) return std::nullopt;
  ToyClip clip;
  clip.action = "walk";
  clip.speed = uniform(rng, spec.speed_min, spec.speed_max);
  clip.start = Vec3(a->x(), 0, a->y());
  clip.goal = Vec3(b->x(), 0, b->y());
  clip.scene_states = {{0}, {scene}};
  const int hold = std::uniform_int_distribution<int>(10, 30)(rng);

  if (dynamic) {
    // a box lands on the route ahead of the character partway through the clip
    const auto route = shortcut_path(nav, plan->world_points);
    double len = 0;
    for (std::size_t i = 1; i < route.size(); ++i) len += (route[i] - route[i - 1]).norm();
    const double travel_frames = len / clip.speed * kFrameRate;
    if (travel_frames < 45) return std::nullopt;
    for (int attempt = 0; attempt < 8 && clip.scene_states.frames.size() == 1; ++attempt) {
      const int change = std::uniform_int_distribution<int>(10, static_cast<int>(travel_frames) - 30)(rng);
      const double s = change * clip.speed / kFrameRate;
      const Vec2 here = point_at(route, s);
      if (auto next = block_route(rng, scene, route, s + 0.7, len - 0.6, {here, *b})) {
        SceneStates dyn{{0, change}, {scene, *next}};
        const NavGrid2D after = toy_nav(dyn.timeline().states()[1].grid);
        if (free_at(after, *b)) clip.scene_states = std::move(dyn);
      }
    }
    if (clip.scene_states.frames.size() == 1) return std::nullopt;
  }
  const auto track = oracle_track(clip.scene_states.timeline(), *a, *b, plan->length_m(), clip.speed, hold);
  if (!track) return std::nullopt;
  clip.motion = animate(walk_params(*track, yaw_of(Vec2(*b - *a))));
  clip.prompt = walk_prompt(rng, scene, *b, clip.speed);
  return clip;
}

std::optional<ToyClip> make_object_clip(Rng& rng, const ToyDatasetSpec& spec, const BoxScene& scene,
                                        const NavGrid2D& nav, const std::string& action) {
  std::vector<const Box*> targets;
  for (const auto& b : scene.boxes)
    if ((action == "sit" && b.tag == "chair") || (action == "reach" && (b.tag == "shelf" || b.tag == "table")))
      targets.push_back(&b);
  if (targets.empty()) return std::nullopt;
  const Box& target = *pick(rng, targets);
  const auto sides = approach_sides(target, nav, action == "sit" ? 0.45 : 0.40);
  if (sides.empty()) return std::nullopt;
  const Side side = pick(rng, sides);
  const auto a = random_free_point(rng, nav);
  if (!a || (*a - side.approach).norm() < 1.2) return std::nullopt;
  const auto plan = try_plan(nav, *a, side.approach);
  if (!plan) return std::nullopt;

  ToyClip clip;
  clip.action = action;
  clip.speed = uniform(rng, spec.speed_min, spec.speed_max);
  clip.start = Vec3(a->x(), 0, a->y());
  clip.scene_states = {{0}, {scene}};
  const auto track = oracle_track(clip.scene_states.timeline(), *a, side.approach, plan->length_m(), clip.speed, 1);
  if (!track) return std::nullopt;
  auto ps = walk_params(*track, yaw_of(Vec2(side.approach - *a)));

  if (action == "sit") {
    ps = append_turn(ps, yaw_of(side.normal), 15);
    const Vec2 c(0.5 * (target.min.x() + target.max.x()), 0.5 * (target.min.z() + target.max.z()));
    const double extent = std::abs(side.normal.x()) * 0.5 * (target.max.x() - target.min.x()) +
                          std::abs(side.normal.y()) * 0.5 * (target.max.z() - target.min.z());
    const Vec2 seat = c + side.normal * (extent - 0.12);
    const PoseParams base = ps.back();
    for (int i = 1; i <= 24; ++i) {
      const double u = smoothstep(i / 24.0);
      PoseParams p = base;
      const Vec2 xz = side.approach + (seat - side.approach) * u;
      p.pelvis = Vec3(xz.x(), base.pelvis.y() + (target.max.y() - base.pelvis.y()) * u, xz.y());
      p.sit = u;
      p.gait = 0;
      ps.push_back(p);
    }
    for (int i = 0; i < 12; ++i) ps.push_back(ps.back());
    clip.goal = Vec3(seat.x(), target.max.y(), seat.y());
    clip.prompt = pick(rng, std::vector<std::string>{"sit on the chair", "sit down on the chair", "sit on the seat"});
  } else {
    ps = append_turn(ps, yaw_of(Vec2(-side.normal)), 12);
    const PoseParams base = ps.back();
    for (int i = 1; i <= 20; ++i) {
      PoseParams p = base;
      p.reach = smoothstep(i / 20.0);
      ps.push_back(p);
    }
    for (int i = 0; i < 15; ++i) ps.push_back(ps.back());
    clip.goal = Vec3(side.approach.x(), 0, side.approach.y());
    clip.prompt = pick(rng, std::vector<std::string>{"reach for the ", "reach toward the "}) + target.tag;
  }
  clip.motion = animate(ps);
  return clip;
}

std::optional<ToyClip> make_drink_clip(Rng& rng, const ToyDatasetSpec& spec, const BoxScene& scene,
                                       const NavGrid2D& nav) {
  auto clip = make_walk_clip(rng, spec, scene, nav, false);
  if (!clip) return std::nullopt;
  // rebuild the pose track from the motion's own pelvis path, then add the drinking gesture
  std::vector<Vec2> track;
  for (int f = 0; f < clip->motion.frames(); ++f) {
    const Vec3 p = clip->motion.joint(f, skeleton::kPelvis);
    track.emplace_back(p.x(), p.z());
  }
  // the walk clip's pelvis includes the gait drop; the ground track is unaffected
  const Vec2 dir(clip->goal.x() - clip->start.x(), clip->goal.z() - clip->start.z());
  auto ps = walk_params(track, yaw_of(dir));
  const PoseParams base = ps.back();
  for (int i = 1; i <= 20; ++i) {
    PoseParams p = base;
    p.gait = base.gait * (1.0 - i / 20.0);
    p.drink = smoothstep(i / 20.0);
    ps.push_back(p);
  }
  for (int i = 0; i < 15; ++i) ps.push_back(ps.back());
  clip->action = "drink";
  clip->motion = animate(ps);
  clip->prompt = pick(rng, std::vector<std::string>{"drink from a cup", "stop and drink some water", "drink a glass of water"});
  return clip;
}

}  // namespace

ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec) {
  spec.validate();
  ToyDataset ds;
  ds.spec = spec;
  Rng rng(spec.seed);
  for (int s = 0; s < spec.num_scenes; ++s) {
    Rng scene_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(s)));
    ds.scenes.push_back(make_toy_room(scene_rng, spec.boxes_min, spec.boxes_max));
    const BoxScene& scene = ds.scenes.back();
    const OccupancyGrid grid = build_from_boxes(scene.boxes, scene.spec);
    const NavGrid2D nav = toy_nav(grid);
    int made = 0, attempts = 0;
    for (std::size_t slot = 0; made < spec.clips_per_scene && attempts < spec.clips_per_scene * 40; ++slot) {
      // rooms without a suitable target skip that action's slot
      const std::string& action = spec.actions[slot % spec.actions.size()];
      const bool dynamic = action == "walk" && std::bernoulli_distribution(spec.dynamic_fraction)(scene_rng);
      std::optional<ToyClip> clip;
      for (int retry = 0; !clip && retry < 20; ++retry, ++attempts) {
        if (action == "walk") clip = make_walk_clip(scene_rng, spec, scene, nav, dynamic);
        else if (action == "drink") clip = make_drink_clip(scene_rng, spec, scene, nav);
        else clip = make_object_clip(scene_rng, spec, scene, nav, action);
        if (clip && clip->action != "sit" && penetration(clip->motion, clip->scene_states.timeline()).rate > 0) clip.reset();
      }
      if (!clip) continue;
      clip->scene = s;
      clip->id = "clip_" + std::to_string(s) + "_" + std::to_string(made);
      ds.clips.push_back(std::move(*clip));
      ++made;
    }
  }
  require(!ds.clips.empty(), ErrorKind::Training, "toy dataset generation produced no clips");
  return ds;
}

int segment_count(double path_length_m) {
  return std::max(1, static_cast<int>(std::ceil(path_length_m / kSegmentSpan - 1e-9)));
}

std::vector<Scenario> make_dyn_scenarios(const ToyDataset& dataset, int n, std::uint64_t seed,
                                         std::vector<std::string>* warnings) {
  require(n >= 1, ErrorKind::Input, "scenario count must be >= 1");
  require(!dataset.scenes.empty(), ErrorKind::Input, "dataset has no scenes");
  Rng rng(seed);
  std::vector<Scenario> out;
  std::vector<bool> usable(dataset.scenes.size(), true);
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    usable[i] = std::any_of(dataset.scenes[i].boxes.begin(), dataset.scenes[i].boxes.end(), is_movable);
    if (!usable[i] && warnings) warnings->push_back("scene " + std::to_string(i) + " has no movable box; skipped");
  }
  if (std::none_of(usable.begin(), usable.end(), [](bool b) { return b; })) return out;

  std::size_t cursor = 0;
  for (int attempt = 0; static_cast<int>(out.size()) < n && attempt < n * 200; ++attempt) {
    const std::size_t si = cursor++ % dataset.scenes.size();
    if (!usable[si]) continue;
    const BoxScene& scene = dataset.scenes[si];
    const NavGrid2D nav = toy_nav(build_from_boxes(scene.boxes, scene.spec));
    const auto a = random_free_point(rng, nav), b = random_free_point(rng, nav);
    if (!a || !b) continue;
    const double dist = (*a - *b).norm();
    if (dist < 3.3 || dist > 5.5) continue;
    const auto plan = try_plan(nav, *a, *b);
    if (!plan) continue;
    const double len = plan->length_m();
    const int k = segment_count(len);
    if (k * kSegmentFrames <= 100) continue;
    const auto keypoints = select_keypoints(*plan, k);

    const int change = std::uniform_int_distribution<int>(40, 100)(rng);
    const double at_change = std::min(len, change * (len / k) / kSegmentFrames);
    const Vec2 here = point_at(plan->world_points, at_change);
    std::vector<Vec2> keep{*a, *b, here};
    for (const auto& kp : keypoints) keep.emplace_back(kp.x(), kp.z());
    const auto next = block_route(rng, scene, plan->world_points, at_change + 0.5, len - 0.7, keep);
    if (!next) continue;
    const NavGrid2D after = toy_nav(build_from_boxes(next->boxes, next->spec));
    if (!free_at(after, *a) || !free_at(after, *b) || !try_plan(after, *a, *b)) continue;
    const auto from_here = nearest_free(after, after.cell_of(here));
    if (!from_here || !try_plan(after, after.cell_center(from_here->first, from_here->second), *b)) continue;

    Scenario sc;
    sc.id = "dyn_" + std::to_string(out.size());
    sc.prompt = walk_prompt(rng, scene, *b, kWalkSpeed);
    sc.scene_states = {{0, change}, {scene, *next}};
    sc.start = Vec3(a->x(), 0, a->y());
    sc.goal = Vec3(b->x(), 0, b->y());
    out.push_back(std::move(sc));
  }
  if (static_cast<int>(out.size()) < n && warnings)
    warnings->push_back("only " + std::to_string(out.size()) + " of " + std::to_string(n) + " scenarios could be built");
  return out;
}

}  // namespace dhsi
