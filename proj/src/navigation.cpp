#include "dhsi/navigation.hpp"

#include <cmath>

namespace dhsi {

namespace {

// Displacements shorter than this keep the previous heading.
constexpr double kHeadingEpsilon = 1e-3;

Vec3 rotate_into(double yaw, const Vec3& v) { return yaw_rotation(yaw).transpose() * v; }

}  // namespace

std::vector<Vec3> TrajectorySegment::positions() const {
  std::vector<Vec3> out;
  out.reserve(waypoints.size());
  for (const auto& w : waypoints) out.push_back(w.position);
  return out;
}

std::vector<double> TrajectorySegment::confidences() const {
  std::vector<double> out;
  out.reserve(waypoints.size());
  for (const auto& w : waypoints) out.push_back(w.confidence);
  return out;
}

double yaw_of(const Vec3& d) noexcept { return std::atan2(d.x(), d.z()); }
double yaw_of(const Vec2& d) noexcept { return std::atan2(d.x(), d.y()); }
Vec3 ground_anchor(const Vec3& pelvis) noexcept { return {pelvis.x(), 0.0, pelvis.z()}; }

Navigator::Navigator(const NavigatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  text_proj_ = nn::Linear::create(params_, "nav.text_proj", kTextDim, kFeatureDim, rng);
  position_ = PositionEncoder::create(params_, "nav.position", rng);
  goal_ = GoalEncoder::create(params_, "nav.goal", rng);
  scene_ = SceneEncoder::create(params_, "nav.scene", rng, cfg.scene_hidden);
  token_in_ = nn::Linear::create(params_, "nav.token_in", 5 * kFeatureDim, cfg.decoder.width, rng);
  decoder_ = nn::Transformer::create(params_, "nav.decoder", cfg.decoder, rng);
  position_head_ = nn::Linear::create(params_, "nav.position_head", cfg.decoder.width, 3, rng);
  confidence_head_ = nn::Linear::create(params_, "nav.confidence_head", cfg.decoder.width, 1, rng);
}

nn::Mat Navigator::project_text(const TextEmbedding& text) const {
  nn::Tape t;
  return text_proj_(t, t.constant(row_of(text.vector))).value();
}

nn::Var Navigator::token_rows(nn::Tape& t, nn::Var pos_f, nn::Var text_f, nn::Var goal_f, nn::Var scene_f,
                              nn::Var delta_f) const {
  return token_in_(t, nn::concat_cols({pos_f, text_f, goal_f, scene_f, delta_f}));
}

Navigator::Output Navigator::forward(nn::Tape& t, const NavSequence& seq) const {
  const auto n = seq.positions.rows();
  require(seq.goals.rows() == n && seq.pooled.rows() == n && seq.prev_pooled.rows() == n, ErrorKind::Input,
          "navigator sequence rows disagree");
  const nn::Var text_row = text_proj_(t, t.constant(seq.text));
  const nn::Var text_f = nn::add_rowvec(t.constant(nn::Mat::Zero(n, kFeatureDim)), text_row);
  const nn::Var pos_f =
      position_.forward(t, t.constant(seq.positions), step_embeddings(seq.first_step, static_cast<int>(n)));
  const nn::Var goal_f = goal_.forward(t, t.constant(seq.goals));
  const nn::Var scene_f = scene_.forward(t, t.constant(seq.pooled));
  const nn::Var prev_f = scene_.forward(t, t.constant(seq.prev_pooled));
  const nn::Var delta_f = nn::sub(scene_f, prev_f);
  const nn::Var h = decoder_(t, token_rows(t, pos_f, text_f, goal_f, scene_f, delta_f), true);
  return {nn::scale(position_head_(t, h), kStepScale), confidence_head_(t, h)};
}

StepFeatures Navigator::features(const Vec3& canonical_position, int step, const TextEmbedding& text,
                                 const Vec3& goal_local, const LocalGrid& local,
                                 const std::optional<SceneFeature>& prev_scene) const {
  StepFeatures f;
  f.position = position_.encode(canonical_position, step);
  f.text = project_text(text);
  f.goal = goal_.encode(goal_local);
  f.scene = scene_.encode(local);
  f.delta = scene_feature_delta(f.scene, prev_scene ? *prev_scene : f.scene);
  return f;
}

Waypoint Navigator::predict_step(DecoderContext& ctx, const Vec3& current, double yaw, const StepFeatures& f) const {
  const bool finite = current.allFinite() && std::isfinite(yaw) && f.position.vector.allFinite() &&
                      f.text.allFinite() && f.goal.vector.allFinite() && f.scene.vector.allFinite() &&
                      f.delta.vector.allFinite();
  require(finite, ErrorKind::Numeric, "non-finite navigator input");
  {
    nn::Tape t;
    const nn::Var token = token_rows(t, t.constant(row_of(f.position.vector)), t.constant(f.text),
                                     t.constant(row_of(f.goal.vector)), t.constant(row_of(f.scene.vector)),
                                     t.constant(row_of(f.delta.vector)));
    ctx.tokens.push_back(token.value());
  }
  nn::Mat seq(static_cast<Eigen::Index>(ctx.tokens.size()), cfg_.decoder.width);
  for (std::size_t i = 0; i < ctx.tokens.size(); ++i) seq.row(static_cast<Eigen::Index>(i)) = ctx.tokens[i].row(0);

  nn::Tape t;
  const nn::Var h = decoder_(t, t.constant(std::move(seq)), true);
  const nn::Var last = nn::slice_rows(h, h.rows() - 1, 1);
  const Vec3 disp = kStepScale * position_head_(t, last).value().row(0).transpose();
  const double logit = confidence_head_(t, last).value()(0, 0);
  Waypoint w;
  w.position = current + yaw_rotation(yaw) * disp;
  w.confidence = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  require(w.position.allFinite() && std::isfinite(w.confidence), ErrorKind::Numeric, "navigator produced non-finite output");
  return w;
}

RolloutResult rollout(const Navigator& nav, const Vec3& start, const Vec3& segment_goal, const SceneTimeline& timeline,
                      const TextEmbedding& text, int frames, int frame_offset, std::optional<double> initial_yaw) {
  require(frames >= 1, ErrorKind::Input, "rollout needs frames >= 1");
  require(frame_offset >= 0, ErrorKind::Input, "frame offset must be non-negative");
  RolloutResult out;
  out.segment.frame_offset = frame_offset;
  out.segment.waypoints.push_back({start, 1.0});

  const Vec3 to_goal = segment_goal - start;
  double yaw = initial_yaw ? *initial_yaw : (Vec2(to_goal.x(), to_goal.z()).norm() > 1e-9 ? yaw_of(to_goal) : 0.0);
  const double segment_yaw = yaw;

  DecoderContext ctx;
  std::optional<SceneFeature> prev_scene;
  std::optional<LocalGrid> prev_local;
  Vec3 p = start;
  for (int i = 0; i + 1 < frames; ++i) {
    const int frame = frame_offset + i;
    const LocalGrid local = extract_local(grid_at(timeline, frame), ground_anchor(p), yaw);
    const StepFeatures f =
        nav.features(rotate_into(segment_yaw, p - start), i, text, rotate_into(yaw, segment_goal - p), local, prev_scene);
    RolloutStep diag;
    diag.frame = frame;
    diag.delta_norm = f.delta.vector.norm();
    diag.changed_voxels = prev_local ? voxel_delta(*prev_local, local).changed_count : 0;
    out.steps.push_back(diag);

    const Waypoint w = nav.predict_step(ctx, p, yaw, f);
    yaw = advance_heading(yaw, w.position - p);
    p = w.position;
    out.segment.waypoints.push_back(w);
    prev_scene = f.scene;
    prev_local = local;
  }
  out.final_yaw = yaw;
  return out;
}

double advance_heading(double yaw, const Vec3& d) noexcept {
  return Vec2(d.x(), d.z()).norm() > kHeadingEpsilon ? yaw_of(d) : yaw;
}

TeacherWindow teacher_window(const std::vector<Vec3>& path, const Vec3& segment_goal, const SceneTimeline& timeline,
                             const TextEmbedding& text, int frame_offset, std::optional<double> initial_yaw,
                             const std::vector<Vec3>* target_steps) {
  require(path.size() >= 2, ErrorKind::Input, "teacher window needs at least two positions");
  require(!target_steps || target_steps->size() + 1 == path.size(), ErrorKind::Input,
          "teacher window needs one target step per decoding step");
  const auto n = static_cast<Eigen::Index>(path.size()) - 1;
  const Vec3 start = path.front();
  const Vec3 to_goal = segment_goal - start;
  double yaw = initial_yaw ? *initial_yaw : (Vec2(to_goal.x(), to_goal.z()).norm() > 1e-9 ? yaw_of(to_goal) : 0.0);
  const double segment_yaw = yaw;

  TeacherWindow w;
  w.seq.positions.resize(n, 3);
  w.seq.goals.resize(n, 3);
  w.seq.pooled.resize(n, kPatchCount);
  w.seq.prev_pooled.resize(n, kPatchCount);
  w.seq.text = row_of(text.vector);
  w.target_displacement.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& p = path[static_cast<std::size_t>(i)];
    const Vec3& next = path[static_cast<std::size_t>(i) + 1];
    const LocalGrid local = extract_local(grid_at(timeline, frame_offset + static_cast<int>(i)), ground_anchor(p), yaw);
    w.seq.positions.row(i) = rotate_into(segment_yaw, p - start).transpose();
    w.seq.goals.row(i) = rotate_into(yaw, segment_goal - p).transpose();
    w.seq.pooled.row(i) = patch_pool(local);
    w.seq.prev_pooled.row(i) = w.seq.pooled.row(i > 0 ? i - 1 : 0);
    const Vec3 step = target_steps ? (*target_steps)[static_cast<std::size_t>(i)] : Vec3(next - p);
    w.target_displacement.row(i) = rotate_into(yaw, step).transpose();
    yaw = advance_heading(yaw, next - p);
  }
  return w;
}

std::vector<double> confidence_target(const std::vector<Vec3>& gt, const std::vector<Vec3>& pred) {
  require(gt.size() == pred.size(), ErrorKind::Input, "confidence_target length mismatch");
  std::vector<double> out(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) out[i] = std::exp(-(gt[i] - pred[i]).norm());
  return out;
}

NavLoss nav_loss(const TrajectorySegment& pred, const std::vector<Vec3>& gt, const std::vector<double>& conf_pred) {
  const auto n = pred.waypoints.size();
  require(n == gt.size() && n == conf_pred.size() && n > 0, ErrorKind::Input, "nav_loss shape mismatch");
  const auto pos = pred.positions();
  const auto target = confidence_target(gt, pos);
  NavLoss loss;
  constexpr double eps = 1e-7;
  for (std::size_t i = 0; i < n; ++i) {
    loss.traj += (pos[i] - gt[i]).squaredNorm();
    const double q = std::clamp(conf_pred[i], eps, 1.0 - eps);
    loss.conf -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  loss.traj /= static_cast<double>(n);
  loss.conf /= static_cast<double>(n);
  return loss;
}

namespace {

struct PathFollower {
  std::vector<Vec2> points;
  std::size_t next = 1;

  Vec2 advance(Vec2 p, double dist) {
    while (dist > 0 && next < points.size()) {
      const Vec2 d = points[next] - p;
      const double len = d.norm();
      if (len <= dist) {
        p = points[next++];
        dist -= len;
      } else {
        p += d * (dist / len);
        dist = 0;
      }
    }
    return p;
  }
};

PathFollower plan_follower(const OccupancyGrid& grid, const Vec2& from, const Vec2& goal, const OracleConfig& cfg) {
  const NavGrid2D nav = inflate(project_2d(grid, cfg.band), cfg.inflation_radius);
  Vec2 origin = from;
  std::vector<Vec2> lead{from};
  const auto cell = nav.cell_of(from);
  if (!nav.in_bounds(cell.first, cell.second) || nav.is_blocked(cell.first, cell.second)) {
    // the scene closed in on the character: step out to the nearest free cell first
    const auto free = nearest_free(nav, cell);
    if (!free) fail(ErrorKind::NoPath, "no free cell left in the scene");
    origin = nav.cell_center(free->first, free->second);
    lead.push_back(origin);
  }
  const PathPlan plan = plan_global(nav, origin, goal);
  auto pts = shortcut_path(nav, plan.world_points);
  lead.insert(lead.end(), pts.begin() + 1, pts.end());
  if (lead.size() == 1) lead.push_back(goal);
  return {lead, 1};
}

}  // namespace

TrajectorySegment oracle_navigator(const SceneTimeline& timeline, const Vec3& start, const Vec3& goal, int frames,
                                   const OracleConfig& cfg) {
  require(frames >= 1, ErrorKind::Input, "oracle_navigator needs frames >= 1");
  require(cfg.speed > 0 && cfg.fps > 0, ErrorKind::Config, "oracle speed and fps must be positive");
  const Vec2 goal_xz(goal.x(), goal.z());
  TrajectorySegment seg;
  Vec2 p(start.x(), start.z());
  PathFollower follower = plan_follower(grid_at(timeline, 0), p, goal_xz, cfg);
  seg.waypoints.push_back({start, 1.0});
  const double step = cfg.speed / cfg.fps;
  for (int f = 1; f < frames; ++f) {
    if (&grid_at(timeline, f) != &grid_at(timeline, f - 1)) follower = plan_follower(grid_at(timeline, f), p, goal_xz, cfg);
    p = follower.advance(p, step);
    seg.waypoints.push_back({Vec3(p.x(), start.y(), p.y()), 1.0});
  }
  return seg;
}

}  // namespace dhsi
