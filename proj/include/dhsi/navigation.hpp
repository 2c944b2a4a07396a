#pragma once

// Dynamic scene-aware navigation: a causal sequence decoder that, one step at
// a time, predicts the next pelvis position and a confidence score from the
// current position, text, goal, local scene feature and scene-change feature.
// Also provides the replanning oracle navigator used as teacher and baseline.

#include "dhsi/encoders.hpp"
#include "dhsi/planner.hpp"

#include <optional>
#include <vector>

namespace dhsi {

inline constexpr int kSegmentFrames = 48;
inline constexpr double kFrameRate = 30.0;
inline constexpr double kWalkSpeed = 1.2;  // m/s

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double confidence = 1.0;
};

struct TrajectorySegment {
  std::vector<Waypoint> waypoints;
  int frame_offset = 0;

  std::vector<Vec3> positions() const;
  std::vector<double> confidences() const;
};

// Heading (yaw about +Y, 0 facing +Z) of a horizontal direction.
double yaw_of(const Vec3& direction) noexcept;
double yaw_of(const Vec2& direction_xz) noexcept;
// Local-grid anchor for a pelvis position: its X-Z at ground level.
Vec3 ground_anchor(const Vec3& pelvis) noexcept;

// The position head works in units of kStepScale metres so its outputs are
// order one at walking pace.
inline constexpr double kStepScale = 0.05;

struct NavigatorConfig {
  nn::TransformerConfig decoder{64, 4, 4, 2};
  int scene_hidden = 64;
};

// Eq. 1 inputs of one decoding step, already encoded.
struct StepFeatures {
  PositionFeature position;
  nn::Mat text;  // projected text feature, 1 x kFeatureDim
  GoalFeature goal;
  SceneFeature scene;
  SceneDelta delta;
};

// Token history of one autoregressive rollout.
struct DecoderContext {
  std::vector<nn::Mat> tokens;
};

// Per-step raw inputs for a teacher-forced sequence (training and oracles).
struct NavSequence {
  nn::Mat positions;      // n x 3, canonical segment frame
  int first_step = 0;
  nn::Mat goals;          // n x 3, goal relative to each position in its heading frame
  nn::Mat pooled;         // n x 512 patch pools of the local grids
  nn::Mat prev_pooled;    // n x 512, the previous step's pools (row 0 repeats row 0)
  nn::Mat text;           // 1 x kTextDim
};

class Navigator {
 public:
  explicit Navigator(const NavigatorConfig& cfg = {}, std::uint64_t seed = 0);
  Navigator(const Navigator&) = delete;
  Navigator& operator=(const Navigator&) = delete;
  Navigator(Navigator&&) = default;

  const NavigatorConfig& config() const noexcept { return cfg_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  const SceneEncoder& scene_encoder() const noexcept { return scene_; }
  const PositionEncoder& position_encoder() const noexcept { return position_; }
  const GoalEncoder& goal_encoder() const noexcept { return goal_; }
  nn::Mat project_text(const TextEmbedding& text) const;

  // Displacements (n x 3, heading frame) and confidence logits (n x 1) for a sequence.
  struct Output {
    nn::Var displacement;
    nn::Var confidence_logit;
  };
  Output forward(nn::Tape& t, const NavSequence& seq) const;

  StepFeatures features(const Vec3& canonical_position, int step, const TextEmbedding& text,
                        const Vec3& goal_local, const LocalGrid& local,
                        const std::optional<SceneFeature>& prev_scene) const;

  // One decoding step: appends the step token to ctx and predicts the next
  // world position from `current` with heading `yaw`.
  Waypoint predict_step(DecoderContext& ctx, const Vec3& current, double yaw, const StepFeatures& f) const;

 private:
  nn::Var token_rows(nn::Tape& t, nn::Var pos_f, nn::Var text_f, nn::Var goal_f, nn::Var scene_f,
                     nn::Var delta_f) const;

  NavigatorConfig cfg_;
  nn::ParamSet params_;
  nn::Linear text_proj_;
  PositionEncoder position_;
  GoalEncoder goal_;
  SceneEncoder scene_;
  nn::Linear token_in_;
  nn::Transformer decoder_;
  nn::Linear position_head_;
  nn::Linear confidence_head_;
};

// Per-step diagnostic of a rollout.
struct RolloutStep {
  int frame = 0;
  double delta_norm = 0.0;          // |Delta_S|
  std::size_t changed_voxels = 0;   // voxel_delta against the previous step's local grid
};

struct RolloutResult {
  TrajectorySegment segment;
  std::vector<RolloutStep> steps;
  double final_yaw = 0.0;
};

// Autoregressive navigation for `frames` waypoints. Waypoint 0 is `start`;
// each later waypoint comes from predict_step with the local grid re-extracted
// from grid_at(timeline, frame_offset + i) at the current position and heading.
RolloutResult rollout(const Navigator& nav, const Vec3& start, const Vec3& segment_goal, const SceneTimeline& timeline,
                      const TextEmbedding& text, int frames, int frame_offset,
                      std::optional<double> initial_yaw = std::nullopt);

// Heading after a step with horizontal displacement `d`: unchanged for
// displacements shorter than a millimetre.
double advance_heading(double yaw, const Vec3& d) noexcept;

// Teacher-forced inputs for a known path of n positions: the n - 1 decoding
// steps rollout would take along it, plus their target displacements in the
// heading frame. Feeding a rollout's own positions back reproduces its outputs.
// `target_steps` (n - 1 world displacements) replaces the path's own steps as
// targets, e.g. corrective steps for a perturbed input path.
struct TeacherWindow {
  NavSequence seq;
  nn::Mat target_displacement;  // (n - 1) x 3
};
TeacherWindow teacher_window(const std::vector<Vec3>& path, const Vec3& segment_goal, const SceneTimeline& timeline,
                             const TextEmbedding& text, int frame_offset,
                             std::optional<double> initial_yaw = std::nullopt,
                             const std::vector<Vec3>* target_steps = nullptr);

// Soft confidence target exp(-|gt - pred|) per step.
std::vector<double> confidence_target(const std::vector<Vec3>& traj_gt, const std::vector<Vec3>& traj_pred);

struct NavLoss {
  double traj = 0.0;
  double conf = 0.0;
};
// L_traj = mean squared position error, L_conf = BCE(conf_pred, confidence_target).
NavLoss nav_loss(const TrajectorySegment& pred, const std::vector<Vec3>& gt, const std::vector<double>& conf_pred);

struct OracleConfig {
  double speed = kWalkSpeed;
  double fps = kFrameRate;
  double inflation_radius = kDefaultInflationRadius;
  HeightBand band{};
};

// Replans on every frame where the scene changes and follows the current
// (shortcut) path at constant speed. Confidence is 1 throughout. Y stays at start.y().
TrajectorySegment oracle_navigator(const SceneTimeline& timeline, const Vec3& start, const Vec3& goal, int frames,
                                   const OracleConfig& cfg = {});

}  // namespace dhsi
