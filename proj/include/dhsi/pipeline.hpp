#pragma once

// Training and inference glue: canonical segment frames, training windows cut
// from the toy dataset, the combined objective, checkpoints, and the
// segment-wise autoregressive generation loop.

#include "dhsi/experience_memory.hpp"
#include "dhsi/hsi_diffusion.hpp"
#include "dhsi/navigation.hpp"
#include "dhsi/toy_world.hpp"

#include <filesystem>
#include <functional>
#include <memory>

namespace dhsi {

// Segment-local frame: origin at the segment's start pelvis on the floor,
// rotated so the heading `yaw` faces +Z.
struct CanonicalFrame {
  Vec2 origin = Vec2::Zero();
  double yaw = 0.0;

  Vec3 to_local(const Vec3& world) const;
  Vec3 to_world(const Vec3& local) const;
};

MotionSegment to_local(const MotionSegment& world, const CanonicalFrame& frame);
MotionSegment to_world(const MotionSegment& local, const CanonicalFrame& frame);

// Facing direction of the body at `frame`, from the hip axis.
double body_yaw(const MotionSegment& motion, int frame);

struct TrainingSample {
  std::size_t clip = 0;
  int first_frame = 0;
  std::string prompt;
  MotionSegment x0;         // canonical
  SegmentCondition cond;    // ground-truth trajectory, confidence 1
  LocalGrid local;
  TeacherWindow nav;
  // raw navigator inputs, kept for perturbed teacher windows
  std::shared_ptr<const SceneTimeline> timeline;
  std::vector<Vec3> path;  // world pelvis positions
  Vec3 nav_goal = Vec3::Zero();
  double yaw = 0.0;
};

// 48-frame windows every `stride` frames, plus one flush with the clip end.
std::vector<TrainingSample> extract_samples(const ToyDataset& dataset, int stride = 23);

struct TrainConfig {
  int epochs = 30;
  int batch = 4;
  double lr = 1e-3;
  double clip_norm = 1.0;
  double lambda_t = 0.5;
  double lambda_c = 0.01;
  double perturb_prob = 0.5;  // share of samples whose trajectory condition is perturbed
  double perturb_max = 0.3;   // metres
  double nav_noise_prob = 0.5;  // share of teacher windows fed a drifted input path
  double nav_noise_max = 0.25;  // metres, horizontal drift amplitude
  double nav_correction = 0.1;  // share of the drift each target step removes
  // share of samples trained at step T from what sampling actually starts from:
  // another window's noised motion (a memory prime) or pure noise. With
  // alpha_bar(T) ~ 0.36 a forward-noised x_T still carries its own motion.
  double prime_prob = 0.1;
  std::uint64_t seed = 1;
  void validate() const;
};

struct LossTerms {
  double motion = 0.0;
  double traj = 0.0;
  double conf = 0.0;
  double total = 0.0;
};

struct TrainReport {
  std::vector<LossTerms> epochs;
  std::size_t samples = 0;
  std::size_t stored = 0;
};

struct Models {
  Navigator navigator;
  Denoiser denoiser;
  NoiseSchedule schedule;
  MemoryStore memory;

  Models(const NavigatorConfig& nav, const DenoiserConfig& den, const MemoryConfig& mem = {},
         std::uint64_t seed = 0);
};

// L_motion: MSE between the denoiser's x0 estimate from q_sample(x0, t, noise) and x0.
nn::Var motion_loss(nn::Tape& t, const Denoiser& model, const NoiseSchedule& s, const MotionSegment& x0,
                    const SegmentCondition& cond, int step, const MotionSegment& noise);
// Same loss from an explicit x_t.
nn::Var motion_loss_from(nn::Tape& t, const Denoiser& model, const MatX& x_t, const MotionSegment& x0,
                         const SegmentCondition& cond, int step);

// L_traj: mean over steps of the squared displacement error; L_conf: BCE of the
// predicted confidence against exp(-|error|), the target held constant.
struct NavLossVars {
  nn::Var traj;
  nn::Var conf;
};
NavLossVars navigator_loss(nn::Tape& t, const Navigator& nav, const TeacherWindow& w);

// Ground-truth trajectory with a smooth random detour, zero at both ends, and
// confidence exp(-|detour|). Left untouched with probability 1 - perturb_prob.
void perturb_trajectory(SegmentCondition& cond, Rng& rng, const TrainConfig& cfg);

// Teacher window whose input path drifts smoothly off the ground truth; each
// target step follows the ground truth and removes part of the drift, so the
// navigator learns to recover from its own errors during rollout.
TeacherWindow drifted_window(const TrainingSample& s, Rng& rng, const TrainConfig& cfg);

using EpochCallback = std::function<void(int epoch, const LossTerms&)>;
TrainReport train(Models& models, const ToyDataset& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// .ckpt: "DHSCKPT1", u32 length + JSON config block (navigator, denoiser,
// schedule), then the navigator and denoiser parameter tensors by name.
void save_checkpoint(const Models& models, const std::filesystem::path& path);
Models load_checkpoint(const std::filesystem::path& path, const MemoryConfig& memory = {});

struct GenerateOptions {
  bool no_navigation = false;
  bool no_memory = false;
  bool no_adapter = false;
  std::uint64_t seed = 0;
  double inflation_radius = kDefaultInflationRadius;
  std::optional<int> segments;  // overrides the route-length segment count
};

struct SegmentDiagnostics {
  int index = 0;
  int frame_offset = 0;
  Vec3 keypoint = Vec3::Zero();
  ConditionWeights weights;
  Retrieval::Source prime_source = Retrieval::Source::Gaussian;
  std::vector<RolloutStep> steps;
  double mean_confidence = 1.0;
};

struct GeneratedSequence {
  MotionSegment motion;              // 48 k frames, world coordinates
  std::vector<Vec3> keypoints;
  std::vector<Vec3> trajectory;      // navigator waypoints, 48 per segment
  std::vector<double> confidence;
  std::vector<SegmentDiagnostics> segments;
  std::vector<int> change_frames;
};

// Plans on the initial scene, splits the route into k segments and generates
// each one: memory prime, navigator rollout, denoising with two-frame stitching.
// `start` and `goal` are floor points.
GeneratedSequence generate_sequence(const Models& models, const std::string& prompt, const SceneTimeline& timeline,
                                    const Vec3& start, const Vec3& goal, const GenerateOptions& opts);

}  // namespace dhsi
