#pragma once

// Conditional motion diffusion: linear beta schedule, forward noising, an
// x0-predicting transformer denoiser whose conditions (scene, trajectory,
// text, goal) are weighted by a text-driven softmax adapter and fused into a
// single prefix token, and the reverse sampler with two-frame inpainting.

#include "dhsi/encoders.hpp"
#include "dhsi/motion.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>

namespace dhsi {

struct NoiseSchedule {
  int T = 0;
  VecX betas;       // betas[t - 1] is beta_t
  VecX alphas;
  VecX alpha_bars;

  double beta(int t) const { return betas[t - 1]; }
  double alpha(int t) const { return alphas[t - 1]; }
  // alpha_bar(0) = 1 by convention.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[t - 1]; }
};

NoiseSchedule schedule_new(int T = 100, double beta_start = 1e-4, double beta_end = 0.02);

MotionSegment q_sample(const MotionSegment& x0, int t, const MotionSegment& noise, const NoiseSchedule& s);

struct ConditionWeights {
  std::array<double, 4> r{0.25, 0.25, 0.25, 0.25};  // scene, trajectory, text, goal
  double sum() const noexcept { return r[0] + r[1] + r[2] + r[3]; }
};

inline constexpr int kCondWidth = 3 * kFeatureDim + kMotionFrames * 3;  // scene, text, goal, trajectory

// Raw per-segment conditions in the segment's canonical frame.
struct SegmentCondition {
  nn::Mat pooled;       // 1 x kPatchCount, patch pool of the local grid at the segment start
  nn::Mat trajectory;   // kMotionFrames x 3 pelvis waypoints
  VecX confidence;      // kMotionFrames
  TextEmbedding text;
  Vec3 goal = Vec3::Zero();
  std::optional<ConditionWeights> fixed_weights;  // bypasses the adapter (ablation)
};

struct DenoiserConfig {
  nn::TransformerConfig body{64, 4, 4, 2};
  int scene_hidden = 64;
  int adapter_hidden = 32;
  int frames = kMotionFrames;
  int joints = kJoints;
  int steps = 100;
};

class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& cfg = {}, std::uint64_t seed = 0);
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;

  const DenoiserConfig& config() const noexcept { return cfg_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  const SceneEncoder& scene_encoder() const noexcept { return scene_; }

  // Softmax(MLP(T_f)) as a 1 x 4 row.
  nn::Var adapter(nn::Tape& t, const TextEmbedding& text) const;
  ConditionWeights condition_adapter(const TextEmbedding& text) const;

  // Concatenation [R1 S_f, R2 flatten(C * Traj), R3 T_f, R4 G_f] (1 x kCondWidth)
  // before projection; `weights` is a 1 x 4 row.
  nn::Var condition_parts(nn::Tape& t, nn::Var scene_f, const nn::Mat& trajectory, const VecX& confidence,
                          nn::Var text_f, nn::Var goal_f, nn::Var weights) const;
  nn::Var assemble_conditions(nn::Tape& t, const SegmentCondition& c) const;

  // Predicted clean motion (frames x 3J) for noisy input x_t at step t.
  nn::Var predict_x0(nn::Tape& t, nn::Var x_t, int step, nn::Var cond_token) const;
  MatX predict(const MatX& x_t, int step, const SegmentCondition& c) const;

 private:
  DenoiserConfig cfg_;
  nn::ParamSet params_;
  nn::Mlp adapter_;
  SceneEncoder scene_;
  nn::Linear text_proj_;
  GoalEncoder goal_;
  nn::Linear cond_proj_;
  nn::Parameter* time_embedding_ = nullptr;  // T x width
  nn::Linear frame_in_;
  nn::Parameter* frame_position_ = nullptr;  // frames x width
  nn::Transformer body_;
  nn::Linear frame_out_;
};

// Clean-motion predictor used by the sampler: (x_t, t) -> x0 estimate.
using X0Predictor = std::function<MatX(const MatX& x_t, int t)>;

// One reverse step from the posterior q(x_{t-1} | x_t, x0_hat); no noise at t = 1.
MatX denoise_step(const MatX& x_t, const MatX& x0_hat, int t, const NoiseSchedule& s, Rng& rng);
MatX denoise_step(const X0Predictor& predict, const MatX& x_t, int t, const NoiseSchedule& s, Rng& rng);

// Full reverse process from x_T = prime. When prev_two (2 x 3J) is given, frames
// 0-1 are replaced by freshly noised copies of it before every step and by
// prev_two itself at the end.
MotionSegment sample_segment(const X0Predictor& predict, const NoiseSchedule& s, const MotionSegment& prime,
                             const std::optional<MatX>& prev_two, std::uint64_t seed);
MotionSegment sample_segment(const Denoiser& model, const NoiseSchedule& s, const SegmentCondition& cond,
                             const MotionSegment& prime, const std::optional<MatX>& prev_two, std::uint64_t seed);

}  // namespace dhsi
