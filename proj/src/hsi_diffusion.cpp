#include "dhsi/hsi_diffusion.hpp"

#include <cmath>
#include <random>

namespace dhsi {

NoiseSchedule schedule_new(int T, double beta_start, double beta_end) {
  require(T >= 2, ErrorKind::Config, "schedule needs T >= 2");
  require(beta_start > 0 && beta_start < beta_end && beta_end < 1, ErrorKind::Config,
          "schedule needs 0 < beta_start < beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    // endpoints are set exactly rather than through the interpolation formula
    s.betas[i] = i == 0 ? beta_start : i == T - 1 ? beta_end : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.alphas[i] = 1.0 - s.betas[i];
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

MotionSegment q_sample(const MotionSegment& x0, int t, const MotionSegment& noise, const NoiseSchedule& s) {
  require(t >= 1 && t <= s.T, ErrorKind::Input, "diffusion step out of range");
  require(x0.data.rows() == noise.data.rows() && x0.data.cols() == noise.data.cols(), ErrorKind::Input,
          "q_sample shape mismatch");
  const double ab = s.alpha_bar(t);
  return MotionSegment(MatX(std::sqrt(ab) * x0.data + std::sqrt(1.0 - ab) * noise.data));
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  require(cfg.frames >= 2 && cfg.joints >= 1 && cfg.steps >= 2, ErrorKind::Config, "invalid denoiser config");
  Rng rng(seed);
  const int w = cfg.body.width;
  adapter_ = nn::Mlp::create(params_, "den.adapter", kTextDim, cfg.adapter_hidden, 4, rng);
  scene_ = SceneEncoder::create(params_, "den.scene", rng, cfg.scene_hidden);
  text_proj_ = nn::Linear::create(params_, "den.text_proj", kTextDim, kFeatureDim, rng);
  goal_ = GoalEncoder::create(params_, "den.goal", rng);
  cond_proj_ = nn::Linear::create(params_, "den.cond_proj", 3 * kFeatureDim + cfg.frames * 3, w, rng);
  std::normal_distribution<double> small(0.0, 0.02);
  nn::Mat te(cfg.steps, w), fp(cfg.frames, w);
  for (Eigen::Index i = 0; i < te.size(); ++i) te(i) = small(rng);
  for (Eigen::Index i = 0; i < fp.size(); ++i) fp(i) = small(rng);
  time_embedding_ = &params_.add("den.time_embedding", te);
  frame_in_ = nn::Linear::create(params_, "den.frame_in", 3 * cfg.joints, w, rng);
  frame_position_ = &params_.add("den.frame_position", fp);
  body_ = nn::Transformer::create(params_, "den.body", cfg.body, rng);
  frame_out_ = nn::Linear::create(params_, "den.frame_out", w, 3 * cfg.joints, rng);
}

nn::Var Denoiser::adapter(nn::Tape& t, const TextEmbedding& text) const {
  return nn::softmax_rows(adapter_(t, t.constant(row_of(text.vector))));
}

ConditionWeights Denoiser::condition_adapter(const TextEmbedding& text) const {
  nn::Tape t;
  const nn::Mat r = adapter(t, text).value();
  ConditionWeights w;
  for (int i = 0; i < 4; ++i) w.r[static_cast<std::size_t>(i)] = r(0, i);
  return w;
}

nn::Var Denoiser::condition_parts(nn::Tape& t, nn::Var scene_f, const nn::Mat& trajectory, const VecX& confidence,
                                  nn::Var text_f, nn::Var goal_f, nn::Var weights) const {
  require(trajectory.rows() == cfg_.frames && trajectory.cols() == 3 && confidence.size() == cfg_.frames,
          ErrorKind::Input, "trajectory condition must be frames x 3 with one confidence per frame");
  require(weights.rows() == 1 && weights.cols() == 4, ErrorKind::Input, "condition weights must be 1 x 4");
  nn::Mat traj = trajectory;
  for (Eigen::Index i = 0; i < traj.rows(); ++i) traj.row(i) *= confidence[i];
  nn::Mat flat(1, traj.size());
  for (Eigen::Index i = 0; i < traj.rows(); ++i) flat.block(0, 3 * i, 1, 3) = traj.row(i);
  auto pick = [&](int i) { return nn::slice_cols(weights, i, 1); };
  return nn::concat_cols({nn::scale_by(scene_f, pick(0)), nn::scale_by(t.constant(flat), pick(1)),
                          nn::scale_by(text_f, pick(2)), nn::scale_by(goal_f, pick(3))});
}

nn::Var Denoiser::assemble_conditions(nn::Tape& t, const SegmentCondition& c) const {
  require(c.pooled.rows() == 1 && c.pooled.cols() == kPatchCount, ErrorKind::Input, "scene condition must be 1 x 512");
  nn::Var weights;
  if (c.fixed_weights) {
    nn::Mat r(1, 4);
    for (int i = 0; i < 4; ++i) r(0, i) = c.fixed_weights->r[static_cast<std::size_t>(i)];
    weights = t.constant(r);
  } else {
    weights = adapter(t, c.text);
  }
  const nn::Var scene_f = scene_.forward(t, t.constant(c.pooled));
  const nn::Var text_f = text_proj_(t, t.constant(row_of(c.text.vector)));
  const nn::Var goal_f = goal_.forward(t, t.constant(row_of(c.goal)));
  return cond_proj_(t, condition_parts(t, scene_f, c.trajectory, c.confidence, text_f, goal_f, weights));
}

nn::Var Denoiser::predict_x0(nn::Tape& t, nn::Var x_t, int step, nn::Var cond_token) const {
  require(step >= 1 && step <= cfg_.steps, ErrorKind::Input, "diffusion step out of range");
  require(x_t.rows() == cfg_.frames && x_t.cols() == 3 * cfg_.joints, ErrorKind::Input, "x_t has the wrong shape");
  const nn::Var prefix = nn::add(cond_token, nn::slice_rows(t.param(*time_embedding_), step - 1, 1));
  const nn::Var frames = nn::add(frame_in_(t, x_t), t.param(*frame_position_));
  const nn::Var h = body_(t, nn::concat_rows({prefix, frames}), false);
  return frame_out_(t, nn::slice_rows(h, 1, cfg_.frames));
}

MatX Denoiser::predict(const MatX& x_t, int step, const SegmentCondition& c) const {
  nn::Tape t;
  const nn::Var cond = assemble_conditions(t, c);
  MatX out = predict_x0(t, t.constant(x_t), step, cond).value();
  require(out.allFinite(), ErrorKind::Numeric, "denoiser produced non-finite output");
  return out;
}

MatX denoise_step(const MatX& x_t, const MatX& x0_hat, int t, const NoiseSchedule& s, Rng& rng) {
  require(t >= 1 && t <= s.T, ErrorKind::Input, "diffusion step out of range");
  const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), beta = s.beta(t);
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ct = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  MatX out = c0 * x0_hat + ct * x_t;
  if (t > 1) {
    const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sigma * n(rng);
  }
  require(out.allFinite(), ErrorKind::Numeric, "reverse step produced non-finite values");
  return out;
}

MatX denoise_step(const X0Predictor& predict, const MatX& x_t, int t, const NoiseSchedule& s, Rng& rng) {
  return denoise_step(x_t, predict(x_t, t), t, s, rng);
}

MotionSegment sample_segment(const X0Predictor& predict, const NoiseSchedule& s, const MotionSegment& prime,
                             const std::optional<MatX>& prev_two, std::uint64_t seed) {
  require(prime.data.size() > 0 && prime.data.allFinite(), ErrorKind::Input, "prime must be finite and non-empty");
  if (prev_two)
    require(prev_two->rows() == 2 && prev_two->cols() == prime.data.cols() && prime.data.rows() >= 2,
            ErrorKind::Input, "previous frames must be 2 x 3J");
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MatX x = prime.data;
  for (int t = s.T; t >= 1; --t) {
    if (prev_two) {
      const double ab = s.alpha_bar(t);
      for (Eigen::Index r = 0; r < 2; ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
          x(r, c) = std::sqrt(ab) * (*prev_two)(r, c) + std::sqrt(1.0 - ab) * n(rng);
    }
    x = denoise_step(predict, x, t, s, rng);
  }
  if (prev_two) x.topRows(2) = *prev_two;
  return MotionSegment(std::move(x));
}

MotionSegment sample_segment(const Denoiser& model, const NoiseSchedule& s, const SegmentCondition& cond,
                             const MotionSegment& prime, const std::optional<MatX>& prev_two, std::uint64_t seed) {
  require(s.T == model.config().steps, ErrorKind::Config, "schedule length differs from the denoiser's step count");
  // the condition token does not depend on t, so it is computed once
  nn::Tape ct;
  const nn::Mat token = model.assemble_conditions(ct, cond).value();
  const X0Predictor predict = [&](const MatX& x_t, int t) {
    nn::Tape tape;
    MatX out = model.predict_x0(tape, tape.constant(x_t), t, tape.constant(token)).value();
    require(out.allFinite(), ErrorKind::Numeric, "denoiser produced non-finite output");
    return out;
  };
  return sample_segment(predict, s, prime, prev_two, seed);
}

}  // namespace dhsi
