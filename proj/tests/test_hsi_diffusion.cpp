#include "dhsi/hsi_diffusion.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dhsi;

namespace {

MatX random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> g(0, sd);
  return MatX::NullaryExpr(r, c, [&] { return g(rng); });
}

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.body = {8, 1, 2, 2};
  cfg.scene_hidden = 4;
  cfg.adapter_hidden = 4;
  cfg.steps = 10;
  return cfg;
}

SegmentCondition random_condition(Rng& rng, int frames = kMotionFrames) {
  SegmentCondition c;
  c.pooled = random_mat(rng, 1, kPatchCount).cwiseAbs().cwiseMin(1.0);
  c.trajectory = random_mat(rng, frames, 3);
  c.confidence = random_mat(rng, frames, 1).cwiseAbs().cwiseMin(1.0);
  c.text = embed_text("walk to the kitchen table");
  c.goal = Vec3(0.3, 0.0, 1.7);
  return c;
}

}  // namespace

TEST_CASE("noise schedule") {
  const auto s = schedule_new();
  CHECK(s.T == 100);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(100) == 0.02);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
  long double prod = 1;
  for (int t = 1; t <= 100; ++t) {
    prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * (t - 1) / 99.0L);
    if (t > 1) {
      CHECK(s.beta(t) > s.beta(t - 1));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    CHECK(s.alpha_bar(t) > 0.0);
    CHECK(s.alpha_bar(t) < 1.0);
  }
  CHECK(std::abs(s.alpha_bar(100) - static_cast<double>(prod)) < 1e-12);
  CHECK_THROWS_AS(schedule_new(1), Error);
  CHECK_THROWS_AS(schedule_new(100, 0.02, 1e-4), Error);
  CHECK_THROWS_AS(schedule_new(100, 0.0, 0.02), Error);
}

TEST_CASE("forward noising") {
  Rng rng(1);
  const auto s = schedule_new();
  const MotionSegment x0(random_mat(rng, kMotionFrames, 3 * kJoints));
  const MotionSegment zero(kMotionFrames);
  const MotionSegment noise(random_mat(rng, kMotionFrames, 3 * kJoints));
  for (int t : {1, 37, 100}) {
    CHECK((q_sample(x0, t, zero, s).data - std::sqrt(s.alpha_bar(t)) * x0.data).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((q_sample(zero, t, noise, s).data - std::sqrt(1 - s.alpha_bar(t)) * noise.data).cwiseAbs().maxCoeff() < 1e-15);
    const auto q = q_sample(x0, t, noise, s);
    for (Eigen::Index i = 0; i < q.data.size(); ++i)
      CHECK(std::abs(q.data(i) - (std::sqrt(s.alpha_bar(t)) * x0.data(i) + std::sqrt(1 - s.alpha_bar(t)) * noise.data(i))) < 1e-9);
  }
  CHECK_THROWS_AS(q_sample(x0, 0, noise, s), Error);
  CHECK_THROWS_AS(q_sample(x0, 101, noise, s), Error);
  CHECK_THROWS_AS(q_sample(x0, 5, MotionSegment(10), s), Error);
}

TEST_CASE("condition adapter is a softmax") {
  Denoiser d(tiny_config(), 2);
  Rng rng(2);
  const std::vector<std::string> words{"walk", "sit", "table", "chair", "quickly", "drink", "reach", "lamp"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1);
  for (int i = 0; i < 1000; ++i) {
    const auto r = d.condition_adapter(embed_text(words[w(rng)] + " " + words[w(rng)] + " " + std::to_string(i)));
    for (double v : r.r) CHECK(v >= 0.0);
    CHECK(std::abs(r.sum() - 1.0) < 1e-9);
  }
  // shifting every logit by a constant leaves the weights unchanged
  const auto text = embed_text("walk to the door");
  const auto before = d.condition_adapter(text);
  d.params().get("den.adapter.1.bias").value.array() += 3.7;
  const auto after = d.condition_adapter(text);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(before.r[i] - after.r[i]) < 1e-9);
  d.params().get("den.adapter.1.weight").value.setZero();
  d.params().get("den.adapter.1.bias").value.setZero();
  for (double v : d.condition_adapter(text).r) CHECK(v == 0.25);
}

TEST_CASE("assembled conditions: weighting and projection") {
  Denoiser d(tiny_config(), 3);
  Rng rng(3);
  auto c = random_condition(rng);
  nn::Tape t;
  const nn::Var scene = t.constant(random_mat(rng, 1, kFeatureDim));
  const nn::Var text = t.constant(random_mat(rng, 1, kFeatureDim));
  const nn::Var goal = t.constant(random_mat(rng, 1, kFeatureDim));

  nn::Mat uniform = nn::Mat::Constant(1, 4, 0.25);
  const nn::Mat zero_conf =
      d.condition_parts(t, scene, c.trajectory, VecX::Zero(kMotionFrames), text, goal, t.constant(uniform)).value();
  CHECK(zero_conf.block(0, kFeatureDim, 1, kMotionFrames * 3).cwiseAbs().maxCoeff() == 0.0);

  nn::Mat text_only = nn::Mat::Zero(1, 4);
  text_only(0, 2) = 1.0;
  const nn::Mat parts = d.condition_parts(t, scene, c.trajectory, c.confidence, text, goal, t.constant(text_only)).value();
  CHECK(parts.block(0, 0, 1, kFeatureDim + kMotionFrames * 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(parts.block(0, kFeatureDim + kMotionFrames * 3 + kFeatureDim, 1, kFeatureDim).cwiseAbs().maxCoeff() == 0.0);
  CHECK(parts.block(0, kFeatureDim + kMotionFrames * 3, 1, kFeatureDim) == text.value());

  // full assembly against an independent scale-concat-project
  c.fixed_weights = ConditionWeights{{0.1, 0.2, 0.3, 0.4}};
  nn::Tape t2;
  const nn::Mat token = d.assemble_conditions(t2, c).value();
  const auto& ps = d.params();
  auto gelu = [](double x) { return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x))); };
  auto mlp = [&](const std::string& name, const nn::Mat& x) {
    nn::Mat h = x * ps.get(name + ".0.weight").value + ps.get(name + ".0.bias").value;
    h = h.unaryExpr(gelu);
    return nn::Mat(h * ps.get(name + ".1.weight").value + ps.get(name + ".1.bias").value);
  };
  const nn::Mat s_f = mlp("den.scene", c.pooled);
  const nn::Mat t_f = row_of(c.text.vector) * ps.get("den.text_proj.weight").value + ps.get("den.text_proj.bias").value;
  const nn::Mat g_f = mlp("den.goal", row_of(c.goal));
  nn::Mat cat(1, kCondWidth);
  cat.block(0, 0, 1, kFeatureDim) = 0.1 * s_f;
  for (int i = 0; i < kMotionFrames; ++i)
    for (int a = 0; a < 3; ++a) cat(0, kFeatureDim + 3 * i + a) = 0.2 * c.confidence[i] * c.trajectory(i, a);
  cat.block(0, kFeatureDim + 3 * kMotionFrames, 1, kFeatureDim) = 0.3 * t_f;
  cat.block(0, 2 * kFeatureDim + 3 * kMotionFrames, 1, kFeatureDim) = 0.4 * g_f;
  const nn::Mat expect = cat * ps.get("den.cond_proj.weight").value + ps.get("den.cond_proj.bias").value;
  CHECK((token - expect).cwiseAbs().maxCoeff() < 1e-9);

  c.trajectory = random_mat(rng, 5, 3);
  nn::Tape t3;
  CHECK_THROWS_AS(d.assemble_conditions(t3, c), Error);
}

TEST_CASE("reverse step") {
  Rng rng(4);
  const auto s = schedule_new();
  const MatX x = random_mat(rng, 6, 9), x0 = random_mat(rng, 6, 9);
  Rng a(7), c(8);
  CHECK(denoise_step(x, x0, 1, s, a) == denoise_step(x, x0, 1, s, c));  // t = 1 adds no noise
  CHECK((denoise_step(x, x0, 1, s, a) - x0).cwiseAbs().maxCoeff() < 1e-9);
  Rng a2(7), b2(7);
  CHECK(denoise_step(x, x0, 50, s, a2) == denoise_step(x, x0, 50, s, b2));
  CHECK_THROWS_AS(denoise_step(x, x0, 0, s, a), Error);
}

TEST_CASE("oracle denoiser recovers x0 from any prime") {
  const auto s = schedule_new();
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const MatX target = random_mat(rng, kMotionFrames, 3 * kJoints);
    const X0Predictor oracle = [&](const MatX&, int) { return target; };
    const MotionSegment prime(random_mat(rng, kMotionFrames, 3 * kJoints, 1.0 + trial));
    const auto out = sample_segment(oracle, s, prime, std::nullopt, static_cast<std::uint64_t>(trial));
    CHECK((out.data - target).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("two-frame stitching and determinism") {
  const auto s = schedule_new();
  Rng rng(6);
  const MatX target = random_mat(rng, kMotionFrames, 3 * kJoints);
  const MatX prev = random_mat(rng, 2, 3 * kJoints);
  // a predictor that sees the inpainted frames: the noised copies must be consistent with prev
  std::vector<double> residuals;
  const X0Predictor oracle = [&](const MatX& x_t, int t) {
    const double ab = s.alpha_bar(t);
    residuals.push_back(((x_t.topRows(2) - std::sqrt(ab) * prev) / std::sqrt(1 - ab)).array().square().mean());
    return target;
  };
  const MotionSegment prime(random_mat(rng, kMotionFrames, 3 * kJoints));
  const auto a = sample_segment(oracle, s, prime, prev, 11);
  CHECK(a.data.topRows(2) == prev);
  CHECK((a.data.bottomRows(kMotionFrames - 2) - target.bottomRows(kMotionFrames - 2)).cwiseAbs().maxCoeff() <= 1e-6);
  // the injected noise has unit variance at every step
  double mean_res = 0;
  for (double r : residuals) mean_res += r / residuals.size();
  CHECK(mean_res == doctest::Approx(1.0).epsilon(0.05));

  const auto b = sample_segment(oracle, s, prime, prev, 11);
  CHECK(a == b);
  CHECK_THROWS_AS(sample_segment(oracle, s, prime, MatX(random_mat(rng, 3, 3 * kJoints)), 1), Error);
}

TEST_CASE("learned denoiser sampling is deterministic and finite") {
  auto cfg = tiny_config();
  Denoiser d(cfg, 9);
  Rng rng(9);
  const auto s = schedule_new(cfg.steps);
  const auto c = random_condition(rng);
  const MotionSegment prime(random_mat(rng, kMotionFrames, 3 * kJoints));
  const auto a = sample_segment(d, s, c, prime, std::nullopt, 3);
  const auto b = sample_segment(d, s, c, prime, std::nullopt, 3);
  CHECK(a == b);
  CHECK(a.data.allFinite());
  CHECK_FALSE(a == sample_segment(d, s, c, prime, std::nullopt, 4));
  CHECK_THROWS_AS(sample_segment(d, schedule_new(100), c, prime, std::nullopt, 3), Error);
}
