#include "dhsi/pipeline.hpp"

#include "dhsi/skeleton.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace dhsi;

namespace {

NavigatorConfig tiny_nav() {
  NavigatorConfig c;
  c.decoder = {8, 1, 2, 2};
  c.scene_hidden = 4;
  return c;
}

DenoiserConfig tiny_den() {
  DenoiserConfig c;
  c.body = {8, 1, 2, 2};
  c.scene_hidden = 4;
  c.adapter_hidden = 4;
  c.steps = 10;
  return c;
}

const ToyDataset& small_dataset() {
  static const ToyDataset ds = [] {
    ToyDatasetSpec spec;
    spec.num_scenes = 2;
    spec.clips_per_scene = 4;
    spec.seed = 3;
    return generate_toy_dataset(spec);
  }();
  return ds;
}

const std::vector<TrainingSample>& small_samples() {
  static const auto s = extract_samples(small_dataset());
  return s;
}

// First `n` decoding steps of a teacher window.
TeacherWindow shortened(const TeacherWindow& w, Eigen::Index n) {
  TeacherWindow out = w;
  out.seq.positions = w.seq.positions.topRows(n);
  out.seq.goals = w.seq.goals.topRows(n);
  out.seq.pooled = w.seq.pooled.topRows(n);
  out.seq.prev_pooled = w.seq.prev_pooled.topRows(n);
  out.target_displacement = w.target_displacement.topRows(n);
  return out;
}

double angle_diff(double a, double b) { return std::remainder(a - b, 2 * M_PI); }

}  // namespace

TEST_CASE("canonical frame round trip and heading") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 d(u(rng), 0.0, u(rng));
    const CanonicalFrame f{Vec2(u(rng), u(rng)), yaw_of(d)};
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK((f.to_world(f.to_local(p)) - p).norm() < 1e-12);
    CHECK((f.to_local(f.to_world(p)) - p).norm() < 1e-12);
    // height is untouched, distances are preserved
    CHECK(f.to_local(p).y() == doctest::Approx(p.y()));
    const Vec3 o(f.origin.x(), p.y(), f.origin.y());
    CHECK(f.to_local(p).norm() == doctest::Approx((p - Vec3(o.x(), 0, o.z())).norm()));
    // the heading direction lands on +Z
    const Vec3 ahead = f.to_local(Vec3(f.origin.x(), 0, f.origin.y()) + d);
    CHECK(ahead.x() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ahead.z() == doctest::Approx(d.norm()));
  }
}

TEST_CASE("body yaw of an animated pose") {
  for (double yaw : {-2.5, -1.0, 0.0, 0.7, 3.0}) {
    PoseParams p;
    p.yaw = yaw;
    const MotionSegment m = animate({p});
    CHECK(std::abs(angle_diff(body_yaw(m, 0), yaw)) < 1e-9);
  }
}

TEST_CASE("training windows") {
  const auto& ds = small_dataset();
  const auto& samples = small_samples();
  // independent count: starts 0, 23, ... up to L - 48, plus one flush with the end
  std::size_t expected = 0;
  for (const auto& c : ds.clips) {
    const int last = c.motion.frames() - kMotionFrames;
    if (last < 0) continue;
    int n = last / 23 + 1;
    if (last % 23 != 0) ++n;
    expected += static_cast<std::size_t>(n);
  }
  REQUIRE(samples.size() == expected);
  for (const auto& s : samples) {
    const auto& clip = ds.clips[s.clip];
    REQUIRE(s.x0.frames() == kMotionFrames);
    CHECK(s.first_frame + kMotionFrames <= clip.motion.frames());
    CHECK(s.prompt == clip.prompt);
    const Vec3 p0 = s.x0.joint(0, skeleton::kPelvis);
    CHECK(std::abs(p0.x()) < 1e-9);
    CHECK(std::abs(p0.z()) < 1e-9);
    // back to world matches the clip window
    const Vec3 w0 = clip.motion.joint(s.first_frame, skeleton::kPelvis);
    const CanonicalFrame frame{Vec2(w0.x(), w0.z()), s.yaw};
    const MotionSegment back = to_world(s.x0, frame);
    CHECK((back.data - clip.motion.data.middleRows(s.first_frame, kMotionFrames)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(angle_diff(s.yaw, body_yaw(clip.motion, s.first_frame))) < 1e-9);
    CHECK(s.path.size() == static_cast<std::size_t>(kMotionFrames));
    CHECK(s.nav.target_displacement.rows() == kMotionFrames - 1);
  }
}

TEST_CASE("motion loss gradient") {
  // small random instances: 8 frames of 3 joints
  Rng rng(5);
  std::normal_distribution<double> g(0, 1);
  const auto random = [&](Eigen::Index r, Eigen::Index c) { return MatX(MatX::NullaryExpr(r, c, [&] { return g(rng); })); };
  DenoiserConfig cfg = tiny_den();
  cfg.frames = 8;
  cfg.joints = 3;
  const auto sched = schedule_new(10);
  for (int trial = 0; trial < 10; ++trial) {
    Denoiser den(cfg, static_cast<std::uint64_t>(trial));
    SegmentCondition c;
    c.pooled = random(1, kPatchCount).cwiseAbs().cwiseMin(1.0);
    c.trajectory = random(cfg.frames, 3);
    c.confidence = random(cfg.frames, 1).cwiseAbs().cwiseMin(1.0);
    c.text = embed_text(trial % 2 ? "sit on the chair" : "walk to the shelf");
    c.goal = Vec3(0.2, 0.0, 1.5);
    const MotionSegment x0(random(cfg.frames, 3 * cfg.joints));
    const MotionSegment noise(random(cfg.frames, 3 * cfg.joints));
    const int step = 1 + trial % 10;
    const auto loss = [&](nn::Tape& t) { return motion_loss(t, den, sched, x0, c, step, noise); };
    CHECK(testing::max_grad_error(den.params(), loss) < 1e-4);
  }
}

TEST_CASE("motion loss value is the reconstruction MSE") {
  Denoiser den(tiny_den(), 2);
  const auto sched = schedule_new(10);
  const auto& s = small_samples().front();
  const MotionSegment noise = gaussian_prime(9);
  nn::Tape t;
  const double l = motion_loss(t, den, sched, s.x0, s.cond, 4, noise).scalar();
  const MatX xhat = den.predict(q_sample(s.x0, 4, noise, sched).data, 4, s.cond);
  CHECK(l == doctest::Approx((xhat - s.x0.data).array().square().mean()).epsilon(1e-10));
}

TEST_CASE("navigator loss values and gradients") {
  Rng rng(8);
  Navigator nav(tiny_nav(), 3);
  const auto& samples = small_samples();
  TrainConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const auto& s = samples[static_cast<std::size_t>(trial * 5) % samples.size()];
    const TeacherWindow w = shortened(trial % 2 ? drifted_window(s, rng, cfg) : s.nav, 8);

    nn::Tape t;
    const auto out = nav.forward(t, w.seq);
    const nn::Mat disp = t.value(out.displacement);
    const nn::Mat logit = t.value(out.confidence_logit);
    const auto n = static_cast<double>(w.target_displacement.rows());
    double traj = 0, conf = 0;
    for (Eigen::Index i = 0; i < disp.rows(); ++i) {
      const double e = (disp.row(i) - w.target_displacement.row(i)).norm();
      traj += e * e / n;
      const double p = 1 / (1 + std::exp(-logit(i, 0))), y = std::exp(-e);
      conf -= (y * std::log(p) + (1 - y) * std::log(1 - p)) / n;
    }
    nn::Tape t2;
    const auto l = navigator_loss(t2, nav, w);
    CHECK(l.traj.scalar() == doctest::Approx(traj).epsilon(1e-10));
    CHECK(l.conf.scalar() == doctest::Approx(conf).epsilon(1e-8));

    CHECK(testing::max_grad_error(nav.params(), [&](nn::Tape& tt) { return navigator_loss(tt, nav, w).traj; }) < 1e-4);

    // the confidence target is a constant: compare against a loss whose target is frozen
    nn::Mat target(disp.rows(), 1);
    for (Eigen::Index i = 0; i < disp.rows(); ++i)
      target(i, 0) = std::exp(-(disp.row(i) - w.target_displacement.row(i)).norm());
    const auto frozen = [&](nn::Tape& tt) {
      return nn::bce(nn::sigmoid(nav.forward(tt, w.seq).confidence_logit), target);
    };
    CHECK(testing::max_grad_error(nav.params(), frozen) < 1e-4);
    nav.params().zero_grad();
    {
      nn::Tape tt;
      tt.backward(navigator_loss(tt, nav, w).conf);
    }
    std::vector<nn::Mat> got;
    for (auto& p : nav.params().params()) got.push_back(p.grad);
    nav.params().zero_grad();
    {
      nn::Tape tt;
      tt.backward(frozen(tt));
    }
    std::size_t i = 0;
    for (auto& p : nav.params().params()) CHECK((p.grad - got[i++]).cwiseAbs().maxCoeff() < 1e-12);
    nav.params().zero_grad();
  }
}

TEST_CASE("trajectory perturbation") {
  Rng rng(4);
  const auto& s = small_samples().front();
  TrainConfig off;
  off.perturb_prob = 0.0;
  SegmentCondition c = s.cond;
  perturb_trajectory(c, rng, off);
  CHECK(c.trajectory == s.cond.trajectory);

  TrainConfig on;
  on.perturb_prob = 1.0;
  for (int trial = 0; trial < 20; ++trial) {
    SegmentCondition p = s.cond;
    perturb_trajectory(p, rng, on);
    const auto n = p.trajectory.rows();
    for (Eigen::Index f = 0; f < n; ++f) {
      const Vec3 d = (p.trajectory.row(f) - s.cond.trajectory.row(f)).transpose();
      CHECK(d.y() == 0.0);
      CHECK(d.norm() <= on.perturb_max + 1e-12);
      CHECK(p.confidence[f] == doctest::Approx(std::exp(-d.norm())));
    }
    CHECK((p.trajectory.row(0) - s.cond.trajectory.row(0)).norm() < 1e-12);
    CHECK((p.trajectory.row(n - 1) - s.cond.trajectory.row(n - 1)).norm() < 1e-12);
  }
}

TEST_CASE("drifted teacher windows") {
  Rng rng(6);
  const auto& samples = small_samples();
  TrainConfig still;
  still.nav_noise_max = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += 9) {
    const auto& s = samples[i];
    const TeacherWindow w = drifted_window(s, rng, still);
    CHECK(w.seq.positions == s.nav.seq.positions);
    CHECK((w.target_displacement - s.nav.target_displacement).cwiseAbs().maxCoeff() < 1e-12);
  }
  // without correction every target is the ground-truth step, seen in the
  // drifted heading frame: lengths match, input starts at the segment origin
  TrainConfig drift;
  drift.nav_correction = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += 9) {
    const auto& s = samples[i];
    const TeacherWindow w = drifted_window(s, rng, drift);
    CHECK(w.seq.positions.row(0).norm() < 1e-12);
    for (Eigen::Index r = 0; r < w.target_displacement.rows(); ++r) {
      const double gt = (s.path[static_cast<std::size_t>(r) + 1] - s.path[static_cast<std::size_t>(r)]).norm();
      CHECK(w.target_displacement.row(r).norm() == doctest::Approx(gt).epsilon(1e-9));
    }
    // input positions stay within the drift bound of the ground truth
    for (Eigen::Index r = 0; r < w.seq.positions.rows(); ++r) {
      const double gt = (s.path[static_cast<std::size_t>(r)] - s.path.front()).norm();
      CHECK(std::abs(w.seq.positions.row(r).norm() - gt) <= drift.nav_noise_max * std::sqrt(1.09) + 1e-9);
    }
  }
}

TEST_CASE("training reports losses and rejects bad input") {
  Models m(tiny_nav(), tiny_den(), {}, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  std::vector<int> seen;
  const auto report = train(m, small_dataset(), cfg, [&](int e, const LossTerms& l) {
    seen.push_back(e);
    CHECK(std::isfinite(l.total));
    CHECK(l.total == doctest::Approx(l.motion + cfg.lambda_t * l.traj + cfg.lambda_c * l.conf));
  });
  CHECK(report.epochs.size() == 2);
  CHECK(seen.size() == 2);
  CHECK(report.samples == small_samples().size());
  CHECK(m.memory.size() == report.stored);

  ToyDataset empty;
  try {
    train(m, empty, cfg);
    FAIL("expected a training error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Training);
  }
  TrainConfig bad = cfg;
  bad.batch = 0;
  CHECK_THROWS_AS(train(m, small_dataset(), bad), Error);
}

TEST_CASE("checkpoint round trip") {
  Models m(tiny_nav(), tiny_den(), {}, 7);
  const auto path = std::filesystem::temp_directory_path() / "dhsi_test_pipeline.ckpt";
  save_checkpoint(m, path);
  const Models back = load_checkpoint(path);
  CHECK(back.schedule.T == m.schedule.T);
  const auto same = [](const nn::ParamSet& a, const nn::ParamSet& b) {
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) {
      CHECK(a.params()[i].name == b.params()[i].name);
      CHECK(a.params()[i].value == b.params()[i].value);
    }
  };
  same(m.navigator.params(), back.navigator.params());
  same(m.denoiser.params(), back.denoiser.params());

  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("generation: shape, stitching, determinism") {
  const auto& ds = small_dataset();
  const auto scenarios = make_dyn_scenarios(ds, 1, 2);
  REQUIRE(!scenarios.empty());
  const auto& sc = scenarios.front();
  const SceneTimeline tl = sc.scene_states.timeline();
  const Models m(tiny_nav(), tiny_den(), {}, 1);

  for (bool no_nav : {false, true}) {
    GenerateOptions opts;
    opts.no_navigation = no_nav;
    opts.segments = 2;
    opts.seed = 5;
    const auto a = generate_sequence(m, sc.prompt, tl, sc.start, sc.goal, opts);
    REQUIRE(a.motion.frames() == 2 * kMotionFrames);
    CHECK(a.motion.joints() == kJoints);
    CHECK(a.motion.data.allFinite());
    CHECK(a.trajectory.size() == static_cast<std::size_t>(2 * kMotionFrames));
    CHECK(a.keypoints.size() == 2);
    CHECK(a.segments.size() == 2);
    // the second segment opens with the last two frames of the first
    CHECK(a.motion.data.row(kMotionFrames) == a.motion.data.row(kMotionFrames - 2));
    CHECK(a.motion.data.row(kMotionFrames + 1) == a.motion.data.row(kMotionFrames - 1));

    const auto b = generate_sequence(m, sc.prompt, tl, sc.start, sc.goal, opts);
    CHECK(a.motion.data == b.motion.data);
    opts.seed = 6;
    const auto c = generate_sequence(m, sc.prompt, tl, sc.start, sc.goal, opts);
    CHECK(a.motion.data != c.motion.data);

    if (no_nav) {
      // straight-line conditions: waypoints are collinear in X-Z within a segment
      const Vec3 s0 = a.trajectory.front(), s1 = a.trajectory[kMotionFrames - 1];
      const Vec2 d(s1.x() - s0.x(), s1.z() - s0.z());
      for (int f = 0; f < kMotionFrames; ++f) {
        const Vec2 q(a.trajectory[f].x() - s0.x(), a.trajectory[f].z() - s0.z());
        CHECK(std::abs(d.x() * q.y() - d.y() * q.x()) < 1e-9);
      }
    }
  }
}

TEST_CASE("generation rejects a bad segment count") {
  const auto scenarios = make_dyn_scenarios(small_dataset(), 1, 2);
  const auto& sc = scenarios.front();
  const Models m(tiny_nav(), tiny_den(), {}, 1);
  GenerateOptions opts;
  opts.segments = 0;
  CHECK_THROWS_AS(generate_sequence(m, sc.prompt, sc.scene_states.timeline(), sc.start, sc.goal, opts), Error);
}
