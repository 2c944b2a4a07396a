#include "dhsi/pipeline.hpp"

#include "dhsi/binary_io.hpp"
#include "dhsi/skeleton.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace dhsi {

Vec3 CanonicalFrame::to_local(const Vec3& world) const {
  const Vec3 d(world.x() - origin.x(), world.y(), world.z() - origin.y());
  return yaw_rotation(yaw).transpose() * d;
}

Vec3 CanonicalFrame::to_world(const Vec3& local) const {
  const Vec3 d = yaw_rotation(yaw) * local;
  return Vec3(d.x() + origin.x(), d.y(), d.z() + origin.y());
}

namespace {

template <typename F>
MotionSegment map_joints(const MotionSegment& m, F&& f) {
  MotionSegment out(m.frames(), m.joints());
  for (int i = 0; i < m.frames(); ++i)
    for (int j = 0; j < m.joints(); ++j) out.set_joint(i, j, f(m.joint(i, j)));
  return out;
}

Vec2 xz(const Vec3& p) { return Vec2(p.x(), p.z()); }

}  // namespace

MotionSegment to_local(const MotionSegment& world, const CanonicalFrame& frame) {
  return map_joints(world, [&](const Vec3& p) { return frame.to_local(p); });
}

MotionSegment to_world(const MotionSegment& local, const CanonicalFrame& frame) {
  return map_joints(local, [&](const Vec3& p) { return frame.to_world(p); });
}

double body_yaw(const MotionSegment& motion, int frame) {
  const Vec3 across = motion.joint(frame, skeleton::kLeftHip) - motion.joint(frame, skeleton::kRightHip);
  return yaw_of(Vec3(-across.z(), 0.0, across.x()));
}

namespace {

MotionSegment window_of(const MotionSegment& m, int first) {
  MotionSegment out(kMotionFrames, m.joints());
  for (int f = 0; f < kMotionFrames; ++f) out.data.row(f) = m.data.row(std::min(first + f, m.frames() - 1));
  return out;
}

}  // namespace

std::vector<TrainingSample> extract_samples(const ToyDataset& dataset, int stride) {
  require(stride >= 1, ErrorKind::Config, "window stride must be >= 1");
  std::vector<TrainingSample> out;
  for (std::size_t ci = 0; ci < dataset.clips.size(); ++ci) {
    const ToyClip& clip = dataset.clips[ci];
    const auto timeline = std::make_shared<const SceneTimeline>(clip.scene_states.timeline());
    const TextEmbedding text = embed_text(clip.prompt);
    const int frames = clip.motion.frames();
    std::vector<int> starts;
    for (int w = 0; w + kMotionFrames <= frames; w += stride) starts.push_back(w);
    const int last = std::max(0, frames - kMotionFrames);
    if (starts.empty() || starts.back() != last) starts.push_back(last);

    for (const int w : starts) {
      const MotionSegment world = window_of(clip.motion, w);
      const Vec3 start = world.joint(0, skeleton::kPelvis);
      const CanonicalFrame frame{xz(start), body_yaw(world, 0)};
      const bool final_window = w + kMotionFrames >= frames;
      Vec3 goal = world.joint(kMotionFrames - 1, skeleton::kPelvis);
      goal.y() = clip.action == "sit" && final_window ? clip.goal.y() : 0.0;

      TrainingSample s;
      s.clip = ci;
      s.first_frame = w;
      s.prompt = clip.prompt;
      s.x0 = to_local(world, frame);
      s.local = extract_local(timeline->grid_at(w), ground_anchor(start), frame.yaw);
      s.cond.pooled = patch_pool(s.local);
      s.cond.trajectory.resize(kMotionFrames, 3);
      for (int f = 0; f < kMotionFrames; ++f) s.cond.trajectory.row(f) = s.x0.joint(f, skeleton::kPelvis).transpose();
      s.cond.confidence = VecX::Ones(kMotionFrames);
      s.cond.text = text;
      s.cond.goal = frame.to_local(goal);

      std::vector<Vec3> path;
      for (int f = 0; f < kMotionFrames; ++f) path.push_back(world.joint(f, skeleton::kPelvis));
      s.nav = teacher_window(path, goal, *timeline, text, w, frame.yaw);
      s.timeline = timeline;
      s.path = std::move(path);
      s.nav_goal = goal;
      s.yaw = frame.yaw;
      out.push_back(std::move(s));
    }
  }
  return out;
}

void TrainConfig::validate() const {
  require(epochs >= 1 && batch >= 1, ErrorKind::Config, "epochs and batch must be >= 1");
  require(lr > 0 && std::isfinite(lr), ErrorKind::Config, "learning rate must be positive");
  require(lambda_t >= 0 && lambda_c >= 0, ErrorKind::Config, "loss weights must be non-negative");
  require(perturb_prob >= 0 && perturb_prob <= 1 && perturb_max >= 0, ErrorKind::Config, "invalid perturbation");
  require(nav_noise_prob >= 0 && nav_noise_prob <= 1 && nav_noise_max >= 0 && nav_correction >= 0 && nav_correction <= 1,
          ErrorKind::Config, "invalid navigator drift");
  require(prime_prob >= 0 && prime_prob <= 1, ErrorKind::Config, "invalid prime share");
}

Models::Models(const NavigatorConfig& nav, const DenoiserConfig& den, const MemoryConfig& mem, std::uint64_t seed)
    : navigator(nav, mix_seed(seed, 1)),
      denoiser(den, mix_seed(seed, 2)),
      schedule(schedule_new(den.steps)),
      memory(mem) {}

nn::Var motion_loss(nn::Tape& t, const Denoiser& model, const NoiseSchedule& s, const MotionSegment& x0,
                    const SegmentCondition& cond, int step, const MotionSegment& noise) {
  return motion_loss_from(t, model, q_sample(x0, step, noise, s).data, x0, cond, step);
}

nn::Var motion_loss_from(nn::Tape& t, const Denoiser& model, const MatX& x_t, const MotionSegment& x0,
                         const SegmentCondition& cond, int step) {
  const nn::Var token = model.assemble_conditions(t, cond);
  const nn::Var pred = model.predict_x0(t, t.constant(x_t), step, token);
  return nn::mse(pred, t.constant(x0.data));
}

NavLossVars navigator_loss(nn::Tape& t, const Navigator& nav, const TeacherWindow& w) {
  const auto out = nav.forward(t, w.seq);
  const nn::Var err = nn::sub(out.displacement, t.constant(w.target_displacement));
  const auto n = static_cast<double>(w.target_displacement.rows());
  const nn::Var traj = nn::scale(nn::sum(nn::square(err)), 1.0 / n);
  // the soft target depends on the prediction but is not differentiated through
  const nn::Mat e = t.value(err);
  nn::Mat target(e.rows(), 1);
  for (Eigen::Index i = 0; i < e.rows(); ++i) target(i, 0) = std::exp(-e.row(i).norm());
  const nn::Var conf = nn::bce(nn::sigmoid(out.confidence_logit), target);
  return {traj, conf};
}

void perturb_trajectory(SegmentCondition& cond, Rng& rng, const TrainConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) >= cfg.perturb_prob) return;
  const double amp = cfg.perturb_max * u(rng);
  const double dir = 2 * M_PI * u(rng);
  const int waves = u(rng) < 0.5 ? 1 : 2;
  const auto n = cond.trajectory.rows();
  for (Eigen::Index f = 0; f < n; ++f) {
    const double a = amp * std::sin(M_PI * waves * static_cast<double>(f) / static_cast<double>(n - 1));
    cond.trajectory(f, 0) += a * std::sin(dir);
    cond.trajectory(f, 2) += a * std::cos(dir);
    cond.confidence[f] = std::exp(-std::abs(a));
  }
}

TeacherWindow drifted_window(const TrainingSample& s, Rng& rng, const TrainConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double amp = cfg.nav_noise_max * u(rng), dir = 2 * M_PI * u(rng);
  const double amp_y = 0.3 * cfg.nav_noise_max * (2 * u(rng) - 1);
  const double waves = 0.5 + 1.5 * u(rng);
  const std::size_t n = s.path.size();
  std::vector<Vec3> noisy(n), steps(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::sin(M_PI * waves * static_cast<double>(i) / static_cast<double>(n - 1));
    noisy[i] = s.path[i] + Vec3(amp * std::sin(dir) * a, amp_y * a, amp * std::cos(dir) * a);
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    steps[i] = (s.path[i + 1] - s.path[i]) - cfg.nav_correction * (noisy[i] - s.path[i]);
  return teacher_window(noisy, s.nav_goal, *s.timeline, s.cond.text, s.first_frame, s.yaw, &steps);
}

TrainReport train(Models& models, const ToyDataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require(!dataset.clips.empty(), ErrorKind::Training, "cannot train on an empty dataset");
  const auto samples = extract_samples(dataset);
  require(!samples.empty(), ErrorKind::Training, "dataset yields no training windows");

  TrainReport report;
  report.samples = samples.size();
  nn::Adam adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm});
  const std::vector<nn::ParamSet*> sets{&models.navigator.params(), &models.denoiser.params()};
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const int T = models.schedule.T;
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossTerms sum;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      std::vector<std::pair<std::size_t, double>> pending;
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const TrainingSample& s = samples[order[bi]];
        SegmentCondition cond = s.cond;
        perturb_trajectory(cond, rng, cfg);
        int step = std::uniform_int_distribution<int>(1, T)(rng);
        const MotionSegment noise = gaussian_prime(rng());
        MatX x_t;
        if (u01(rng) < cfg.prime_prob) {
          step = T;
          if (u01(rng) < 0.5) {
            x_t = noise.data;
          } else {
            const auto other = std::uniform_int_distribution<std::size_t>(0, samples.size() - 1)(rng);
            x_t = q_sample(samples[other].x0, T, noise, models.schedule).data;
          }
        } else {
          x_t = q_sample(s.x0, step, noise, models.schedule).data;
        }

        nn::Tape tape;
        const nn::Var lm = motion_loss_from(tape, models.denoiser, x_t, s.x0, cond, step);
        const bool drift = u01(rng) < cfg.nav_noise_prob;
        const auto nl = navigator_loss(tape, models.navigator, drift ? drifted_window(s, rng, cfg) : s.nav);
        const nn::Var total =
            nn::add(nn::add(lm, nn::scale(nl.traj, cfg.lambda_t)), nn::scale(nl.conf, cfg.lambda_c));
        const double lt = total.scalar();
        if (!std::isfinite(lt))
          fail(ErrorKind::Training, "non-finite loss in epoch " + std::to_string(epoch + 1));
        tape.backward(nn::scale(total, inv));
        sum.motion += lm.scalar();
        sum.traj += nl.traj.scalar();
        sum.conf += nl.conf.scalar();
        sum.total += lt;
        pending.emplace_back(order[bi], lm.scalar());
      }
      adam.step(sets);
      for (const auto& [index, loss] : pending) {
        const TrainingSample& s = samples[index];
        MemoryEntry e;
        e.noisy_motion = q_sample(s.x0, T, gaussian_prime(rng()), models.schedule);
        e.clean_motion = s.x0;
        e.scene_context = s.local;
        e.scene_feature = models.denoiser.scene_encoder().encode(s.local);
        e.text = s.cond.text;
        e.prompt = s.prompt;
        const auto d = models.memory.consider_store(std::move(e), loss);
        if (d.kind == StoreDecision::Kind::Inserted || d.kind == StoreDecision::Kind::Replaced) ++report.stored;
      }
    }
    const double n = static_cast<double>(samples.size());
    LossTerms mean{sum.motion / n, sum.traj / n, sum.conf / n, sum.total / n};
    if (!models.navigator.params().all_finite() || !models.denoiser.params().all_finite())
      fail(ErrorKind::Training, "parameters diverged in epoch " + std::to_string(epoch + 1));
    report.epochs.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  const SceneEncoder& enc = models.denoiser.scene_encoder();
  models.memory.refresh_scene_features([&](const LocalGrid& g) { return enc.encode(g); });
  return report;
}

namespace {

constexpr std::string_view kCkptMagic = "DHSCKPT1";

nlohmann::json transformer_json(const nn::TransformerConfig& c) {
  return {{"width", c.width}, {"layers", c.layers}, {"heads", c.heads}, {"ffn_mult", c.ffn_mult}};
}

nn::TransformerConfig transformer_from(const nlohmann::json& j) {
  return {j.at("width").get<int>(), j.at("layers").get<int>(), j.at("heads").get<int>(), j.at("ffn_mult").get<int>()};
}

}  // namespace

void save_checkpoint(const Models& models, const std::filesystem::path& path) {
  const auto& nc = models.navigator.config();
  const auto& dc = models.denoiser.config();
  const nlohmann::json cfg{
      {"navigator", {{"decoder", transformer_json(nc.decoder)}, {"scene_hidden", nc.scene_hidden}}},
      {"denoiser",
       {{"body", transformer_json(dc.body)},
        {"scene_hidden", dc.scene_hidden},
        {"adapter_hidden", dc.adapter_hidden},
        {"frames", dc.frames},
        {"joints", dc.joints},
        {"steps", dc.steps}}},
      {"schedule", {{"T", models.schedule.T}, {"beta_start", models.schedule.beta(1)},
                    {"beta_end", models.schedule.beta(models.schedule.T)}}}};
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  bin::put_bytes(out, kCkptMagic);
  bin::put_string(out, cfg.dump());
  nn::write_params(out, models.navigator.params());
  nn::write_params(out, models.denoiser.params());
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

Models load_checkpoint(const std::filesystem::path& path, const MemoryConfig& memory) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  bin::expect_magic(in, kCkptMagic);
  NavigatorConfig nc;
  DenoiserConfig dc;
  double beta_start = 0, beta_end = 0;
  try {
    const auto j = nlohmann::json::parse(bin::get_string(in, 1 << 20));
    nc.decoder = transformer_from(j.at("navigator").at("decoder"));
    nc.scene_hidden = j.at("navigator").at("scene_hidden").get<int>();
    const auto& d = j.at("denoiser");
    dc.body = transformer_from(d.at("body"));
    dc.scene_hidden = d.at("scene_hidden").get<int>();
    dc.adapter_hidden = d.at("adapter_hidden").get<int>();
    dc.frames = d.at("frames").get<int>();
    dc.joints = d.at("joints").get<int>();
    dc.steps = d.at("steps").get<int>();
    beta_start = j.at("schedule").at("beta_start").get<double>();
    beta_end = j.at("schedule").at("beta_end").get<double>();
    require(j.at("schedule").at("T").get<int>() == dc.steps, ErrorKind::Format, "schedule length differs from steps");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("bad checkpoint config block: ") + e.what());
  }
  Models m(nc, dc, memory);
  m.schedule = schedule_new(dc.steps, beta_start, beta_end);
  nn::read_params(in, m.navigator.params());
  nn::read_params(in, m.denoiser.params());
  return m;
}

namespace {

// Straight-line stand-in for the navigator (ablation): constant speed from
// start to the keypoint, pelvis height easing to standing or the seat.
TrajectorySegment straight_segment(const Vec3& start, const Vec3& keypoint, bool seated_goal) {
  TrajectorySegment seg;
  const double end_y = seated_goal ? keypoint.y() : skeleton::kPelvisHeight;
  for (int f = 0; f < kMotionFrames; ++f) {
    const double u = static_cast<double>(f) / (kMotionFrames - 1);
    Vec3 p = start + (keypoint - start) * u;
    p.y() = start.y() + (end_y - start.y()) * u;
    seg.waypoints.push_back({p, 1.0});
  }
  return seg;
}

}  // namespace

GeneratedSequence generate_sequence(const Models& models, const std::string& prompt, const SceneTimeline& timeline,
                                    const Vec3& start, const Vec3& goal, const GenerateOptions& opts) {
  const TextEmbedding text = embed_text(prompt);
  const bool seated = text.verb == "sit" || text.verb == "lie";
  const OccupancyGrid& initial = timeline.grid_at(0);
  const NavGrid2D nav = inflate(project_2d(initial), opts.inflation_radius);

  // a seat is itself an obstacle, so sitting plans to the closest free cell and
  // takes the seat as the final keypoint
  Vec2 plan_goal = xz(goal);
  if (seated) {
    const auto cell = nav.cell_of(plan_goal);
    if (nav.in_bounds(cell.first, cell.second) && nav.is_blocked(cell.first, cell.second)) {
      const auto free = nearest_free(nav, cell);
      require(free.has_value(), ErrorKind::UnreachableEndpoint, "no free cell near the seat");
      plan_goal = nav.cell_center(free->first, free->second);
    }
  }
  const PathPlan plan = plan_global(nav, xz(start), plan_goal);
  require(!opts.segments || *opts.segments >= 1, ErrorKind::Config, "segment count must be >= 1");
  const int k = opts.segments ? *opts.segments : segment_count(plan.length_m());
  const double goal_height = seated ? support_height(initial, xz(goal)) : 0.0;
  GeneratedSequence out;
  out.keypoints = select_keypoints(plan, k, goal_height);
  if (seated) out.keypoints.back() = Vec3(goal.x(), goal_height, goal.z());
  for (std::size_t i = 1; i < timeline.states().size(); ++i) out.change_frames.push_back(timeline.states()[i].activation_frame);

  const ConditionWeights uniform{};
  out.motion = MotionSegment(k * kMotionFrames, kJoints);
  std::optional<MatX> prev_world;  // last two frames of the previous segment
  Vec3 pelvis(start.x(), skeleton::kPelvisHeight, start.z());
  std::optional<double> yaw;

  for (int s = 0; s < k; ++s) {
    const int offset = s * kMotionFrames;
    const Vec3& keypoint = out.keypoints[static_cast<std::size_t>(s)];
    SegmentDiagnostics diag;
    diag.index = s;
    diag.frame_offset = offset;
    diag.keypoint = keypoint;

    TrajectorySegment traj;
    double frame_yaw;
    if (opts.no_navigation) {
      traj = straight_segment(pelvis, keypoint, seated && s == k - 1);
      const Vec3 d = keypoint - pelvis;
      frame_yaw = yaw ? *yaw : (xz(d).norm() > 1e-9 ? yaw_of(d) : 0.0);
    } else {
      try {
        auto r = rollout(models.navigator, pelvis, keypoint, timeline, text, kMotionFrames, offset, yaw);
        traj = std::move(r.segment);
        diag.steps = std::move(r.steps);
      } catch (const Error& e) {
        fail(e.kind(), "segment " + std::to_string(s) + ": " + e.what());
      }
      const Vec3 d = keypoint - pelvis;
      frame_yaw = yaw ? *yaw : (xz(d).norm() > 1e-9 ? yaw_of(d) : 0.0);
    }
    const CanonicalFrame frame{xz(pelvis), frame_yaw};

    SegmentCondition cond;
    const LocalGrid local = extract_local(timeline.grid_at(offset), ground_anchor(pelvis), frame_yaw);
    cond.pooled = patch_pool(local);
    cond.trajectory.resize(kMotionFrames, 3);
    cond.confidence.resize(kMotionFrames);
    for (int f = 0; f < kMotionFrames; ++f) {
      const auto& w = traj.waypoints[static_cast<std::size_t>(f)];
      cond.trajectory.row(f) = frame.to_local(w.position).transpose();
      cond.confidence[f] = w.confidence;
      out.trajectory.push_back(w.position);
      out.confidence.push_back(w.confidence);
    }
    diag.mean_confidence = cond.confidence.mean();
    cond.text = text;
    cond.goal = frame.to_local(keypoint);
    if (opts.no_adapter) cond.fixed_weights = uniform;
    diag.weights = opts.no_adapter ? uniform : models.denoiser.condition_adapter(text);

    const std::uint64_t seg_seed = mix_seed(opts.seed, static_cast<std::uint64_t>(s));
    MotionSegment prime;
    if (opts.no_memory) {
      prime = gaussian_prime(mix_seed(seg_seed, 1));
    } else {
      auto r = models.memory.retrieve(prompt, models.denoiser.scene_encoder().encode(local), mix_seed(seg_seed, 1));
      prime = std::move(r.prime);
      diag.prime_source = r.source;
    }

    std::optional<MatX> prev_local;
    if (prev_world) {
      MotionSegment two(*prev_world);
      prev_local = to_local(two, frame).data;
    }
    const MotionSegment local_motion =
        sample_segment(models.denoiser, models.schedule, cond, prime, prev_local, mix_seed(seg_seed, 2));
    MotionSegment world = to_world(local_motion, frame);
    if (prev_world) world.data.topRows(2) = *prev_world;
    require(world.data.allFinite(), ErrorKind::Numeric, "segment " + std::to_string(s) + " is not finite");
    out.motion.data.middleRows(offset, kMotionFrames) = world.data;

    prev_world = world.data.bottomRows(2);
    pelvis = world.joint(kMotionFrames - 2, skeleton::kPelvis);
    yaw = body_yaw(world, kMotionFrames - 2);
    out.segments.push_back(std::move(diag));
  }
  return out;
}

}  // namespace dhsi
