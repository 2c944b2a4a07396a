#include "dhsi/metrics.hpp"

#include "dhsi/skeleton.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dhsi {

namespace {

void check_tracks(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  require(!pred.empty() && pred.size() == gt.size(), ErrorKind::Input, "trajectories must be non-empty and equal length");
}

// Symmetric PSD square root; negative eigenvalues from roundoff are clamped to zero.
MatX sqrt_psd(const MatX& m) {
  const Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (m + m.transpose()));
  const VecX root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<Vec3> pelvis_track(const MotionSegment& motion) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(motion.frames()));
  for (int f = 0; f < motion.frames(); ++f) out.push_back(motion.joint(f, skeleton::kPelvis));
  return out;
}

double traj_err(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  check_tracks(pred, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gt[i]).norm();
  return s / static_cast<double>(pred.size());
}

double goal_err(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  check_tracks(pred, gt);
  return (pred.back() - gt.back()).norm();
}

double traj_similarity(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, double tau) {
  check_tracks(pred, gt);
  require(tau > 0, ErrorKind::Input, "tau must be positive");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += (pred[i] - gt[i]).norm() < tau;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<Vec3> body_samples(const MotionSegment& motion, int frame) {
  require(motion.joints() == skeleton::kCount, ErrorKind::Input, "body sampling needs the 22-joint skeleton");
  std::vector<Vec3> out;
  out.reserve(kBodySampleCount);
  for (int j = 0; j < skeleton::kCount; ++j) out.push_back(motion.joint(frame, j));
  for (int j = 1; j < skeleton::kCount; ++j) {
    const Vec3 a = out[static_cast<std::size_t>(skeleton::kParents[j])], b = out[static_cast<std::size_t>(j)];
    for (int s = 1; s <= 3; ++s) out.push_back(a + (b - a) * (s / 4.0));
  }
  for (int j = 1; j < skeleton::kCount; ++j) {
    const Vec3 a = out[static_cast<std::size_t>(skeleton::kParents[j])], b = out[static_cast<std::size_t>(j)];
    const Vec3 mid = 0.5 * (a + b);
    const Vec3 d = b - a;
    const double len = d.norm();
    if (len == 0.0) {
      for (int s = 0; s < 8; ++s) out.push_back(mid);
      continue;
    }
    const Vec3 axis = d / len;
    Eigen::Index least = 0;
    axis.cwiseAbs().minCoeff(&least);  // least aligned world axis gives a stable perpendicular
    const Vec3 u = axis.cross(Vec3::Unit(least)).normalized();
    const Vec3 v = axis.cross(u);
    for (int s = 0; s < 8; ++s) {
      const double ang = s * M_PI / 4.0;
      out.push_back(mid + kCapsuleRadius * (std::cos(ang) * u + std::sin(ang) * v));
    }
  }
  return out;
}

PenetrationStats penetration(const MotionSegment& motion, const SceneTimeline& timeline, int frame_offset) {
  require(motion.frames() >= 1, ErrorKind::Input, "penetration needs a non-empty motion");
  PenetrationStats st;
  double sq_sum = 0.0;
  long total = 0, samples = 0;
  int worst = 0;
  for (int f = 0; f < motion.frames(); ++f) {
    const auto& grid = grid_at(timeline, frame_offset + f);
    const auto pts = body_samples(motion, f);
    int count = 0;
    for (const auto& p : pts) count += query_occupied(grid, p);
    st.per_frame.push_back(count);
    const double frac = static_cast<double>(count) / static_cast<double>(pts.size());
    sq_sum += frac * frac;
    total += count;
    samples += static_cast<long>(pts.size());
    worst = std::max(worst, count);
  }
  const double n = motion.frames();
  st.value = kPenetrationScale * sq_sum / n;
  st.rate = static_cast<double>(total) / static_cast<double>(samples);
  st.mean = static_cast<double>(total) / n;
  st.max = worst;
  return st;
}

double mpjpe(const MotionSegment& pred, const MotionSegment& gt) {
  require(pred.frames() == gt.frames() && pred.joints() == gt.joints() && pred.frames() > 0, ErrorKind::Input,
          "mpjpe shape mismatch");
  double s = 0.0;
  for (int f = 0; f < pred.frames(); ++f)
    for (int j = 0; j < pred.joints(); ++j) s += (pred.joint(f, j) - gt.joint(f, j)).norm();
  return s / (static_cast<double>(pred.frames()) * pred.joints());
}

double foot_skating(const MotionSegment& motion, double fps, double height_threshold) {
  require(motion.joints() > skeleton::kRightFoot, ErrorKind::Input, "foot skating needs foot joints");
  if (motion.frames() < 2) return 0.0;
  double s = 0.0;
  for (int f = 1; f < motion.frames(); ++f)
    for (int foot : {skeleton::kLeftFoot, skeleton::kRightFoot}) {
      const Vec3 a = motion.joint(f - 1, foot), b = motion.joint(f, foot);
      const double speed = Vec2(b.x() - a.x(), b.z() - a.z()).norm() * fps;
      const double h = b.y();
      if (h >= height_threshold) continue;
      s += speed * std::max(0.0, 2.0 - std::pow(2.0, h / height_threshold));
    }
  return s / (2.0 * (motion.frames() - 1));
}

double diversity(const std::vector<MotionSegment>& motions, int pairs, std::uint64_t seed) {
  require(motions.size() >= 2, ErrorKind::Input, "diversity needs at least two motions");
  require(pairs >= 1, ErrorKind::Input, "diversity needs at least one pair");
  for (const auto& m : motions)
    require(m.data.rows() == motions[0].data.rows() && m.data.cols() == motions[0].data.cols(), ErrorKind::Input,
            "diversity needs equal motion shapes");
  Rng rng(seed);
  std::vector<std::size_t> order(motions.size());
  double s = 0.0;
  int done = 0;
  while (done < pairs) {
    // each round pairs up a fresh shuffle, so pairs within a round are disjoint
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i + 1 < order.size() && done < pairs; i += 2, ++done)
      s += (motions[order[i]].data - motions[order[i + 1]].data).norm();
  }
  return s / pairs;
}

MatX kinematic_features(const std::vector<MotionSegment>& motions, double fps) {
  constexpr int J = skeleton::kCount;
  MatX out(static_cast<Eigen::Index>(motions.size()), 2 * J + 3);
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const auto& m = motions[i];
    require(m.joints() == J && m.frames() >= 2, ErrorKind::Input, "kinematic features need >= 2 frames of 22 joints");
    const int n = m.frames();
    VecX row = VecX::Zero(2 * J + 3);
    for (int j = 0; j < J; ++j) {
      double speed = 0;
      for (int f = 1; f < n; ++f) speed += (m.joint(f, j) - m.joint(f - 1, j)).norm() * fps;
      row[j] = speed / (n - 1);
    }
    std::vector<double> root_speed;
    double vy = 0;
    for (int f = 1; f < n; ++f) {
      const Vec3 d = (m.joint(f, 0) - m.joint(f - 1, 0)) * fps;
      root_speed.push_back(d.norm());
      vy += d.y();
    }
    const double mean = std::accumulate(root_speed.begin(), root_speed.end(), 0.0) / root_speed.size();
    double var = 0;
    for (double v : root_speed) var += (v - mean) * (v - mean);
    row[J] = mean;
    row[J + 1] = std::sqrt(var / root_speed.size());
    row[J + 2] = vy / (n - 1);
    for (int j = 0; j < J; ++j) {
      Vec3 mu = Vec3::Zero();
      for (int f = 0; f < n; ++f) mu += m.joint(f, j) - m.joint(f, 0);
      mu /= n;
      double v = 0;
      for (int f = 0; f < n; ++f) v += (m.joint(f, j) - m.joint(f, 0) - mu).squaredNorm();
      row[J + 3 + j] = v / n;
    }
    out.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return out;
}

FidResult frechet_distance(const MatX& a, const MatX& b) {
  require(a.rows() >= 2 && b.rows() >= 2, ErrorKind::Input, "Frechet distance needs at least two samples per batch");
  require(a.cols() == b.cols(), ErrorKind::Input, "feature widths differ");
  FidResult r;
  auto stats = [&](const MatX& x, VecX& mu, MatX& cov) {
    mu = x.colwise().mean().transpose();
    const MatX c = x.rowwise() - mu.transpose();
    cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
    const Eigen::SelfAdjointEigenSolver<MatX> es(cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 1e-12) {
      cov += 1e-6 * MatX::Identity(cov.rows(), cov.cols());
      r.regularized = true;
    }
  };
  VecX mu_a, mu_b;
  MatX cov_a, cov_b;
  stats(a, mu_a, cov_a);
  stats(b, mu_b, cov_b);
  const MatX ra = sqrt_psd(cov_a);
  const MatX cross = sqrt_psd(ra * cov_b * ra);
  r.value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  r.value = std::max(r.value, 0.0);
  return r;
}

FidResult fid_proxy(const std::vector<MotionSegment>& generated, const std::vector<MotionSegment>& reference) {
  return frechet_distance(kinematic_features(generated), kinematic_features(reference));
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"traj_sim", r.traj_sim},     {"traj_err", r.traj_err},   {"goal_err", r.goal_err},
                   {"pene_value", r.pene_value}, {"pene_rate", r.pene_rate}, {"pene_mean", r.pene_mean},
                   {"pene_max", r.pene_max},     {"foot_skating", r.foot_skating}};
  j["mpjpe"] = r.mpjpe ? nlohmann::json(*r.mpjpe) : nlohmann::json(nullptr);
  j["diversity"] = r.diversity ? nlohmann::json(*r.diversity) : nlohmann::json(nullptr);
  j["fid_proxy"] = r.fid_proxy ? nlohmann::json(*r.fid_proxy) : nlohmann::json(nullptr);
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.traj_sim = j.at("traj_sim").get<double>();
    r.traj_err = j.at("traj_err").get<double>();
    r.goal_err = j.at("goal_err").get<double>();
    r.pene_value = j.at("pene_value").get<double>();
    r.pene_rate = j.at("pene_rate").get<double>();
    r.pene_mean = j.at("pene_mean").get<double>();
    r.pene_max = j.at("pene_max").get<double>();
    r.foot_skating = j.at("foot_skating").get<double>();
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
      return j.at(k).get<double>();
    };
    r.mpjpe = opt("mpjpe");
    r.diversity = opt("diversity");
    r.fid_proxy = opt("fid_proxy");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("bad report: ") + e.what());
  }
  return r;
}

}  // namespace dhsi
