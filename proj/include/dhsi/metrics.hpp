#pragma once

// Evaluation metrics: trajectory/goal error and similarity, penetration
// against a scene timeline, MPJPE, foot skating, diversity and a Frechet
// distance on kinematic features (fid_proxy, not comparable to published FID).
// Trajectory metrics use the pelvis joint.

#include "dhsi/motion.hpp"
#include "dhsi/voxel_scene.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace dhsi {

inline constexpr double kTrajTau = 0.1;
inline constexpr double kPenetrationScale = 100.0;  // lambda_v
inline constexpr double kFootHeightThreshold = 0.05;
inline constexpr double kCapsuleRadius = 0.05;
inline constexpr int kBodySampleCount = 22 + 21 * 3 + 21 * 8;

std::vector<Vec3> pelvis_track(const MotionSegment& motion);

double traj_err(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);
double goal_err(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);
double traj_similarity(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, double tau = kTrajTau);

// Layout: the 22 joints; then per bone (child joint 1..21) three points at
// fractions 1/4, 1/2, 3/4 from the parent; then per bone eight points on a
// ring of radius 0.05 m around the bone midpoint, perpendicular to the bone.
std::vector<Vec3> body_samples(const MotionSegment& motion, int frame);

struct PenetrationStats {
  double value = 0.0;   // 100 * mean of squared per-frame fractions
  double rate = 0.0;    // intersections / samples
  double mean = 0.0;    // intersections per frame
  double max = 0.0;     // most intersections in one frame
  std::vector<int> per_frame;
};
// Frame t of the motion is tested against grid_at(timeline, frame_offset + t).
PenetrationStats penetration(const MotionSegment& motion, const SceneTimeline& timeline, int frame_offset = 0);

double mpjpe(const MotionSegment& pred, const MotionSegment& gt);

double foot_skating(const MotionSegment& motion, double fps = 30.0, double height_threshold = kFootHeightThreshold);

double diversity(const std::vector<MotionSegment>& motions, int pairs, std::uint64_t seed);

struct FidResult {
  double value = 0.0;
  bool regularized = false;  // a covariance was singular and got 1e-6 I added
};
// One row of kinematic features per motion: per-joint mean speed (22), root
// speed mean/std and mean vertical root velocity (3), per-joint positional
// variance about the pelvis (22).
MatX kinematic_features(const std::vector<MotionSegment>& motions, double fps = 30.0);
FidResult frechet_distance(const MatX& features_a, const MatX& features_b);
FidResult fid_proxy(const std::vector<MotionSegment>& generated, const std::vector<MotionSegment>& reference);

struct EvalReport {
  double traj_sim = 0.0;
  double traj_err = 0.0;
  double goal_err = 0.0;
  double pene_value = 0.0;
  double pene_rate = 0.0;
  double pene_mean = 0.0;
  double pene_max = 0.0;
  std::optional<double> mpjpe;
  std::optional<double> diversity;
  double foot_skating = 0.0;
  std::optional<double> fid_proxy;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace dhsi
