#pragma once

// Procedural toy world standing in for captured motion data: furnished box
// rooms, a kinematic 22-joint animator, scripted clips (walk, sit, reach,
// drink) whose pelvis follows the replanning oracle, and Dyn-Scenes-style
// scenarios in which one movable box is shifted onto the planned route.

#include "dhsi/motion.hpp"
#include "dhsi/navigation.hpp"
#include "dhsi/voxel_scene.hpp"

#include <string>
#include <vector>

namespace dhsi {

inline constexpr double kRoomHalfExtent = 3.0;
inline constexpr double kRoomHeight = 2.0;
inline constexpr double kRoomVoxel = 0.05;

GridSpec toy_grid_spec();

// Inflated X-Z navigation grid of a scene.
NavGrid2D toy_nav(const OccupancyGrid& grid);

// A scene that may change over time: box layouts with their activation frames.
struct SceneStates {
  std::vector<int> frames;       // frames[0] == 0, strictly increasing
  std::vector<BoxScene> layouts;
  SceneTimeline timeline() const;
};

BoxScene make_toy_room(Rng& rng, int boxes_min, int boxes_max);
bool is_movable(const Box& b);

// Per-frame kinematic parameters of the animator.
struct PoseParams {
  Vec3 pelvis = Vec3(0, 0.93, 0);
  double yaw = 0.0;
  double phase = 0.0;   // gait phase, radians
  double gait = 0.0;    // gait amplitude in [0, 1]
  double sit = 0.0;     // blend toward the seated leg pose
  double reach = 0.0;   // right arm raised forward
  double drink = 0.0;   // right hand brought to the mouth
};
MotionSegment animate(const std::vector<PoseParams>& frames);

// Pose parameters for a pelvis ground track at standing height: heading follows
// the direction of travel with a bounded turn rate, gait amplitude follows speed.
std::vector<PoseParams> walk_params(const std::vector<Vec2>& track, double initial_yaw, double fps = kFrameRate);

struct ToyDatasetSpec {
  int num_scenes = 10;
  int boxes_min = 3;
  int boxes_max = 6;
  std::vector<std::string> actions{"walk", "sit", "reach", "drink"};
  int clips_per_scene = 10;
  double dynamic_fraction = 0.35;  // share of walk clips with a mid-clip scene change
  double speed_min = kWalkSpeed;
  double speed_max = kWalkSpeed;
  std::uint64_t seed = 7;
  void validate() const;
};

struct ToyClip {
  std::string id;
  std::string action;
  std::string prompt;
  int scene = 0;
  SceneStates scene_states;
  Vec3 start = Vec3::Zero();  // floor point
  Vec3 goal = Vec3::Zero();   // floor point, or the seat point for sit clips
  double speed = kWalkSpeed;
  MotionSegment motion;
};

struct ToyDataset {
  ToyDatasetSpec spec;
  std::vector<BoxScene> scenes;
  std::vector<ToyClip> clips;
};

ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec);

struct Scenario {
  std::string id;
  std::string prompt;
  SceneStates scene_states;
  Vec3 start = Vec3::Zero();  // floor points
  Vec3 goal = Vec3::Zero();
};

// Number of 48-frame segments for a planned route of the given length.
int segment_count(double path_length_m);
inline constexpr double kSegmentSpan = 1.6;  // metres of route per segment

// Dynamic walk scenarios over the dataset's scenes; one movable box is moved
// at a change frame in [40, 100] onto the route planned in the initial scene.
std::vector<Scenario> make_dyn_scenarios(const ToyDataset& dataset, int n, std::uint64_t seed,
                                         std::vector<std::string>* warnings = nullptr);

}  // namespace dhsi
