#pragma once

// 22-joint marker skeleton (SMPL body-joint ordering). Y up, rest pose faces +Z,
// the character's left is +X.

#include "dhsi/common.hpp"

#include <array>
#include <string_view>

namespace dhsi::skeleton {

enum Joint : int {
  kPelvis = 0, kLeftHip, kRightHip, kSpine1, kLeftKnee, kRightKnee, kSpine2, kLeftAnkle, kRightAnkle, kSpine3,
  kLeftFoot, kRightFoot, kNeck, kLeftCollar, kRightCollar, kHead, kLeftShoulder, kRightShoulder, kLeftElbow,
  kRightElbow, kLeftWrist, kRightWrist,
};

inline constexpr int kCount = 22;
inline constexpr int kBones = kCount - 1;  // bone b joins joint b + 1 to its parent

inline constexpr std::array<int, kCount> kParents{-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7,
                                                  8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

inline constexpr std::array<std::string_view, kCount> kNames{
    "pelvis",     "left_hip",    "right_hip",      "spine1",         "left_knee",  "right_knee",
    "spine2",     "left_ankle",  "right_ankle",    "spine3",         "left_foot",  "right_foot",
    "neck",       "left_collar", "right_collar",   "head",           "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist",     "right_wrist"};

// Standing pelvis height above the floor.
inline constexpr double kPelvisHeight = 0.93;

// Rest-pose offset of each joint from its parent.
inline const std::array<Vec3, kCount>& rest_offsets() {
  static const std::array<Vec3, kCount> offsets{
      Vec3(0, 0, 0),        Vec3(0.09, -0.08, 0),  Vec3(-0.09, -0.08, 0), Vec3(0, 0.11, -0.02),
      Vec3(0, -0.40, 0),    Vec3(0, -0.40, 0),     Vec3(0, 0.13, 0),      Vec3(0, -0.38, 0),
      Vec3(0, -0.38, 0),    Vec3(0, 0.06, 0),      Vec3(0, -0.05, 0.12),  Vec3(0, -0.05, 0.12),
      Vec3(0, 0.21, 0),     Vec3(0.06, 0.17, 0),   Vec3(-0.06, 0.17, 0),  Vec3(0, 0.12, 0.02),
      Vec3(0.10, 0.0, 0),   Vec3(-0.10, 0.0, 0),   Vec3(0, -0.26, 0),     Vec3(0, -0.26, 0),
      Vec3(0, -0.24, 0),    Vec3(0, -0.24, 0)};
  return offsets;
}

}  // namespace dhsi::skeleton
