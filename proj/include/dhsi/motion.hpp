#pragma once

// Fixed-shape motion segment shared by the memory and the diffusion controller.

#include "dhsi/common.hpp"

#include <Eigen/Dense>

namespace dhsi {

inline constexpr int kJoints = 22;
inline constexpr int kMotionFrames = 48;

// frames x (joints * 3), row f holding joint j at columns 3j..3j+2.
struct MotionSegment {
  MatX data;

  MotionSegment() = default;
  explicit MotionSegment(int frames, int joints = kJoints) : data(MatX::Zero(frames, 3 * joints)) {}
  explicit MotionSegment(MatX m) : data(std::move(m)) {}

  int frames() const noexcept { return static_cast<int>(data.rows()); }
  int joints() const noexcept { return static_cast<int>(data.cols() / 3); }
  Vec3 joint(int f, int j) const { return data.block<1, 3>(f, 3 * j).transpose(); }
  void set_joint(int f, int j, const Vec3& p) { data.block<1, 3>(f, 3 * j) = p.transpose(); }
  bool operator==(const MotionSegment& o) const {
    return data.rows() == o.data.rows() && data.cols() == o.data.cols() && data == o.data;
  }
};

}  // namespace dhsi
