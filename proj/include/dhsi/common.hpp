#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dhsi {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Every failure surfaced to callers is a dhsi::Error carrying a kind, which the
// CLI maps onto its exit codes.
enum class ErrorKind {
  Config,
  Input,
  Format,
  Io,
  Numeric,
  Training,
  NoPath,
  UnreachableEndpoint,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

const char* to_string(ErrorKind kind) noexcept;

// Process exit code for an error kind: 2 input/config/format/io, 3 no-path, 4 numeric/training.
int exit_code(ErrorKind kind) noexcept;

// All randomness flows through this engine; std::normal_distribution and friends
// are deterministic for a given standard library.
using Rng = std::mt19937_64;

// Derive an independent stream from a base seed and a stream tag.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) noexcept;

double wrap_angle(double radians) noexcept;

}  // namespace dhsi
