#include "dhsi/common.hpp"

#include <cmath>
#include <numbers>

namespace dhsi {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::NoPath: return "no path";
    case ErrorKind::UnreachableEndpoint: return "unreachable endpoint";
  }
  return "error";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NoPath:
    case ErrorKind::UnreachableEndpoint: return 3;
    case ErrorKind::Numeric:
    case ErrorKind::Training: return 4;
    default: return 2;
  }
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) noexcept {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double wrap_angle(double radians) noexcept {
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(radians + std::numbers::pi, two_pi);
  if (r < 0) r += two_pi;
  return r - std::numbers::pi;
}

}  // namespace dhsi
