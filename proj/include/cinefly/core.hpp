#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace cinefly {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle to (-pi, pi].
///
/// std::remainder is exact, so wrap(a + 2*pi) == wrap(a) bitwise whenever
/// a + 2*pi is itself representable. Zero is returned as +0.
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  Scalar r = std::remainder(a, Scalar(kTwoPi));
  if (r <= -Scalar(kPi)) r += Scalar(kTwoPi);
  return r + Scalar(0);
}

inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

/// Base of every error thrown by the library. `kind()` is the stable
/// machine-readable error name (e.g. "InitializationFailed").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

}  // namespace cinefly
