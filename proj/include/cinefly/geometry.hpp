#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "cinefly/core.hpp"

namespace cinefly {

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return m;
}

/// Rodrigues exponential of a rotation vector.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_exp(const Eigen::Matrix<Scalar, 3, 1>& w) {
  const Scalar theta = w.norm();
  if (theta < Scalar(1e-12))
    return Eigen::Matrix<Scalar, 3, 3>::Identity() + skew(w);
  return Eigen::AngleAxis<Scalar>(theta, w / theta).toRotationMatrix();
}

/// Rotation angle of R in [0, pi].
template <typename Derived>
typename Derived::Scalar rotation_angle(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  const Scalar c = std::clamp((r.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  // acos loses precision near 0; use the skew part there.
  const Eigen::Matrix<Scalar, 3, 1> s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(s.norm() / Scalar(2), c);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rot_z(Scalar angle) {
  return Eigen::AngleAxis<Scalar>(angle, Eigen::Matrix<Scalar, 3, 1>::UnitZ()).toRotationMatrix();
}

/// x -> scale * rotation * x + translation.
template <typename Scalar>
struct Similarity {
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar scale = Scalar(1);
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static Similarity identity() { return {}; }

  Vector3 operator()(const Vector3& x) const { return scale * (rotation * x) + translation; }

  template <typename Derived>
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> apply(const Eigen::MatrixBase<Derived>& pts) const {
    return ((scale * rotation) * pts).colwise() + translation;
  }

  /// (*this * other)(x) == (*this)(other(x)).
  Similarity operator*(const Similarity& o) const {
    return {scale * o.scale, rotation * o.rotation, scale * (rotation * o.translation) + translation};
  }

  Similarity inverse() const {
    const Matrix3 rt = rotation.transpose();
    return {Scalar(1) / scale, rt, -(rt * translation) / scale};
  }
};

using Sim3 = Similarity<double>;

}  // namespace cinefly
