#pragma once

#include <optional>
#include <string>

#include <Eigen/SVD>
#include <json.hpp>

#include "cinefly/geometry.hpp"
#include "cinefly/trajectory.hpp"
#include "cinefly/vo.hpp"

namespace cinefly::eval {

/// Least-squares similarity (Umeyama) taking `source` onto `target`:
/// argmin sum_i |s R p_i + t - q_i|^2, columns are points. With
/// `with_scale` false the scale is fixed to one.
///
/// Throws Error("Degenerate") for fewer than three points, mismatched sizes
/// or all-coincident source points.
template <typename DerivedA, typename DerivedB>
Similarity<typename DerivedA::Scalar> align_umeyama(const Eigen::MatrixBase<DerivedA>& source,
                                                    const Eigen::MatrixBase<DerivedB>& target,
                                                    bool with_scale) {
  using Scalar = typename DerivedA::Scalar;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  static_assert(DerivedA::RowsAtCompileTime == 3 || DerivedA::RowsAtCompileTime == Eigen::Dynamic);

  const Eigen::Index n = source.cols();
  if (source.rows() != 3 || target.rows() != 3 || target.cols() != n)
    throw Error("Degenerate", "point sets must be 3xN with equal N");
  if (n < 3) throw Error("Degenerate", "need at least three points, got " + std::to_string(n));

  const Vector3 mu_src = source.rowwise().mean();
  const Vector3 mu_dst = target.rowwise().mean();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> src = source.colwise() - mu_src;
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> dst = target.colwise() - mu_dst;
  const Scalar var_src = src.squaredNorm() / Scalar(n);
  if (!(var_src > Scalar(0)))
    throw Error("Degenerate", "source points are all coincident");

  const Matrix3 cov = dst * src.transpose() / Scalar(n);
  Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3 sign = Vector3::Ones();
  // Reflection correction; for rank-deficient covariance (collinear or
  // planar points) the sign is chosen from det(U V^T).
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < Scalar(0)) sign.z() = Scalar(-1);

  Similarity<Scalar> out;
  out.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  out.scale = with_scale ? svd.singularValues().dot(sign) / var_src : Scalar(1);
  out.translation = mu_dst - out.scale * (out.rotation * mu_src);
  return out;
}

enum class AlignMode { kNone, kSe3, kSim3 };

std::string to_string(AlignMode m);
/// Inverse of to_string; throws Error("BadParams") on any other name.
AlignMode parse_align_mode(const std::string& s);

struct TrajectoryReport {
  double ate_rmse = 0.0;
  Vec3 per_axis_rmse = Vec3::Zero();
  double yaw_rmse = 0.0;
  double max_deviation = 0.0;
  double path_length_ratio = 1.0;
  Sim3 alignment;
  AlignMode mode = AlignMode::kNone;
  std::size_t associated = 0;  // number of time-associated samples
  bool alignment_fallback = false;  // translation-only because positions were degenerate
};

/// Interpolates `candidate` onto the reference timestamps inside the common
/// time range, then aligns and scores it. Throws Error("NoOverlap") when no
/// timestamp is shared.
TrajectoryReport compare(const traj::Trajectory& reference, const traj::Trajectory& candidate,
                         AlignMode mode);

/// Same as above for a VO estimate; yaw comes from the aligned camera axis.
TrajectoryReport compare(const traj::Trajectory& reference, const vo::EstimatedTrajectory& candidate,
                         AlignMode mode);

nlohmann::json to_json(const TrajectoryReport& report);

/// Top-down SVG overlay of up to three trajectories and a target marker.
/// Throws Error("EmptyInput") when every trajectory pointer is null or empty.
std::string render_overlay(const traj::Trajectory* reference, const traj::Trajectory* estimated,
                           const traj::Trajectory* executed, const std::optional<Vec3>& target);

}  // namespace cinefly::eval
