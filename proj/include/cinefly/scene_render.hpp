#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <json.hpp>

#include "cinefly/core.hpp"
#include "cinefly/trajectory.hpp"

namespace cinefly::render {

struct Landmark {
  int id = 0;
  Vec3 position = Vec3::Zero();
  bool operator==(const Landmark&) const = default;
};

/// Landmarks are scattered uniformly by area in an annulus around `center`.
struct SceneParams {
  Vec3 center = Vec3(0.0, 0.0, 1.0);
  double inner_radius = 1.0;
  double outer_radius = 8.0;
  double z_min = -1.0;
  double z_max = 3.0;
  int count = 300;
  bool operator==(const SceneParams&) const = default;
};

struct Scene {
  std::vector<Landmark> landmarks;
  SceneParams params;
  std::uint64_t seed = 0;
  bool operator==(const Scene&) const = default;
};

inline constexpr int kMinLandmarks = 8;

/// Pinhole intrinsics plus a fixed gimbal tilt (positive pitches down).
template <typename Scalar>
struct Camera {
  Scalar fx = 500, fy = 500;
  Scalar cx = 320, cy = 240;
  int width = 640, height = 480;
  Scalar mount_pitch = 0;

  bool inside(Scalar u, Scalar v) const {
    return u >= Scalar(0) && v >= Scalar(0) && u < Scalar(width) && v < Scalar(height);
  }
  Eigen::Matrix<Scalar, 2, 1> project(const Eigen::Matrix<Scalar, 3, 1>& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }
  /// Pixel to normalized image coordinates (z = 1 plane).
  Eigen::Matrix<Scalar, 2, 1> normalize(const Eigen::Matrix<Scalar, 2, 1>& uv) const {
    return {(uv.x() - cx) / fx, (uv.y() - cy) / fy};
  }
  bool operator==(const Camera&) const = default;
};

using CameraModel = Camera<double>;

/// Throws Error("BadParams") on non-positive focal lengths or a principal
/// point outside the image.
void validate(const CameraModel& cam);

inline constexpr double kMinDepth = 0.1;

/// World-from-camera rotation for a vehicle at `yaw` with the camera pitched
/// down by `pitch`. Camera axes: x right, y down, z forward; world is z-up.
Mat3 camera_rotation(double yaw, double pitch);

struct Observation {
  int id = 0;
  double u = 0.0;
  double v = 0.0;
  bool operator==(const Observation&) const = default;
};

struct Frame {
  double t = 0.0;
  std::vector<Observation> observations;
  bool operator==(const Frame&) const = default;
};

struct ObservationSequence {
  std::vector<Frame> frames;
  CameraModel camera;
  double noise_sigma = 0.0;
  std::vector<std::size_t> degenerate_frames;  // frames with < 8 observations
  bool operator==(const ObservationSequence&) const = default;
};

/// Deterministic for a fixed seed. Throws Error("BadParams") on count < 8 or
/// inconsistent bounds.
Scene generate_scene(const SceneParams& params, std::uint64_t seed);

struct RenderOptions {
  double noise_sigma = 0.0;    // px
  std::uint64_t seed = 0;
  double outlier_rate = 0.0;   // probability an observation is replaced by a random pixel
};

/// Projects every landmark through the camera at each trajectory sample.
ObservationSequence render(const Scene& scene, const traj::Trajectory& traj,
                           const CameraModel& camera, const RenderOptions& options);

/// Noise-free projection of a world point; returns false if not visible.
bool project_world(const CameraModel& cam, const Mat3& r_wc, const Vec3& center,
                   const Vec3& world, Vec2& uv);

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& doc);

/// observations.jsonl: one {"t":..., "obs":[[id,u,v],...]} object per line.
void write_jsonl(std::ostream& out, const ObservationSequence& seq);
/// Camera and sigma are not part of the file; the caller supplies them.
ObservationSequence read_jsonl(std::istream& in, const CameraModel& camera,
                               double noise_sigma);

}  // namespace cinefly::render
