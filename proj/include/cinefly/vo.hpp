#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinefly/geometry.hpp"
#include "cinefly/scene_render.hpp"
#include "cinefly/trajectory.hpp"

// Minimal monocular visual odometry over identity-labelled feature tracks.
// A robust eight-point bootstrap seeds the map; later frames are tracked by
// PnP against landmarks triangulated as they gain enough parallax.
//
// Gauge: the first camera is the world frame (camera axes: x right, y down,
// z forward) and the bootstrap baseline has unit length.

namespace cinefly::vo {

/// Camera pose as world-from-camera rotation plus camera centre.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  /// World point -> camera frame.
  Vec3 to_camera(const Vec3& world) const { return rotation.transpose() * (world - position); }
  bool operator==(const CameraPose&) const = default;
};

enum class TrackStatus { kInitialized, kTracked, kLost };

std::string to_string(TrackStatus s);

struct EstimatedPose {
  double t = 0.0;
  CameraPose pose;
  TrackStatus status = TrackStatus::kTracked;
  bool operator==(const EstimatedPose&) const = default;
};

struct EstimatedTrajectory {
  std::vector<EstimatedPose> poses;
  std::size_t init_frame = 0;  // second frame of the bootstrap pair
  bool operator==(const EstimatedTrajectory&) const = default;
};

struct MapPoint {
  int id = 0;
  Vec3 position = Vec3::Zero();
  int observations = 0;
  bool operator==(const MapPoint&) const = default;
};

using MapPoints = std::map<int, MapPoint>;

struct VoOptions {
  double parallax_threshold_deg = 1.0;
  // kAuto uses RANSAC when the sequence carries pixel noise.
  enum class Solver { kAuto, kDirect, kRansac } solver = Solver::kAuto;
  int ransac_iterations = 200;
  double ransac_threshold_px = 1.0;
  std::uint64_t ransac_seed = 0;
  int max_gn_iterations = 50;
  double gn_step_tolerance = 1e-10;
  double outlier_reject_px = 5.0;  // PnP observations beyond this are dropped once
  double max_rms_px = 3.0;         // TrackingLost above this residual
  // Minimum ray angle between the first and latest sighting before a new
  // landmark is triangulated; 0 triangulates from its first two frames.
  double triangulation_parallax_deg = 2.0;
  // Re-triangulate mapped landmarks from all their sightings (poses fixed).
  bool refine_points = true;
  // Polish linear triangulations by minimizing reprojection error.
  bool geometric_triangulation = true;
  // A landmark unseen for more than this many frames is dropped from the map
  // when it reappears and triangulated afresh.
  std::size_t stale_after_frames = 10;
};

/// Normalized image coordinate pair (z = 1 plane) for one landmark.
struct Correspondence {
  int id = 0;
  Vec2 a;
  Vec2 b;
};

/// Shared landmarks between two frames, in normalized coordinates, ordered by id.
std::vector<Correspondence> match(const render::Frame& a, const render::Frame& b,
                                  const render::CameraModel& camera);

/// Normalized eight-point estimate (Hartley conditioning, rank-2 projection)
/// of E with x_b^T E x_a = 0. Needs at least eight correspondences.
Mat3 essential_eight_point(const std::vector<Correspondence>& corr);

/// The four (R, t) candidates with x_b = R x_a + t.
struct Motion {
  Mat3 rotation;
  Vec3 translation;
};
std::vector<Motion> decompose_essential(const Mat3& e);

/// Linear triangulation from two camera-from-world projections [R|t]
/// applied to normalized coordinates.
Vec3 triangulate_dlt(const Mat3& r_a, const Vec3& t_a, const Vec2& x_a, const Mat3& r_b,
                     const Vec3& t_b, const Vec2& x_b);

/// Median residual angle (deg) after the best pure-rotation fit between the
/// two bearing sets. Zero for identical frames and for pure rotation.
double median_parallax_deg(const std::vector<Correspondence>& corr);

struct TwoViewResult {
  Mat3 rotation;      // camera-b orientation in camera-a frame
  Vec3 translation;   // camera-b centre in camera-a frame, unit length
  Mat3 essential;
  MapPoints points;   // in camera-a frame
  std::vector<int> inliers;
  double parallax_deg = 0.0;
};

/// Throws InsufficientCorrespondences or InsufficientParallax for weak pairs
/// and CheiralityAmbiguous when no decomposition puts most points in front.
/// A positive `noise_sigma` (px) enables robust estimation and refinement.
TwoViewResult initialize_two_view(const render::Frame& a, const render::Frame& b,
                                  const render::CameraModel& camera, double noise_sigma,
                                  const VoOptions& options = {});

struct TrackResult {
  CameraPose pose;
  TrackStatus status = TrackStatus::kTracked;
  int used_points = 0;
  double rms_px = 0.0;
  std::vector<double> costs;  // cost after every accepted Gauss-Newton iterate
};

/// PnP against the map. Never throws for tracking failure: a lost frame
/// returns prev_pose with status kLost.
TrackResult track_frame(const render::Frame& frame, const MapPoints& map,
                        const render::CameraModel& camera, const CameraPose& prev_pose,
                        const VoOptions& options = {});

/// Direct linear transform PnP on normalized coordinates; nullopt when the
/// system is degenerate (fewer than six points or rank-deficient).
std::optional<CameraPose> pnp_dlt(const std::vector<Vec3>& world, const std::vector<Vec2>& normalized);

struct VoResult {
  EstimatedTrajectory trajectory;
  MapPoints map;
};

/// Full pass over a sequence. Throws Error("InitializationFailed") when no
/// frame reaches the parallax threshold against frame 0.
VoResult estimate_trajectory(const render::ObservationSequence& obs, const VoOptions& options = {});

/// Fixed rotation taking the gauge (camera-convention) frame to a z-up frame:
/// forward -> +x, left -> +y, up -> +z.
Mat3 gauge_to_z_up();

enum class StateFrame { kGauge, kAligned };

struct ExtractedStates {
  StateFrame frame = StateFrame::kGauge;
  traj::Trajectory trajectory;
  std::vector<traj::StateActionPair> pairs;
};

/// Estimated poses as a z-up Trajectory. With `alignment`, positions and
/// orientations are mapped into the aligned frame; otherwise the gauge frame
/// is re-expressed z-up via gauge_to_z_up().
traj::Trajectory to_trajectory(const EstimatedTrajectory& est, double dt,
                               const std::optional<Sim3>& alignment = std::nullopt);

/// State-action pairs of the estimate. Throws Error("TooShort") with fewer
/// than two tracked poses.
ExtractedStates to_states(const EstimatedTrajectory& est, double dt,
                          const std::optional<Sim3>& alignment = std::nullopt);

std::vector<std::string> status_column(const EstimatedTrajectory& est);

nlohmann::json to_json(const MapPoints& map);

}  // namespace cinefly::vo
