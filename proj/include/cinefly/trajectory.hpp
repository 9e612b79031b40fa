#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cinefly/core.hpp"
#include "cinefly/shot_grammar.hpp"

namespace cinefly::traj {

struct Pose {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;  // rad, world heading, zero along +x, CCW positive

  bool operator==(const Pose& o) const {
    return t == o.t && position == o.position && yaw == o.yaw;
  }
};

/// Uniformly sampled pose sequence with per-sample speeds.
struct Trajectory {
  double dt = 0.05;
  std::vector<Pose> samples;
  std::vector<double> speeds;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double start_time() const { return samples.front().t; }
  double end_time() const { return samples.back().t; }

  /// Interpolated pose at time t (clamped to the sampled range). Position is
  /// linear, yaw follows the shortest arc.
  Pose at(double t) const;

  bool operator==(const Trajectory&) const = default;
};

struct State {
  Pose pose;
  double speed = 0.0;
};

struct Action {
  Vec3 velocity = Vec3::Zero();  // m/s
  double yaw_rate = 0.0;         // rad/s
};

struct StateActionPair {
  State state;
  Action action;
};

/// Output of synthesize plus any non-fatal notes (e.g. undefined orbit bearing).
struct SynthesisResult {
  Trajectory trajectory;
  std::vector<std::string> warnings;
};

inline constexpr double kDefaultDt = 0.05;

/// Compiles a plan into a reference trajectory starting at `start`.
/// Throws Error("InfeasiblePlan") when a dolly starts inside its stop
/// distance and Error("BadParams") for dt outside [0.01, 0.5].
SynthesisResult synthesize(const grammar::ShotPlan& plan, const Pose& start,
                           double dt = kDefaultDt);

/// Central differences in the interior, one-sided at the ends.
std::vector<double> central_speeds(const std::vector<Pose>& samples, double dt);

/// Builds a Trajectory from uniformly spaced poses and fills in speeds.
Trajectory from_poses(std::vector<Pose> poses, double dt);

/// Forward-difference actions linking consecutive states. Throws
/// Error("TooShort") for fewer than two samples.
std::vector<StateActionPair> state_action_pairs(const Trajectory& traj);

/// Re-grids onto new_dt. Throws Error("TooShort") for fewer than two samples
/// and Error("BadParams") for new_dt outside [0.001, 0.5].
Trajectory resample(const Trajectory& traj, double new_dt);

/// traj.csv: header `t,x,y,z,yaw,v`, 9 significant digits, LF endings.
/// `status`, when non-empty, adds a trailing status column.
void write_csv(std::ostream& out, const Trajectory& traj,
               const std::vector<std::string>& status = {});
std::string to_csv(const Trajectory& traj, const std::vector<std::string>& status = {});

/// Parses traj.csv (with or without a status column). Throws
/// Error("FormatError") naming the offending line.
Trajectory read_csv(std::istream& in, std::vector<std::string>* status = nullptr);
Trajectory read_csv_file(const std::string& path, std::vector<std::string>* status = nullptr);

}  // namespace cinefly::traj
