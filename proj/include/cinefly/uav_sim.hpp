#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cinefly/core.hpp"
#include "cinefly/trajectory.hpp"

namespace cinefly::sim {

/// Gains and conditioning for one PID channel.
struct PidChannel {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double i_max = 1.0;  // clamp on the accumulated error integral
  double alpha = 0.9;  // derivative low-pass coefficient per 100 Hz step
  bool operator==(const PidChannel&) const = default;
};

struct PidGains {
  PidChannel x, y, z, yaw;
  bool operator==(const PidGains&) const = default;
};

/// Throws Error("BadParams") on a negative gain or on i_max <= 0.
/// alpha must lie in [0, 1).
void validate(const PidGains& gains);

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  double derivative = 0.0;  // filtered
  bool primed = false;
};

struct PidOutput {
  double u = 0.0;
  double p_term = 0.0;
  double i_term = 0.0;
  double d_term = 0.0;
};

/// Rate at which PidChannel::alpha is specified.
inline constexpr double kAlphaReferenceDt = 0.01;

/// One discrete update of
///   u = Kp e + Ki clamp(int e, +-I_max) + Kd d_hat(e)
/// with trapezoidal integration and a first-order filtered backward
/// difference. The first call primes the history with e, so it contributes
/// no derivative and integrates e * dt.
PidOutput pid_step(const PidChannel& gains, double error, PidState& state, double dt);

struct UavModel {
  double a_max = 4.0;      // m/s^2 per axis
  double v_max = 5.0;      // m/s per axis
  double yaw_rate_max = kPi;  // rad/s
  double dt_sim = 0.01;
  Vec3 wind = Vec3::Zero();      // constant disturbance acceleration
  double accel_noise_sigma = 0.0;  // m/s^2
  double abort_radius = 50.0;      // m
};

void validate(const UavModel& model);

/// The repository's default gains (see tools/tune_gains.cpp).
PidGains tune_default_gains(const UavModel& model = {});

struct VehicleState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;
};

struct SimOptions {
  double estimator_noise_sigma = 0.0;      // m
  double estimator_yaw_noise_sigma = 0.0;  // rad
  std::uint64_t seed = 0;
  std::optional<VehicleState> initial;  // defaults to the first reference sample at rest
};

struct ControlRecord {
  double t = 0.0;
  std::array<double, 4> desired{};    // x, y, z, yaw
  std::array<double, 4> estimated{};
  std::array<double, 4> error{};
  std::array<double, 4> command{};    // accel x, y, z (clamped), yaw rate (clamped)
  VehicleState truth;
};

using ControlLog = std::vector<ControlRecord>;

struct SimResult {
  traj::Trajectory executed;  // on the reference time grid
  ControlLog log;
};

/// Flies `reference` with per-channel PID at 1/dt_sim Hz. Throws
/// Error("Diverged") if the position error exceeds the abort radius and
/// Error("BadParams") if dt_sim exceeds the reference dt.
SimResult simulate_tracking(const traj::Trajectory& reference, const PidGains& gains,
                            const UavModel& model, const SimOptions& options = {});

/// control_log.csv.
void write_control_log(std::ostream& out, const ControlLog& log);

struct StepResponse {
  double overshoot = 0.0;     // fraction of the step
  double settling_time = 0.0; // s, 2% band
};

/// Unit step on the x channel from rest over `duration`.
StepResponse step_response(const PidGains& gains, const UavModel& model, double step = 1.0,
                           double duration = 10.0);

}  // namespace cinefly::sim
