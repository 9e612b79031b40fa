#include "cinefly/uav_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "cinefly/random.hpp"

namespace cinefly::sim {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error("BadParams", what); }

void validate(const PidChannel& c, const char* name) {
  if (!(c.kp >= 0.0 && c.ki >= 0.0 && c.kd >= 0.0))
    bad(std::string(name) + ": gains must be non-negative");
  if (!(c.i_max > 0.0)) bad(std::string(name) + ": i_max must be positive");
  if (!(c.alpha >= 0.0 && c.alpha < 1.0)) bad(std::string(name) + ": alpha must lie in [0, 1)");
}

VehicleState sample_truth(const std::vector<VehicleState>& states, double t0, double dt, double t) {
  const double u = (t - t0) / dt;
  const double k = std::round(u);
  if (std::abs(u - k) < 1e-6) return states[std::min(static_cast<std::size_t>(k), states.size() - 1)];
  const auto i = std::min(static_cast<std::size_t>(std::floor(u)), states.size() - 2);
  const double f = u - static_cast<double>(i);
  const VehicleState& a = states[i];
  const VehicleState& b = states[i + 1];
  return {a.position + f * (b.position - a.position), a.velocity + f * (b.velocity - a.velocity),
          wrap_angle(a.yaw + f * wrap_angle(b.yaw - a.yaw))};
}

}  // namespace

void validate(const PidGains& g) {
  validate(g.x, "x");
  validate(g.y, "y");
  validate(g.z, "z");
  validate(g.yaw, "yaw");
}

void validate(const UavModel& m) {
  if (!(m.a_max > 0.0 && m.v_max > 0.0 && m.yaw_rate_max > 0.0))
    bad("a_max, v_max and yaw_rate_max must be positive");
  if (!(m.dt_sim > 0.0)) bad("dt_sim must be positive");
  if (!m.wind.allFinite() || !(m.accel_noise_sigma >= 0.0)) bad("disturbance must be finite");
  if (!(m.abort_radius > 0.0)) bad("abort_radius must be positive");
}

PidOutput pid_step(const PidChannel& g, double error, PidState& s, double dt) {
  if (!s.primed) {
    s.prev_error = error;
    s.derivative = 0.0;
    s.primed = true;
  }
  s.integral = std::clamp(s.integral + 0.5 * (error + s.prev_error) * dt, -g.i_max, g.i_max);
  const double alpha = dt == kAlphaReferenceDt ? g.alpha : std::pow(g.alpha, dt / kAlphaReferenceDt);
  const double raw = (error - s.prev_error) / dt;
  s.derivative = alpha * s.derivative + (1.0 - alpha) * raw;
  s.prev_error = error;

  PidOutput out;
  out.p_term = g.kp * error;
  out.i_term = g.ki * s.integral;
  out.d_term = g.kd * s.derivative;
  out.u = out.p_term + out.i_term + out.d_term;
  return out;
}

PidGains tune_default_gains(const UavModel& model) {
  validate(model);
  PidGains g;
  // Output of tools/tune_gains.cpp on the default model.
  g.x = {20.0, 0.5, 8.5, 1.0, 0.9};
  g.y = g.x;
  g.z = g.x;
  g.yaw = {8.0, 1.0, 0.2, 0.5, 0.9};
  return g;
}

SimResult simulate_tracking(const traj::Trajectory& reference, const PidGains& gains,
                            const UavModel& model, const SimOptions& opt) {
  if (reference.empty()) bad("reference trajectory is empty");
  validate(gains);
  validate(model);
  if (reference.size() > 1 && model.dt_sim > reference.dt * (1.0 + 1e-12))
    bad("dt_sim must not exceed the reference sample period");

  // Wrapping is exact, so yaw + 2*pi references collapse to identical setpoints.
  traj::Trajectory ref = reference;
  for (auto& p : ref.samples) p.yaw = wrap_angle(p.yaw);

  const double t0 = ref.start_time();
  const double dt = model.dt_sim;
  const auto steps = static_cast<std::size_t>(std::llround((ref.end_time() - t0) / dt));

  VehicleState truth;
  if (opt.initial) {
    truth = *opt.initial;
    truth.yaw = wrap_angle(truth.yaw);
  } else {
    truth.position = ref.samples.front().position;
    truth.yaw = ref.samples.front().yaw;
  }

  Rng est_rng = Rng::substream(opt.seed, 1);
  Rng dist_rng = Rng::substream(opt.seed, 2);
  std::array<PidState, 4> pid{};
  const std::array<const PidChannel*, 4> channel{&gains.x, &gains.y, &gains.z, &gains.yaw};

  SimResult res;
  res.log.reserve(steps + 1);
  std::vector<VehicleState> states;
  states.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const traj::Pose sp = ref.at(t);
    if ((sp.position - truth.position).norm() > model.abort_radius)
      throw Error("Diverged", "position error exceeds " + std::to_string(model.abort_radius) +
                                  " m at t = " + std::to_string(t) + " s");

    ControlRecord rec;
    rec.t = t;
    rec.truth = truth;
    Vec3 est_p = truth.position;
    double est_yaw = truth.yaw;
    if (opt.estimator_noise_sigma > 0.0)
      for (int a = 0; a < 3; ++a) est_p[a] += opt.estimator_noise_sigma * est_rng.gaussian();
    if (opt.estimator_yaw_noise_sigma > 0.0)
      est_yaw = wrap_angle(est_yaw + opt.estimator_yaw_noise_sigma * est_rng.gaussian());

    Vec3 accel;
    for (int a = 0; a < 3; ++a) {
      rec.desired[a] = sp.position[a];
      rec.estimated[a] = est_p[a];
      rec.error[a] = sp.position[a] - est_p[a];
      const double u = pid_step(*channel[a], rec.error[a], pid[a], dt).u;
      accel[a] = std::clamp(u, -model.a_max, model.a_max);
      rec.command[a] = accel[a];
    }
    rec.desired[3] = sp.yaw;
    rec.estimated[3] = est_yaw;
    rec.error[3] = wrap_angle(sp.yaw - est_yaw);
    const double yaw_rate =
        std::clamp(pid_step(gains.yaw, rec.error[3], pid[3], dt).u, -model.yaw_rate_max,
                   model.yaw_rate_max);
    rec.command[3] = yaw_rate;
    res.log.push_back(rec);
    states.push_back(truth);
    if (k == steps) break;

    Vec3 total = accel + model.wind;
    if (model.accel_noise_sigma > 0.0)
      for (int a = 0; a < 3; ++a) total[a] += model.accel_noise_sigma * dist_rng.gaussian();
    // Exact zero-order-hold update of the double integrator.
    truth.position += truth.velocity * dt + 0.5 * total * dt * dt;
    truth.velocity += total * dt;
    for (int a = 0; a < 3; ++a)
      truth.velocity[a] = std::clamp(truth.velocity[a], -model.v_max, model.v_max);
    truth.yaw = wrap_angle(truth.yaw + yaw_rate * dt);
  }

  std::vector<traj::Pose> poses;
  poses.reserve(ref.size());
  for (const auto& p : ref.samples) {
    const VehicleState s = sample_truth(states, t0, dt, p.t);
    poses.push_back({p.t, s.position, s.yaw});
  }
  res.executed = traj::from_poses(std::move(poses), ref.dt);
  return res;
}

void write_control_log(std::ostream& out, const ControlLog& log) {
  out << "t,des_x,des_y,des_z,des_yaw,est_x,est_y,est_z,est_yaw,err_x,err_y,err_z,err_yaw,"
         "u_x,u_y,u_z,u_yaw,true_x,true_y,true_z,true_yaw,true_vx,true_vy,true_vz\n";
  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out << buf << sep;
  };
  for (const auto& r : log) {
    put(r.t, ',');
    for (double v : r.desired) put(v, ',');
    for (double v : r.estimated) put(v, ',');
    for (double v : r.error) put(v, ',');
    for (double v : r.command) put(v, ',');
    for (int a = 0; a < 3; ++a) put(r.truth.position[a], ',');
    put(r.truth.yaw, ',');
    for (int a = 0; a < 3; ++a) put(r.truth.velocity[a], a == 2 ? '\n' : ',');
  }
}

StepResponse step_response(const PidGains& gains, const UavModel& model, double step,
                           double duration) {
  const double dt_ref = model.dt_sim;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt_ref));
  std::vector<traj::Pose> poses;
  for (std::size_t i = 0; i <= n; ++i)
    poses.push_back({static_cast<double>(i) * dt_ref, Vec3(step, 0.0, 0.0), 0.0});
  SimOptions opt;
  opt.initial = VehicleState{};
  const SimResult res = simulate_tracking(traj::from_poses(std::move(poses), dt_ref), gains, model, opt);

  StepResponse out;
  double peak = 0.0;
  for (const auto& r : res.log) peak = std::max(peak, r.truth.position.x());
  out.overshoot = std::max(0.0, (peak - step) / step);
  const double band = 0.02 * std::abs(step);
  out.settling_time = 0.0;
  for (const auto& r : res.log)
    if (std::abs(r.truth.position.x() - step) > band) out.settling_time = r.t + dt_ref;
  return out;
}

}  // namespace cinefly::sim
