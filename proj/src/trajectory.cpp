#include "cinefly/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cinefly::traj {

namespace {

using grammar::DollyToward;
using grammar::Hold;
using grammar::Orbit;
using grammar::PanOrbit;
using grammar::Reveal;

struct PathPoint {
  Vec3 position;
  double yaw;
};

double look_at_yaw(const Vec3& from, const Vec3& target, double fallback) {
  const double dx = target.x() - from.x();
  const double dy = target.y() - from.y();
  if (std::hypot(dx, dy) < 1e-12) return fallback;
  return std::atan2(dy, dx);
}

double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

// Longest dolly braking phase.
constexpr double kDollyBrakeTime = 1.0;

// One plan segment as an analytic path of local time. Valid for local times
// slightly outside [0, duration] so that blends can extrapolate.
class SegmentPath {
 public:
  SegmentPath(const grammar::Segment& seg, const Vec3& target, const Vec3& entry,
              double entry_yaw, std::vector<std::string>& warnings)
      : prim_(seg.primitive),
        duration_(seg.duration),
        target_(target),
        entry_(entry),
        entry_yaw_(entry_yaw) {
    const Vec2 rel(entry.x() - target.x(), entry.y() - target.y());
    if (std::holds_alternative<Orbit>(prim_) || std::holds_alternative<PanOrbit>(prim_)) {
      if (rel.norm() < 1e-9) {
        phase_ = 0.0;
        warnings.push_back("orbit entry is above the target; bearing undefined, using angle 0");
      } else {
        phase_ = std::atan2(rel.y(), rel.x());
      }
    } else if (const auto* d = std::get_if<DollyToward>(&prim_)) {
      const Vec3 to_target = target - entry;
      const double dist = to_target.norm();
      travel_ = dist - d->stop_distance;
      if (travel_ < 0.0)
        throw Error("InfeasiblePlan", "dolly starts " + std::to_string(dist) +
                                          " m from target, inside stop distance " +
                                          std::to_string(d->stop_distance) + " m");
      heading_ = dist > 0.0 ? Vec3(to_target / dist) : Vec3::Zero();
      brake_ = std::min(0.5 * travel_, 0.5 * d->speed * kDollyBrakeTime);
    } else if (std::holds_alternative<Reveal>(prim_)) {
      if (rel.norm() < 1e-12)
        heading_ = Vec3(-std::cos(entry_yaw), -std::sin(entry_yaw), 0.0);
      else
        heading_ = Vec3(rel.x(), rel.y(), 0.0) / rel.norm();
    }
  }

  PathPoint eval(double tau) const {
    return std::visit([&](const auto& p) { return eval(p, tau); }, prim_);
  }

 private:
  Vec3 on_circle(double radius, double angle, double z) const {
    return {target_.x() + radius * std::cos(angle), target_.y() + radius * std::sin(angle), z};
  }

  PathPoint eval(const Orbit& o, double tau) const {
    const double angle = phase_ + grammar::sign(o.direction) * o.angular_speed * tau;
    const Vec3 p = on_circle(o.radius, angle, entry_.z() + o.climb_rate * tau);
    return {p, look_at_yaw(p, target_, entry_yaw_)};
  }

  PathPoint eval(const PanOrbit& o, double tau) const {
    const double angle = phase_ + grammar::sign(o.direction) * o.angular_speed * tau;
    const Vec3 p = on_circle(o.radius, angle, entry_.z());
    const double yaw = look_at_yaw(p, target_, entry_yaw_) +
                       o.pan_offset * smoothstep(tau / duration_);
    return {p, wrap_angle(yaw)};
  }

  // Cruise at d.speed, then brake at constant deceleration so the arrival
  // at the stop distance has no velocity jump.
  PathPoint eval(const DollyToward& d, double tau) const {
    const double cruise = travel_ - brake_;
    double along = d.speed * tau;
    if (along > cruise) {
      const double brake_time = 2.0 * brake_ / d.speed;
      const double tb = tau - cruise / d.speed;
      along = tb >= brake_time ? travel_
                               : cruise + d.speed * tb - 0.5 * (d.speed / brake_time) * tb * tb;
    }
    const Vec3 p = entry_ + heading_ * along;
    return {p, look_at_yaw(p, target_, entry_yaw_)};
  }

  PathPoint eval(const Reveal& r, double tau) const {
    Vec3 p = entry_ + heading_ * (r.retreat_speed * tau);
    p.z() += r.climb_rate * tau;
    return {p, look_at_yaw(p, target_, entry_yaw_)};
  }

  PathPoint eval(const Hold&, double) const { return {entry_, entry_yaw_}; }

  grammar::Primitive prim_;
  double duration_;
  Vec3 target_;
  Vec3 entry_;
  double entry_yaw_;
  double phase_ = 0.0;
  double travel_ = 0.0;
  double brake_ = 0.0;
  Vec3 heading_ = Vec3::Zero();
};

void check_dt(double dt, double lo, double hi, const char* name) {
  if (!(dt >= lo && dt <= hi))
    throw Error("BadParams", std::string(name) + " = " + std::to_string(dt) +
                                 " outside [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + "]");
}

Pose lerp(const Pose& a, const Pose& b, double f, double t) {
  if (f == 0.0) return {t, a.position, a.yaw};
  if (f == 1.0) return {t, b.position, b.yaw};
  return {t, a.position + f * (b.position - a.position),
          wrap_angle(a.yaw + f * wrap_angle(b.yaw - a.yaw))};
}

[[noreturn]] void format_error(std::size_t line, const std::string& what) {
  throw Error("FormatError", "line " + std::to_string(line) + ": " + what);
}

}  // namespace

Pose Trajectory::at(double t) const {
  if (samples.empty()) throw Error("TooShort", "empty trajectory");
  if (t <= samples.front().t) return {t, samples.front().position, samples.front().yaw};
  if (t >= samples.back().t) return {t, samples.back().position, samples.back().yaw};
  const double u = (t - samples.front().t) / dt;
  auto i = static_cast<std::size_t>(std::floor(u));
  i = std::min(i, samples.size() - 2);
  // Snap sample times; CSV-loaded grids are only uniform to 9 digits.
  double f = (t - samples[i].t) / (samples[i + 1].t - samples[i].t);
  if (f < 0.0 && i > 0) {
    --i;
    f = (t - samples[i].t) / (samples[i + 1].t - samples[i].t);
  } else if (f > 1.0 && i + 2 < samples.size()) {
    ++i;
    f = (t - samples[i].t) / (samples[i + 1].t - samples[i].t);
  }
  f = std::clamp(f, 0.0, 1.0);
  if (std::abs(f) < 1e-12) f = 0.0;
  if (std::abs(1.0 - f) < 1e-12) f = 1.0;
  return lerp(samples[i], samples[i + 1], f, t);
}

std::vector<double> central_speeds(const std::vector<Pose>& s, double dt) {
  const std::size_t n = s.size();
  std::vector<double> v(n, 0.0);
  if (n < 2) return v;
  v.front() = (s[1].position - s[0].position).norm() / dt;
  v.back() = (s[n - 1].position - s[n - 2].position).norm() / dt;
  for (std::size_t i = 1; i + 1 < n; ++i)
    v[i] = (s[i + 1].position - s[i - 1].position).norm() / (2.0 * dt);
  return v;
}

Trajectory from_poses(std::vector<Pose> poses, double dt) {
  Trajectory out;
  out.dt = dt;
  out.speeds = central_speeds(poses, dt);
  out.samples = std::move(poses);
  return out;
}

SynthesisResult synthesize(const grammar::ShotPlan& plan, const Pose& start, double dt) {
  check_dt(dt, 0.01, 0.5, "dt");
  if (!start.position.allFinite() || !std::isfinite(start.yaw) || !std::isfinite(start.t))
    throw Error("BadParams", "start pose must be finite");
  grammar::validate(plan);

  SynthesisResult result;
  std::vector<SegmentPath> paths;
  std::vector<double> starts;
  Vec3 entry = start.position;
  double entry_yaw = wrap_angle(start.yaw);
  double clock = 0.0;
  for (const auto& seg : plan.segments) {
    paths.emplace_back(seg, plan.target, entry, entry_yaw, result.warnings);
    starts.push_back(clock);
    const PathPoint end = paths.back().eval(seg.duration);
    entry = end.position;
    entry_yaw = end.yaw;
    clock += seg.duration;
  }

  const double total = clock;
  const double half = 0.5 * plan.blend_duration;
  const auto steps = static_cast<std::size_t>(std::ceil(total / dt - 1e-9));
  std::vector<Pose> poses;
  poses.reserve(steps + 1);
  std::size_t k = 0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double s = static_cast<double>(i) * dt;
    while (k + 1 < paths.size() && s >= starts[k + 1]) ++k;
    PathPoint p = paths[k].eval(s - starts[k]);
    if (half > 0.0) {
      // Blend window centred on the nearest interior join.
      std::size_t join = 0;
      if (k > 0 && s - starts[k] < half) join = k;
      else if (k + 1 < paths.size() && starts[k + 1] - s < half) join = k + 1;
      if (join > 0) {
        const double u = (s - (starts[join] - half)) / plan.blend_duration;
        const double w = 0.5 * (1.0 - std::cos(kPi * u));
        const PathPoint a = paths[join - 1].eval(s - starts[join - 1]);
        const PathPoint b = paths[join].eval(s - starts[join]);
        p.position = a.position + w * (b.position - a.position);
        p.yaw = wrap_angle(a.yaw + w * wrap_angle(b.yaw - a.yaw));
      }
    }
    poses.push_back({start.t + s, p.position, wrap_angle(p.yaw)});
  }
  result.trajectory = from_poses(std::move(poses), dt);
  return result;
}

std::vector<StateActionPair> state_action_pairs(const Trajectory& traj) {
  if (traj.size() < 2) throw Error("TooShort", "need at least two samples");
  std::vector<StateActionPair> out;
  out.reserve(traj.size() - 1);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const Pose& a = traj.samples[i];
    const Pose& b = traj.samples[i + 1];
    const double h = b.t - a.t;
    out.push_back({{a, traj.speeds[i]},
                   {(b.position - a.position) / h, wrap_angle(b.yaw - a.yaw) / h}});
  }
  return out;
}

Trajectory resample(const Trajectory& traj, double new_dt) {
  if (traj.size() < 2) throw Error("TooShort", "need at least two samples");
  check_dt(new_dt, 0.001, 0.5, "new_dt");
  if (new_dt == traj.dt) return traj;
  const double t0 = traj.start_time();
  const double span = traj.end_time() - t0;
  auto steps = static_cast<std::size_t>(std::floor(span / new_dt + 1e-9));
  std::vector<Pose> poses;
  poses.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    poses.push_back(traj.at(t0 + static_cast<double>(i) * new_dt));
  // The final sample keeps the source endpoint bit-for-bit when the grid lands on it.
  if (std::abs(poses.back().t - traj.end_time()) <= 1e-9 * std::max(1.0, std::abs(span)))
    poses.back() = traj.samples.back();
  return from_poses(std::move(poses), new_dt);
}

void write_csv(std::ostream& out, const Trajectory& traj, const std::vector<std::string>& status) {
  out << (status.empty() ? "t,x,y,z,yaw,v\n" : "t,x,y,z,yaw,v,status\n");
  char buf[256];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Pose& p = traj.samples[i];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", p.t, p.position.x(),
                  p.position.y(), p.position.z(), p.yaw, traj.speeds[i]);
    out << buf;
    if (!status.empty()) out << ',' << status.at(i);
    out << '\n';
  }
}

std::string to_csv(const Trajectory& traj, const std::vector<std::string>& status) {
  std::ostringstream out;
  write_csv(out, traj, status);
  return out.str();
}

Trajectory read_csv(std::istream& in, std::vector<std::string>* status) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) format_error(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_status = false;
  if (line == "t,x,y,z,yaw,v,status") with_status = true;
  else if (line != "t,x,y,z,yaw,v") format_error(1, "expected header 't,x,y,z,yaw,v'");

  std::vector<Pose> poses;
  std::vector<double> speeds;
  if (status) status->clear();
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    const std::size_t want = with_status ? 7 : 6;
    if (fields.size() != want)
      format_error(lineno, "expected " + std::to_string(want) + " fields, got " +
                               std::to_string(fields.size()));
    double v[6];
    for (int j = 0; j < 6; ++j) {
      std::size_t used = 0;
      try {
        v[j] = std::stod(fields[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != fields[j].size() || !std::isfinite(v[j]))
        format_error(lineno, "field " + std::to_string(j + 1) + " is not a finite number");
    }
    if (!poses.empty() && !(v[0] > poses.back().t))
      format_error(lineno, "timestamps must be strictly increasing");
    poses.push_back({v[0], Vec3(v[1], v[2], v[3]), v[4]});
    speeds.push_back(v[5]);
    if (status && with_status) status->push_back(fields[6]);
  }
  if (poses.empty()) format_error(lineno, "no samples");
  Trajectory traj;
  traj.dt = poses.size() > 1 ? (poses.back().t - poses.front().t) /
                                   static_cast<double>(poses.size() - 1)
                             : kDefaultDt;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const double step = poses[i].t - poses[i - 1].t;
    if (std::abs(step - traj.dt) > 1e-6 * std::max(1.0, traj.dt) + 1e-8 * std::abs(poses[i].t))
      format_error(i + 2, "non-uniform sample spacing");
  }
  traj.samples = std::move(poses);
  traj.speeds = std::move(speeds);
  return traj;
}

Trajectory read_csv_file(const std::string& path, std::vector<std::string>* status) {
  std::ifstream in(path);
  if (!in) throw Error("FormatError", "cannot open " + path);
  return read_csv(in, status);
}

}  // namespace cinefly::traj
