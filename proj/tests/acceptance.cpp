// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cinefly/cli.hpp"
#include "cinefly/eval_metrics.hpp"
#include "cinefly/scene_render.hpp"
#include "cinefly/uav_sim.hpp"
#include "cinefly/vo.hpp"
#include "support.hpp"

using namespace cinefly;
namespace fs = std::filesystem;

namespace {

constexpr double kRadius = 3.0;
constexpr double kOmega = kPi / 6.0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double orbit_ate(double sigma, double* runtime) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ref = testsupport::default_orbit();
  const auto scene = render::generate_scene({}, 7);
  const auto obs = render::render(scene, ref, render::CameraModel{}, {sigma, 11, 0.0});
  const auto est = vo::estimate_trajectory(obs);
  const double ate = eval::compare(ref, est.trajectory, eval::AlignMode::kSim3).ate_rmse;
  if (runtime) *runtime = seconds_since(t0);
  return ate;
}

void criterion1(Check& c) {
  double runtime = 0;
  const double ate = orbit_ate(0.0, &runtime);
  c.detail << "ATE " << ate << " m, runtime " << runtime << " s";
  c.require(ate < 1e-6 * kRadius, "ATE < 1e-6 * radius");
  c.require(runtime < 5.0, "runtime < 5 s");
}

void criterion2(Check& c) {
  const double ate = orbit_ate(0.5, nullptr);
  c.detail << "ATE " << ate << " m (" << 100 * ate / kRadius << "% of radius)";
  c.require(ate < 0.02 * kRadius, "ATE < 2% of radius");
}

// State-action consistency: integrating each action over one step lands on
// the next state within C dt^2, C = r w^2 / 2 being the orbit's second-order
// term. Checked for the emitted forward-difference actions and for the
// analytic tangent velocity.
void criterion3(Check& c) {
  const double bound_c = kRadius * kOmega * kOmega / 2.0;
  double worst_ratio = 0.0, worst_fd = 0.0;
  for (double dt : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const auto tr = testsupport::default_orbit(dt);
    const auto pairs = traj::state_action_pairs(tr);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Vec3 p = pairs[i].state.pose.position;
      const Vec3 next = tr.samples[i + 1].position;
      worst_fd = std::max(worst_fd, (p + pairs[i].action.velocity * dt - next).norm() / (dt * dt));
      const double phi = std::atan2(p.y(), p.x());
      const Vec3 v_analytic = kRadius * kOmega * Vec3(-std::sin(phi), std::cos(phi), 0.0);
      worst_ratio = std::max(worst_ratio, (p + v_analytic * dt - next).norm() / (dt * dt));
    }
  }
  c.detail << "C = " << bound_c << ", worst analytic " << worst_ratio << ", worst forward-difference "
           << worst_fd;
  c.require(worst_ratio <= bound_c * (1 + 1e-6), "analytic-velocity step error <= C dt^2");
  c.require(worst_fd <= bound_c, "action step error <= C dt^2");
}

void criterion4(Check& c) {
  using namespace sim;
  {
    PidChannel g{3, 2, 1, 1, 0.9};
    PidState s;
    bool zero = true;
    for (int i = 0; i < 100; ++i) zero &= pid_step(g, 0.0, s, 0.01).u == 0.0;
    c.require(zero, "zero error gives zero output");
  }
  {
    PidChannel g{1.7, 0, 0, 1, 0.9};
    PidState s;
    Rng rng(1);
    bool exact = true;
    for (int i = 0; i < 1000; ++i) {
      const double e = rng.uniform(-10, 10);
      exact &= pid_step(g, e, s, 0.01).u == 1.7 * e;
    }
    c.require(exact, "P-only exact");
  }
  for (double i_max : {10.0, 0.5}) {
    PidChannel g{0, 1, 0, i_max, 0.9};
    PidState s;
    double worst = 0;
    for (int n = 1; n <= 100; ++n)
      worst = std::max(worst, std::abs(pid_step(g, 1.0, s, 0.01).u - std::min(n * 0.01, i_max)));
    c.require(worst < 1e-12, "trapezoidal integral closed form");
  }
  {
    PidChannel g{0, 1, 0, 0.3, 0.9};
    PidState s;
    for (int i = 0; i < 10000; ++i) pid_step(g, 100.0, s, 0.01);
    c.require(s.integral == 0.3, "integral clamped at I_max");
    // No stored excess: two reversed steps move it off the clamp.
    pid_step(g, -1.0, s, 0.01);
    pid_step(g, -1.0, s, 0.01);
    c.require(s.integral < 0.3, "unwinds after the error reverses");
  }
  {
    auto ref = testsupport::default_orbit();
    for (auto& p : ref.samples) p.yaw = std::ldexp(std::round(std::ldexp(p.yaw, 30)), -30);
    auto shifted = ref;
    for (auto& p : shifted.samples) p.yaw += kTwoPi;
    const auto a = simulate_tracking(ref, tune_default_gains(), {});
    const auto b = simulate_tracking(shifted, tune_default_gains(), {});
    c.require(a.log.size() == b.log.size() &&
                  std::memcmp(a.log.data(), b.log.data(), a.log.size() * sizeof(ControlRecord)) == 0,
              "yaw + 2pi bitwise invariant");
  }
  {
    UavModel m;
    m.a_max = 0.8;
    m.yaw_rate_max = 0.4;
    SimOptions opt;
    opt.initial = VehicleState{Vec3(-5, 6, -1), Vec3::Zero(), 2.0};
    const auto res = simulate_tracking(testsupport::default_orbit(), tune_default_gains(), m, opt);
    bool within = true;
    for (const auto& r : res.log) {
      for (int a = 0; a < 3; ++a) within &= std::abs(r.command[a]) <= m.a_max;
      within &= std::abs(r.command[3]) <= m.yaw_rate_max;
    }
    c.require(within, "saturation never exceeded");
  }
  c.detail << "zero, P-only, trapezoid, anti-windup, yaw 2pi, saturation";
}

void criterion5(Check& c) {
  const auto gains = sim::tune_default_gains();
  const auto ref = testsupport::default_orbit();
  double rmse = -1;
  try {
    const auto res = sim::simulate_tracking(ref, gains, {});
    rmse = eval::compare(ref, res.executed, eval::AlignMode::kNone).ate_rmse;
  } catch (const Error& e) {
    c.require(false, e.what());
  }
  const auto step = sim::step_response(gains, {});
  c.detail << "orbit RMSE " << rmse << " m, overshoot " << 100 * step.overshoot << "%, settling "
           << step.settling_time << " s";
  c.require(rmse >= 0 && rmse < 0.05 * kRadius, "orbit RMSE < 5% of radius");
  c.require(step.overshoot <= 0.2, "overshoot <= 20%");
  c.require(step.settling_time <= 3.0, "settling <= 3 s");
}

void criterion6(Check& c) {
  Rng rng(2024);
  Eigen::Matrix3Xd p(3, 25);
  for (int i = 0; i < p.cols(); ++i) p.col(i) = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  const auto id = eval::align_umeyama(p, p, true);
  const double id_err = std::max({std::abs(id.scale - 1.0), (id.rotation - Mat3::Identity()).norm(),
                                  id.translation.norm()});
  c.require(id_err < 1e-12, "identity to 1e-12");

  double worst = 0;
  const int instances = 200;
  for (int k = 0; k < instances; ++k) {
    const int n = 3 + static_cast<int>(rng.uniform() * 50);
    Eigen::Matrix3Xd src(3, n);
    for (int i = 0; i < n; ++i) src.col(i) = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    Sim3 truth;
    truth.scale = std::exp(rng.uniform(-2, 2));
    const Vec3 axis = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized();
    truth.rotation = so3_exp(Vec3(axis * rng.uniform(0, 3.1)));
    truth.translation = Vec3(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
    const auto s = eval::align_umeyama(src, truth.apply(src), true);
    worst = std::max({worst, std::abs(s.scale - truth.scale) / truth.scale,
                      (s.rotation - truth.rotation).norm(),
                      (s.translation - truth.translation).norm()});
  }
  c.detail << "identity error " << id_err << ", worst recovery error " << worst << " over " << instances
           << " instances";
  c.require(worst < 1e-9, "recovery to 1e-9");
}

void criterion7(Check& c) {
  const auto ref = testsupport::default_orbit();
  const Vec3 target(0, 0, 1);
  double standoff = 0, yaw = 0;
  for (const auto& s : ref.samples) {
    const Vec3 d = target - s.position;
    standoff = std::max(standoff, std::abs(d.head<2>().norm() - kRadius));
    yaw = std::max(yaw, std::abs(wrap_angle(std::atan2(d.y(), d.x()) - s.yaw)));
  }
  const auto obs = render::render(render::generate_scene({}, 7), ref, render::CameraModel{}, {});
  const auto two = vo::initialize_two_view(obs.frames[0], obs.frames[20], obs.camera, 0.0);
  double epipolar = 0;
  for (const auto& m : vo::match(obs.frames[0], obs.frames[20], obs.camera))
    epipolar = std::max(epipolar, std::abs(m.b.homogeneous().dot(two.essential * m.a.homogeneous())));
  bool cheiral = !two.points.empty();
  for (const auto& [id, mp] : two.points)
    cheiral &= mp.position.z() > 0 && (two.rotation.transpose() * (mp.position - two.translation)).z() > 0;
  c.detail << "standoff " << standoff << ", look-at yaw " << yaw << ", epipolar " << epipolar << ", "
           << two.points.size() << " points in front of both cameras";
  c.require(standoff < 1e-9, "orbit standoff");
  c.require(yaw < 1e-9, "look-at yaw");
  c.require(epipolar < 1e-9, "epipolar residual");
  c.require(cheiral, "cheirality");
}

void criterion8(Check& c) {
  Rng rng(8);
  int roundtrip_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto plan = testsupport::random_plan(rng);
    const std::string s = grammar::serialize(plan);
    if (!(grammar::parse(s) == plan) || grammar::serialize(grammar::parse(s)) != s) ++roundtrip_fail;
  }
  c.require(roundtrip_fail == 0, "1000 round trips");

  const std::string tokens[] = {"target", "orbit", "dolly", "pan_orbit", "reveal", "hold", "blend", "for",
                                "radius", "speed", "dir", "climb", "stop", "pan", "cw", "ccw", "(", ")",
                                "=", ",", ";", "deg/s", "rad/s", "m/s", "s", "m", "deg", "-", "1e308",
                                "0", "3.5", "nan", "inf", " ", "\n", "#", "\"", "\xff", "\x00"};
  constexpr int kInputs = 100000;
  int crashes = 0, accepted = 0;
  for (int i = 0; i < kInputs; ++i) {
    std::string s;
    switch (i % 3) {
      case 0: {  // raw bytes
        const int n = static_cast<int>(rng.uniform() * 64);
        for (int k = 0; k < n; ++k) s.push_back(static_cast<char>(rng.uniform() * 256));
        break;
      }
      case 1: {  // token soup
        const int n = static_cast<int>(rng.uniform() * 30);
        for (int k = 0; k < n; ++k) s += tokens[static_cast<std::size_t>(rng.uniform() * std::size(tokens))];
        break;
      }
      default: {  // mutated valid plan
        s = grammar::serialize(testsupport::random_plan(rng));
        const int edits = 1 + static_cast<int>(rng.uniform() * 3);
        for (int k = 0; k < edits && !s.empty(); ++k) {
          const auto pos = static_cast<std::size_t>(rng.uniform() * s.size());
          const auto& tok = tokens[static_cast<std::size_t>(rng.uniform() * std::size(tokens))];
          if (rng.uniform() < 0.5) s.erase(pos, 1 + static_cast<std::size_t>(rng.uniform() * 4));
          else s.insert(pos, tok);
        }
      }
    }
    try {
      grammar::parse(s);
      ++accepted;
    } catch (const grammar::SyntaxError&) {
    } catch (const grammar::ValidationError&) {
    } catch (...) {
      ++crashes;
    }
  }
  c.detail << "1000 round trips (" << roundtrip_fail << " mismatches), " << kInputs << " fuzz inputs, "
           << accepted << " accepted, " << crashes << " unexpected exceptions";
  c.require(crashes == 0, "fuzz without crashes");
}

void criterion9(Check& c) {
  const auto root = testsupport::scratch_dir("acceptance_pipeline");
  auto run_once = [&](const std::string& name, double& secs) {
    std::ostringstream out, err;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli::run({"pipeline", "-o", (root / name).string()}, out, err);
    secs = seconds_since(t0);
    c.require(code == 0, "pipeline exit 0: " + err.str());
    std::ifstream in(root / name / "manifest.json");
    nlohmann::json digests = nlohmann::json::array();
    if (in) {
      const auto m = nlohmann::json::parse(in);
      for (const auto& s : m["stages"]) digests.push_back(s.value("outputs", nlohmann::json()));
    }
    return digests;
  };
  double t1 = 0, t2 = 0;
  const auto a = run_once("a", t1);
  const auto b = run_once("b", t2);
  c.detail << "runtimes " << t1 << " s and " << t2 << " s, " << a.size() << " stages";
  c.require(a.size() == 6 && a == b, "identical digests");
  c.require(std::max(t1, t2) < 30.0, "pipeline < 30 s");
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::pair<int, std::function<void(Check&)>> criteria[] = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}};
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << id << ": " << c.detail.str() << "\n";
    failures += !c.ok;
  }
  return failures == 0 ? 0 : 1;
}
