#include <doctest.h>

#include <bit>
#include <cstring>
#include <sstream>

#include "cinefly/eval_metrics.hpp"
#include "cinefly/uav_sim.hpp"
#include "support.hpp"

using namespace cinefly;
using namespace cinefly::sim;

TEST_CASE("zero error gives zero output") {
  PidChannel g{3, 2, 1, 1, 0.9};
  PidState s;
  for (int i = 0; i < 50; ++i) CHECK(pid_step(g, 0.0, s, 0.01).u == 0.0);
}

TEST_CASE("proportional-only is exact") {
  PidChannel g{2.5, 0, 0, 1, 0.9};
  PidState s;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double e = rng.uniform(-3, 3);
    CHECK(pid_step(g, e, s, 0.01).u == 2.5 * e);
  }
}

TEST_CASE("trapezoidal integral closed form with clamp") {
  for (double i_max : {10.0, 0.5}) {
    PidChannel g{0, 1, 0, i_max, 0.9};
    PidState s;
    for (int n = 1; n <= 100; ++n) {
      const double u = pid_step(g, 1.0, s, 0.01).u;
      CHECK(u == doctest::Approx(std::min(n * 0.01, i_max)).epsilon(1e-12));
    }
  }
}

TEST_CASE("anti-windup: the clamped integral unwinds as soon as the error flips") {
  PidChannel g{0, 1, 0, 0.2, 0.9};
  PidState s;
  for (int i = 0; i < 1000; ++i) pid_step(g, 5.0, s, 0.01);
  CHECK(s.integral == 0.2);
  // The trapezoid averages the last positive sample into the first reversed step.
  pid_step(g, -5.0, s, 0.01);
  CHECK(s.integral == 0.2);
  pid_step(g, -5.0, s, 0.01);
  CHECK(s.integral == doctest::Approx(0.15));
}

TEST_CASE("derivative filter is rate independent") {
  PidChannel g{0, 0, 1, 1, 0.9};
  PidState a, b;
  // Ramp error 1/s: filtered derivative converges to 1 at any dt.
  for (int i = 0; i <= 200; ++i) pid_step(g, i * 0.01, a, 0.01);
  for (int i = 0; i <= 100; ++i) pid_step(g, i * 0.02, b, 0.02);
  CHECK(a.derivative == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(b.derivative == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gain and model validation") {
  PidGains g = tune_default_gains();
  CHECK_NOTHROW(validate(g));
  g.x.kp = -1;
  CHECK_THROWS_AS(validate(g), Error);
  g = tune_default_gains();
  g.yaw.alpha = 1.0;
  CHECK_THROWS_AS(validate(g), Error);
  UavModel m;
  m.dt_sim = 0;
  CHECK_THROWS_AS(validate(m), Error);
}

TEST_CASE("default gains: step response and orbit tracking") {
  const auto gains = tune_default_gains();
  const auto step = step_response(gains, {});
  CHECK(step.overshoot <= 0.2);
  CHECK(step.settling_time <= 3.0);

  const auto ref = testsupport::default_orbit();
  const auto res = simulate_tracking(ref, gains, {});
  CHECK(res.executed.size() == ref.size());
  const auto rep = eval::compare(ref, res.executed, eval::AlignMode::kNone);
  CHECK(rep.ate_rmse < 0.05 * 3.0);
}

TEST_CASE("commands never exceed saturation") {
  UavModel m;
  m.a_max = 1.0;
  m.yaw_rate_max = 0.5;
  const auto ref = traj::synthesize(grammar::parse("target(0,0,1); blend(0s); hold for 3s"),
                                    {0, Vec3(3, 0, 1), kPi})
                       .trajectory;
  SimOptions opt;
  opt.initial = VehicleState{Vec3(-2, 4, 0), Vec3::Zero(), 0.0};
  const auto res = simulate_tracking(ref, tune_default_gains(), m, opt);
  for (const auto& r : res.log) {
    for (int a = 0; a < 3; ++a) CHECK(std::abs(r.command[a]) <= m.a_max);
    CHECK(std::abs(r.command[3]) <= m.yaw_rate_max);
    for (int a = 0; a < 3; ++a) CHECK(std::abs(r.truth.velocity[a]) <= m.v_max);
  }
}

TEST_CASE("yaw offset by 2pi flies bitwise identically") {
  auto ref = testsupport::default_orbit();
  for (auto& p : ref.samples) p.yaw = std::ldexp(std::round(std::ldexp(p.yaw, 30)), -30);
  auto shifted = ref;
  for (auto& p : shifted.samples) p.yaw += kTwoPi;
  const auto a = simulate_tracking(ref, tune_default_gains(), {});
  const auto b = simulate_tracking(shifted, tune_default_gains(), {});
  REQUIRE(a.log.size() == b.log.size());
  CHECK(std::memcmp(a.log.data(), b.log.data(), a.log.size() * sizeof(ControlRecord)) == 0);
}

TEST_CASE("halving dt_sim barely moves the final position") {
  const auto ref = testsupport::default_orbit();
  UavModel fine;
  fine.dt_sim = 0.005;
  const auto a = simulate_tracking(ref, tune_default_gains(), {});
  const auto b = simulate_tracking(ref, tune_default_gains(), fine);
  CHECK((a.executed.samples.back().position - b.executed.samples.back().position).norm() < 1e-3);
}

TEST_CASE("wind is rejected by the integral term") {
  UavModel m;
  m.wind = Vec3(0.2, -0.1, 0.0);
  const auto gains = tune_default_gains();
  const auto ref = traj::synthesize(grammar::parse("target(0,0,1); hold for 80s"),
                                    {0, Vec3(3, 0, 1), kPi})
                       .trajectory;
  const auto res = simulate_tracking(ref, gains, m);
  // Proportional action alone would settle at wind / Kp.
  const double p_only = m.wind.norm() / gains.x.kp;
  CHECK((res.executed.samples.back().position - Vec3(3, 0, 1)).norm() < 0.25 * p_only);
}

TEST_CASE("divergence and dt checks") {
  const auto ref = testsupport::default_orbit();
  UavModel m;
  m.abort_radius = 0.5;
  SimOptions opt;
  opt.initial = VehicleState{Vec3(10, 0, 1), Vec3::Zero(), 0.0};
  try {
    simulate_tracking(ref, tune_default_gains(), m, opt);
    FAIL("expected Diverged");
  } catch (const Error& e) {
    CHECK(e.kind() == "Diverged");
  }
  UavModel coarse;
  coarse.dt_sim = 0.1;
  CHECK_THROWS_AS(simulate_tracking(ref, tune_default_gains(), coarse), Error);
}

TEST_CASE("noise is seeded and the control log is written") {
  const auto ref = testsupport::default_orbit();
  SimOptions opt;
  opt.estimator_noise_sigma = 0.02;
  opt.seed = 4;
  const auto a = simulate_tracking(ref, tune_default_gains(), {}, opt);
  const auto b = simulate_tracking(ref, tune_default_gains(), {}, opt);
  CHECK(a.executed == b.executed);
  std::ostringstream out;
  write_control_log(out, a.log);
  const std::string s = out.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(a.log.size()) + 1);
}

TEST_CASE("integral term stays within Ki * I_max during a saturating step") {
  const auto gains = tune_default_gains();
  const auto ref = traj::synthesize(grammar::parse("target(0,0,1); hold for 10s"), {0, Vec3(3, 0, 1), kPi})
                       .trajectory;
  SimOptions opt;
  opt.initial = VehicleState{Vec3(-7, 0, 1), Vec3::Zero(), kPi};
  const auto res = simulate_tracking(ref, gains, {}, opt);
  // Replay the x channel to expose its terms.
  PidState s;
  double worst = 0;
  for (const auto& r : res.log) worst = std::max(worst, std::abs(pid_step(gains.x, r.error[0], s, 0.01).i_term));
  CHECK(worst <= gains.x.ki * gains.x.i_max);
  CHECK(worst == doctest::Approx(gains.x.ki * gains.x.i_max));  // the clamp was reached
}
