// Grid search that produced the default PID gains in uav_sim.cpp.
//
//   tune_gains [--coarse]
//
// Every candidate flies a unit x step and the default 12 s orbit (radius 3,
// 30 deg/s) on the default model. Candidates with overshoot above 15% or
// settling above 2.5 s are discarded (margins under the 20% / 3 s
// requirements); the survivor with the lowest orbit position RMSE wins.
// Ki starts at 0.5 so a constant wind is rejected, and Kp stops at 20 to
// keep the loop well inside the 100 Hz update rate.

#include <cstdio>
#include <cstring>
#include <limits>
#include <vector>

#include "cinefly/eval_metrics.hpp"
#include "cinefly/shot_grammar.hpp"
#include "cinefly/trajectory.hpp"
#include "cinefly/uav_sim.hpp"

using namespace cinefly;

int main(int argc, char** argv) {
  const bool coarse = argc > 1 && std::strcmp(argv[1], "--coarse") == 0;
  const sim::UavModel model;
  const auto plan = grammar::parse("target(0,0,1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s");
  const auto orbit = traj::synthesize(plan, {0.0, Vec3(3.0, 0.0, 1.0), kPi}).trajectory;

  std::vector<double> kps, kis, kds;
  for (double v = 2.0; v <= 20.0; v += coarse ? 3.0 : 1.0) kps.push_back(v);
  for (double v = 0.5; v <= 4.0; v += coarse ? 1.0 : 0.25) kis.push_back(v);
  for (double v = 1.0; v <= 12.0; v += coarse ? 2.0 : 0.5) kds.push_back(v);

  sim::PidGains best = sim::tune_default_gains(model);
  double best_rmse = std::numeric_limits<double>::infinity();
  sim::StepResponse best_step;
  for (double kp : kps)
    for (double ki : kis)
      for (double kd : kds) {
        sim::PidGains g = best;
        g.x = {kp, ki, kd, 1.0, 0.9};
        g.y = g.z = g.x;
        const auto step = sim::step_response(g, model);
        if (step.overshoot > 0.15 || step.settling_time > 2.5) continue;
        double rmse;
        try {
          const auto run = sim::simulate_tracking(orbit, g, model);
          rmse = eval::compare(orbit, run.executed, eval::AlignMode::kNone).ate_rmse;
        } catch (const Error&) {
          continue;
        }
        if (rmse < best_rmse) {
          best_rmse = rmse;
          best = g;
          best_step = step;
        }
      }
  if (!(best_rmse < std::numeric_limits<double>::infinity())) {
    std::puts("no candidate met the step-response limits");
    return 1;
  }
  std::printf("kp=%g ki=%g kd=%g  overshoot=%.4f settling=%.2fs orbit_rmse=%.5f m\n", best.x.kp,
              best.x.ki, best.x.kd, best_step.overshoot, best_step.settling_time, best_rmse);
  return 0;
}
