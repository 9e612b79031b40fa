#pragma once

#include <filesystem>
#include <string>

#include "cinefly/random.hpp"
#include "cinefly/shot_grammar.hpp"
#include "cinefly/trajectory.hpp"

namespace testsupport {

using namespace cinefly;

inline constexpr const char* kOrbitPrompt =
    "target(0,0,1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s";

/// The 12 s, radius 3, pi/6 rad/s orbit starting on the circle facing the target.
inline traj::Trajectory default_orbit(double dt = traj::kDefaultDt) {
  return traj::synthesize(grammar::parse(kOrbitPrompt), {0.0, Vec3(3.0, 0.0, 1.0), kPi}, dt)
      .trajectory;
}

/// Valid plan with every field drawn at random; values are arbitrary doubles
/// so round-tripping exercises shortest-representation formatting.
inline grammar::ShotPlan random_plan(Rng& rng) {
  using namespace grammar;
  ShotPlan plan;
  plan.target = Vec3(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 20));
  const int n = 1 + static_cast<int>(rng.uniform() * 5);
  double shortest = 1e300;
  for (int i = 0; i < n; ++i) {
    Segment seg;
    seg.duration = rng.uniform(0.05, 30.0);
    shortest = std::min(shortest, seg.duration);
    const auto dir = rng.uniform() < 0.5 ? Direction::kCw : Direction::kCcw;
    switch (static_cast<int>(rng.uniform() * 5)) {
      case 0:
        seg.primitive = Orbit{rng.uniform(0.5, 40), rng.uniform(1e-3, 3), dir, rng.uniform(-2, 2)};
        break;
      case 1:
        seg.primitive = DollyToward{rng.uniform(0.01, 10), rng.uniform(0.5, 10)};
        break;
      case 2:
        seg.primitive = PanOrbit{rng.uniform(0.5, 40), rng.uniform(1e-3, 3), dir,
                                 rng.uniform(-kPi, kPi)};
        break;
      case 3:
        seg.primitive = Reveal{rng.uniform(0.01, 10), rng.uniform(0, 3)};
        break;
      default:
        seg.primitive = Hold{};
    }
    plan.segments.push_back(seg);
  }
  plan.blend_duration = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 0.5 * shortest);
  return plan;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cinefly_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
