#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cinefly/eval_metrics.hpp"
#include "cinefly/scene_render.hpp"
#include "cinefly/uav_sim.hpp"
#include "cinefly/vo.hpp"

namespace cinefly::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Everything a run depends on. Seeds are always explicit.
struct RunConfig {
  // [plan]
  std::string prompt = "target(0, 0, 1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s";
  std::string plan_file;  // overrides prompt; DSL text or plan.json, relative to the config file
  double dt = 0.05;
  Vec3 start_position = Vec3(3.0, 0.0, 1.0);
  double start_yaw = kPi;

  // [scene]
  render::SceneParams scene;
  std::uint64_t scene_seed = 7;

  // [camera]
  render::CameraModel camera;

  // [render]
  double pixel_noise_sigma = 0.0;
  std::uint64_t render_seed = 11;
  double outlier_rate = 0.0;

  // [vo]
  vo::VoOptions vo;

  // [uav]
  sim::UavModel uav;
  double estimator_noise_sigma = 0.0;
  double estimator_yaw_noise_sigma = 0.0;
  std::uint64_t sim_seed = 13;

  // [gains]; tune_default_gains() when absent
  std::optional<sim::PidGains> gains;

  // [eval]
  eval::AlignMode align = eval::AlignMode::kSim3;

  // [output]
  std::string output_dir = "run";

  sim::PidGains resolved_gains() const { return gains ? *gains : sim::tune_default_gains(uav); }
};

/// Parses TOML text. Unknown tables or keys, wrong types and invalid values
/// throw Error("ConfigError"). `base_dir` resolves a relative plan.file.
RunConfig parse_config(std::string_view toml_text, const std::string& base_dir = ".");

/// Reads a TOML config, or the resolved config embedded in a manifest.json.
RunConfig load_config(const std::string& path);

/// Complete TOML rendering; parse_config(to_toml(c)) reproduces c.
std::string to_toml(const RunConfig& config);

/// Runs the command line `args` (without the program name) and returns the
/// process exit code. 2 means bad input; 3 means a stage failed.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace cinefly::cli
