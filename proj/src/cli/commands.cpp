#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <toml.hpp>

#include "cinefly/cli.hpp"
#include "cinefly/shot_grammar.hpp"
#include "cinefly/trajectory.hpp"

namespace cinefly::cli {

namespace fs = std::filesystem;

namespace {

// Errors caused by what the user handed us, as opposed to a stage failing on
// valid input.
int exit_code_for(const std::string& kind) {
  static const std::set<std::string> usage{"SyntaxError", "ValidationError", "ConfigError",
                                           "FormatError", "UsageError"};
  return usage.count(kind) ? 2 : 3;
}

[[noreturn]] void usage_error(const std::string& what) { throw Error("UsageError", what); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) usage_error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.close();
  if (!out) throw Error("IoError", "cannot write '" + path.string() + "'");
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw Error("IoError", "cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("FormatError", what + ": " + e.what());
  }
}

// A plan file is either plan.json or shot-language text.
grammar::ShotPlan load_plan_file(const std::string& path) {
  const std::string text = read_file(path);
  if (fs::path(path).extension() == ".json")
    return grammar::plan_from_json(parse_json(text, path));
  return grammar::parse(text);
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void report_error(const Error& e, std::ostream& err, const std::string& source = {}) {
  err << "error: " << e.what() << "\n";
  if (const auto* se = dynamic_cast<const grammar::SyntaxError*>(&e); se && !source.empty()) {
    // Point at the offending byte on its line.
    const std::size_t pos = std::min(se->position(), source.size());
    const std::size_t begin = source.rfind('\n', pos == 0 ? 0 : pos - 1);
    const std::size_t line_start = begin == std::string::npos || pos == 0 ? 0 : begin + 1;
    std::size_t line_end = source.find('\n', line_start);
    if (line_end == std::string::npos) line_end = source.size();
    err << "  " << source.substr(line_start, line_end - line_start) << "\n";
    err << "  " << std::string(pos - line_start, ' ') << "^\n";
  }
}

std::optional<Vec3> vec_from(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return Vec3(v[0], v[1], v[2]);
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

nlohmann::json config_json(const std::string& toml_text) {
  std::ostringstream o;
  o << toml::json_formatter{toml::parse(toml_text)};
  return nlohmann::json::parse(o.str());
}

std::optional<Sim3> alignment_for(const traj::Trajectory& ref, const vo::EstimatedTrajectory& est,
                                  eval::AlignMode mode) {
  if (mode == eval::AlignMode::kNone) return std::nullopt;
  return eval::compare(ref, est, mode).alignment;
}

// --- stage bodies shared by the stage commands and the pipeline ----------

void write_plan(const fs::path& dir, const grammar::ShotPlan& plan) {
  write_file(dir / "plan.json", dump(grammar::to_json(plan)));
}

traj::Trajectory write_reference(const fs::path& dir, const grammar::ShotPlan& plan,
                                 const RunConfig& c, std::ostream& out) {
  const auto res = traj::synthesize(plan, {0.0, c.start_position, c.start_yaw}, c.dt);
  for (const auto& w : res.warnings) out << "warning: " << w << "\n";
  write_file(dir / "traj_ref.csv", traj::to_csv(res.trajectory));
  return res.trajectory;
}

render::ObservationSequence write_observations(const fs::path& dir, const traj::Trajectory& ref,
                                               const RunConfig& c) {
  const auto scene = render::generate_scene(c.scene, c.scene_seed);
  const auto obs = render::render(scene, ref, c.camera,
                                  {c.pixel_noise_sigma, c.render_seed, c.outlier_rate});
  // The observation file carries no intrinsics, so they travel with the scene.
  nlohmann::json doc = render::to_json(scene);
  doc["camera"] = render::to_json(c.camera);
  doc["render"] = {{"noise_sigma", c.pixel_noise_sigma},
                   {"seed", c.render_seed},
                   {"outlier_rate", c.outlier_rate}};
  write_file(dir / "scene.json", dump(doc));
  std::ostringstream jl;
  render::write_jsonl(jl, obs);
  write_file(dir / "observations.jsonl", jl.str());
  return obs;
}

struct Extraction {
  vo::VoResult vo;
  traj::Trajectory trajectory;  // aligned when a reference was available
};

Extraction write_estimate(const fs::path& dir, const render::ObservationSequence& obs,
                          const traj::Trajectory* ref, eval::AlignMode mode, double dt,
                          const vo::VoOptions& opt) {
  Extraction x;
  x.vo = vo::estimate_trajectory(obs, opt);
  const auto alignment = ref ? alignment_for(*ref, x.vo.trajectory, mode) : std::nullopt;
  x.trajectory = vo::to_trajectory(x.vo.trajectory, dt, alignment);
  write_file(dir / "traj_est.csv", traj::to_csv(x.trajectory, vo::status_column(x.vo.trajectory)));
  write_file(dir / "map.json", dump(vo::to_json(x.vo.map)));
  return x;
}

traj::Trajectory write_flight(const fs::path& dir, const traj::Trajectory& reference,
                              const RunConfig& c) {
  sim::SimOptions opt;
  opt.estimator_noise_sigma = c.estimator_noise_sigma;
  opt.estimator_yaw_noise_sigma = c.estimator_yaw_noise_sigma;
  opt.seed = c.sim_seed;
  const auto res = sim::simulate_tracking(reference, c.resolved_gains(), c.uav, opt);
  write_file(dir / "traj_exec.csv", traj::to_csv(res.executed));
  std::ostringstream log;
  sim::write_control_log(log, res.log);
  write_file(dir / "control_log.csv", log.str());
  return res.executed;
}

double dt_of(const render::ObservationSequence& obs) {
  return obs.frames.size() > 1 ? obs.frames[1].t - obs.frames[0].t : traj::kDefaultDt;
}

// --- commands --------------------------------------------------------------

struct PlanArgs {
  std::string prompt, file, out = ".";
};

int cmd_plan(const PlanArgs& a, std::ostream& out, std::ostream& err) {
  if (a.prompt.empty() == a.file.empty()) usage_error("give exactly one of --prompt or --file");
  std::string source;
  grammar::ShotPlan plan;
  try {
    if (!a.prompt.empty()) {
      source = a.prompt;
      plan = grammar::parse(source);
    } else if (fs::path(a.file).extension() == ".json") {
      plan = load_plan_file(a.file);
    } else {
      source = read_file(a.file);
      plan = grammar::parse(source);
    }
  } catch (const Error& e) {
    report_error(e, err, source);
    return exit_code_for(e.kind());
  }
  write_plan(prepare_dir(a.out), plan);
  out << grammar::serialize(plan) << "\n";
  return 0;
}

struct SynthArgs {
  std::string plan, config, out = ".";
  std::optional<double> dt, start_yaw;
  std::vector<double> start;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  RunConfig c = config_or_default(a.config);
  if (a.dt) c.dt = *a.dt;
  if (auto s = vec_from(a.start)) c.start_position = *s;
  if (a.start_yaw) c.start_yaw = *a.start_yaw;
  const auto plan = load_plan_file(a.plan);
  const auto ref = write_reference(prepare_dir(a.out), plan, c, out);
  out << "traj_ref.csv: " << ref.size() << " samples\n";
  return 0;
}

struct RenderArgs {
  std::string traj, config, out = ".";
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
};

int cmd_render(const RenderArgs& a, std::ostream& out) {
  RunConfig c = config_or_default(a.config);
  if (a.sigma) c.pixel_noise_sigma = *a.sigma;
  if (a.seed) c.render_seed = *a.seed;
  const auto ref = traj::read_csv_file(a.traj);
  const auto obs = write_observations(prepare_dir(a.out), ref, c);
  out << "observations.jsonl: " << obs.frames.size() << " frames, "
      << obs.degenerate_frames.size() << " degenerate\n";
  return 0;
}

struct ExtractArgs {
  std::string obs, scene, ref, config, out = ".";
  std::optional<std::string> align;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const RunConfig c = config_or_default(a.config);
  render::CameraModel cam = c.camera;
  double sigma = c.pixel_noise_sigma;
  if (!a.scene.empty()) {
    const auto doc = parse_json(read_file(a.scene), a.scene);
    try {
      if (doc.contains("camera")) cam = render::camera_from_json(doc["camera"]);
      if (doc.contains("render")) sigma = doc["render"].value("noise_sigma", sigma);
    } catch (const nlohmann::json::exception& e) {
      throw Error("FormatError", a.scene + ": " + e.what());
    }
  }
  std::ifstream in(a.obs, std::ios::binary);
  if (!in) usage_error("cannot read '" + a.obs + "'");
  const auto obs = render::read_jsonl(in, cam, sigma);
  std::optional<traj::Trajectory> ref;
  if (!a.ref.empty()) ref = traj::read_csv_file(a.ref);
  const auto mode = a.align ? eval::parse_align_mode(*a.align) : c.align;
  const auto x = write_estimate(prepare_dir(a.out), obs, ref ? &*ref : nullptr, mode, dt_of(obs), c.vo);
  out << "traj_est.csv: init frame " << x.vo.trajectory.init_frame << ", " << x.vo.map.size()
      << " map points" << (ref ? "" : " (gauge frame)") << "\n";
  return 0;
}

struct FlyArgs {
  std::string traj, config, out = ".";
};

int cmd_fly(const FlyArgs& a, std::ostream& out) {
  RunConfig c = config_or_default(a.config);
  const auto ref = traj::read_csv_file(a.traj);
  const auto exec = write_flight(prepare_dir(a.out), ref, c);
  out << "traj_exec.csv: " << exec.size() << " samples\n";
  return 0;
}

struct EvalArgs {
  std::string ref, cand, exec, out = ".", align = "sim3";
  std::vector<double> target;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto mode = eval::parse_align_mode(a.align);
  const auto ref = traj::read_csv_file(a.ref);
  const auto cand = traj::read_csv_file(a.cand);
  std::optional<traj::Trajectory> exec;
  if (!a.exec.empty()) exec = traj::read_csv_file(a.exec);
  const auto report = eval::compare(ref, cand, mode);
  nlohmann::json metrics{{"ref_vs_cand", eval::to_json(report)}};
  if (exec) {
    metrics["cand_vs_exec"] = eval::to_json(eval::compare(cand, *exec, eval::AlignMode::kNone));
    metrics["ref_vs_exec"] = eval::to_json(eval::compare(ref, *exec, eval::AlignMode::kNone));
  }
  const fs::path dir = prepare_dir(a.out);
  write_file(dir / "metrics.json", dump(metrics));
  write_file(dir / "overlay.svg",
             eval::render_overlay(&ref, &cand, exec ? &*exec : nullptr, vec_from(a.target)));
  out << "ate_rmse " << report.ate_rmse << " (" << eval::to_string(mode) << ")\n";
  return 0;
}

struct PipelineArgs {
  std::string config, out;
};

int cmd_pipeline(const PipelineArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig c = config_or_default(a.config);
  if (!a.out.empty()) c.output_dir = a.out;
  const fs::path dir = prepare_dir(c.output_dir);

  // Fold the plan source into the config so the manifest alone reproduces the run.
  grammar::ShotPlan plan;
  std::string source = c.prompt;
  try {
    if (!c.plan_file.empty()) {
      if (fs::path(c.plan_file).extension() == ".json") {
        plan = load_plan_file(c.plan_file);
        source = grammar::serialize(plan);
      } else {
        source = read_file(c.plan_file);
      }
    }
  } catch (const Error& e) {
    report_error(e, err);
    return exit_code_for(e.kind());
  }
  RunConfig resolved = c;
  resolved.prompt = source;
  resolved.plan_file.clear();
  resolved.gains = c.resolved_gains();
  const std::string resolved_toml = to_toml(resolved);

  nlohmann::json manifest{{"tool", "cinefly"},
                          {"version", kVersion},
                          {"config_toml", resolved_toml},
                          {"config", config_json(resolved_toml)},
                          {"stages", nlohmann::json::array()}};
  auto finish = [&](const std::string& status) {
    manifest["status"] = status;
    write_file(dir / "manifest.json", dump(manifest));
  };

  using Clock = std::chrono::steady_clock;
  auto stage = [&](const std::string& name, const std::vector<std::string>& files,
                   const std::function<void()>& body) {
    const auto t0 = Clock::now();
    nlohmann::json entry{{"name", name}};
    try {
      body();
    } catch (const Error& e) {
      entry["wall_time_s"] = std::chrono::duration<double>(Clock::now() - t0).count();
      entry["error"] = {{"kind", e.kind()}, {"message", e.what()}};
      manifest["stages"].push_back(entry);
      manifest["failed_stage"] = name;
      finish("failed");
      throw;
    }
    entry["wall_time_s"] = std::chrono::duration<double>(Clock::now() - t0).count();
    nlohmann::json digests = nlohmann::json::object();
    for (const auto& f : files) digests[f] = sha256_file((dir / f).string());
    entry["outputs"] = std::move(digests);
    manifest["stages"].push_back(entry);
    out << "[ok] " << name << "\n";
  };

  std::string failed;
  try {
    traj::Trajectory ref, flown, exec;
    render::ObservationSequence obs;
    Extraction est;
    failed = "shot_grammar";
    stage(failed, {"plan.json"}, [&] {
      plan = grammar::parse(source);
      write_plan(dir, plan);
    });
    failed = "traj_synth";
    stage(failed, {"traj_ref.csv"}, [&] { ref = write_reference(dir, plan, c, out); });
    failed = "scene_render";
    stage(failed, {"scene.json", "observations.jsonl"},
          [&] { obs = write_observations(dir, ref, c); });
    failed = "vo_extract";
    stage(failed, {"traj_est.csv", "map.json"},
          [&] { est = write_estimate(dir, obs, &ref, c.align, c.dt, c.vo); });
    failed = "uav_sim";
    stage(failed, {"traj_exec.csv", "control_log.csv"},
          [&] { exec = write_flight(dir, est.trajectory, c); });
    failed = "eval_metrics";
    stage(failed, {"metrics.json", "overlay.svg"}, [&] {
      const auto& poses = est.vo.trajectory.poses;
      const auto lost = std::count_if(poses.begin(), poses.end(), [](const auto& p) {
        return p.status == vo::TrackStatus::kLost;
      });
      nlohmann::json metrics{
          {"ref_vs_est", eval::to_json(eval::compare(ref, est.vo.trajectory, c.align))},
          {"est_vs_exec", eval::to_json(eval::compare(est.trajectory, exec, eval::AlignMode::kNone))},
          {"ref_vs_exec", eval::to_json(eval::compare(ref, exec, eval::AlignMode::kNone))},
          {"vo",
           {{"init_frame", est.vo.trajectory.init_frame},
            {"lost_frames", lost},
            {"map_points", est.vo.map.size()}}}};
      write_file(dir / "metrics.json", dump(metrics));
      write_file(dir / "overlay.svg",
                 eval::render_overlay(&ref, &est.trajectory, &exec, plan.target));
    });
  } catch (const Error& e) {
    err << "stage " << failed << " failed: " << e.what() << "\n";
    if (failed == "shot_grammar") report_error(e, err, source);
    return std::max(exit_code_for(e.kind()), failed == "shot_grammar" ? 2 : 3);
  }
  finish("ok");
  out << "run written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

std::string sha256_file(const std::string& path) {
  const std::string data = read_file(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("IoError", "SHA-256 failed for '" + path + "'");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-to-flight pipeline: shot plan, reference trajectory, rendered features, "
               "visual odometry, simulated PID flight and evaluation.",
               "cinefly"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  PlanArgs plan_a;
  auto* plan = app.add_subcommand("plan", "Parse a shot description into plan.json");
  plan->add_option("--prompt", plan_a.prompt, "Shot description text");
  plan->add_option("--file", plan_a.file, "Shot description file (text or plan.json)");
  plan->add_option("-o,--out", plan_a.out, "Output directory");

  SynthArgs synth_a;
  auto* synth = app.add_subcommand("synth", "Synthesize traj_ref.csv from a plan");
  synth->add_option("--plan", synth_a.plan, "plan.json or shot text file")->required();
  synth->add_option("--config", synth_a.config, "TOML config");
  synth->add_option("--dt", synth_a.dt, "Sample period in seconds");
  synth->add_option("--start", synth_a.start, "Start position x,y,z")->expected(3)->delimiter(',');
  synth->add_option("--start-yaw", synth_a.start_yaw, "Start yaw in radians");
  synth->add_option("-o,--out", synth_a.out, "Output directory");

  RenderArgs render_a;
  auto* rend = app.add_subcommand("render", "Render scene.json and observations.jsonl");
  rend->add_option("--traj", render_a.traj, "Reference traj.csv")->required();
  rend->add_option("--config", render_a.config, "TOML config");
  rend->add_option("--sigma", render_a.sigma, "Pixel noise sigma");
  rend->add_option("--seed", render_a.seed, "Render noise seed");
  rend->add_option("-o,--out", render_a.out, "Output directory");

  ExtractArgs extract_a;
  auto* extract = app.add_subcommand("extract", "Visual odometry: traj_est.csv and map.json");
  extract->add_option("--obs", extract_a.obs, "observations.jsonl")->required();
  extract->add_option("--scene", extract_a.scene, "scene.json carrying the camera");
  extract->add_option("--ref", extract_a.ref, "Reference traj.csv to align the estimate to");
  extract->add_option("--align", extract_a.align, "none, se3 or sim3");
  extract->add_option("--config", extract_a.config, "TOML config");
  extract->add_option("-o,--out", extract_a.out, "Output directory");

  FlyArgs fly_a;
  auto* fly = app.add_subcommand("fly", "Fly a trajectory: traj_exec.csv and control_log.csv");
  fly->add_option("--traj", fly_a.traj, "Trajectory to track")->required();
  fly->add_option("--config", fly_a.config, "TOML config");
  fly->add_option("-o,--out", fly_a.out, "Output directory");

  EvalArgs eval_a;
  auto* ev = app.add_subcommand("eval", "Compare trajectories: metrics.json and overlay.svg");
  ev->add_option("--ref", eval_a.ref, "Reference traj.csv")->required();
  ev->add_option("--cand", eval_a.cand, "Candidate traj.csv")->required();
  ev->add_option("--exec", eval_a.exec, "Executed traj.csv");
  ev->add_option("--align", eval_a.align, "none, se3 or sim3");
  ev->add_option("--target", eval_a.target, "Target marker x,y,z")->expected(3)->delimiter(',');
  ev->add_option("-o,--out", eval_a.out, "Output directory");

  PipelineArgs pipe_a;
  auto* pipe = app.add_subcommand("pipeline", "Run every stage into one run directory");
  pipe->add_option("--config", pipe_a.config, "TOML config or a previous manifest.json");
  pipe->add_option("-o,--out", pipe_a.out, "Output directory (overrides output.dir)");

  auto* defaults = app.add_subcommand("defaults", "Print the default config as TOML");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*plan) return cmd_plan(plan_a, out, err);
    if (*synth) return cmd_synth(synth_a, out);
    if (*rend) return cmd_render(render_a, out);
    if (*extract) return cmd_extract(extract_a, out);
    if (*fly) return cmd_fly(fly_a, out);
    if (*ev) return cmd_eval(eval_a, out);
    if (*pipe) return cmd_pipeline(pipe_a, out, err);
    if (*defaults) {
      out << to_toml(RunConfig{});
      return 0;
    }
  } catch (const Error& e) {
    report_error(e, err);
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace cinefly::cli
