#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "cinefly/cli.hpp"

namespace cinefly::cli {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error("ConfigError", what); }

// Shortest round-trip float that TOML still reads as a float.
std::string toml_float(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string toml_vec(const Vec3& v) {
  return "[" + toml_float(v.x()) + ", " + toml_float(v.y()) + ", " + toml_float(v.z()) + "]";
}

std::string toml_channel(const sim::PidChannel& c) {
  return "{ kp = " + toml_float(c.kp) + ", ki = " + toml_float(c.ki) + ", kd = " +
         toml_float(c.kd) + ", i_max = " + toml_float(c.i_max) + ", alpha = " +
         toml_float(c.alpha) + " }";
}

std::string solver_name(vo::VoOptions::Solver s) {
  switch (s) {
    case vo::VoOptions::Solver::kDirect: return "direct";
    case vo::VoOptions::Solver::kRansac: return "ransac";
    case vo::VoOptions::Solver::kAuto: break;
  }
  return "auto";
}

// Typed accessors over one TOML table that remember which keys were read.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  void number(const char* key, double& dst) {
    const toml::node* n = get(key);
    if (!n) return;
    if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer()))
      dst = *v;
    else
      wrong(key, "a number");
  }
  void integer(const char* key, int& dst) {
    std::int64_t v = dst;
    integer64(key, v);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      config_error(where(key) + " is out of range");
    dst = static_cast<int>(v);
  }
  void size(const char* key, std::size_t& dst) {
    std::int64_t v = static_cast<std::int64_t>(dst);
    integer64(key, v);
    if (v < 0) config_error(where(key) + " must be non-negative");
    dst = static_cast<std::size_t>(v);
  }
  void seed(const char* key, std::uint64_t& dst) {
    std::int64_t v = static_cast<std::int64_t>(dst);
    integer64(key, v);
    if (v < 0) config_error(where(key) + " must be a non-negative integer");
    dst = static_cast<std::uint64_t>(v);
  }
  void boolean(const char* key, bool& dst) {
    const toml::node* n = get(key);
    if (!n) return;
    if (!n->is_boolean()) wrong(key, "a boolean");
    dst = *n->value<bool>();
  }
  void string(const char* key, std::string& dst) {
    const toml::node* n = get(key);
    if (!n) return;
    if (!n->is_string()) wrong(key, "a string");
    dst = *n->value<std::string>();
  }
  void vec3(const char* key, Vec3& dst) {
    const toml::node* n = get(key);
    if (!n) return;
    const toml::array* a = n->as_array();
    if (!a || a->size() != 3) wrong(key, "an array of three numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      const toml::node& e = *a->get(i);
      if (!(e.is_floating_point() || e.is_integer())) wrong(key, "an array of three numbers");
      dst[static_cast<Eigen::Index>(i)] = *e.value<double>();
    }
  }
  const toml::table* table(const char* key) {
    const toml::node* n = get(key);
    if (!n) return nullptr;
    if (!n->is_table()) wrong(key, "a table");
    return n->as_table();
  }
  bool has(const char* key) const { return table_ && table_->contains(key); }

  // Rejects keys nobody asked for, which catches typos in hand-written configs.
  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_) {
      (void)v;
      if (!read_.count(std::string(k.str())))
        config_error("unknown key '" + std::string(k.str()) + "' " +
                     (name_.empty() ? std::string("at top level") : "in [" + name_ + "]"));
    }
  }

 private:
  const toml::node* get(const char* key) {
    read_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }
  void integer64(const char* key, std::int64_t& dst) {
    const toml::node* n = get(key);
    if (!n) return;
    if (!n->is_integer()) wrong(key, "an integer");
    dst = *n->value<std::int64_t>();
  }
  std::string where(const char* key) const { return name_ + "." + key; }
  [[noreturn]] void wrong(const char* key, const char* what) const {
    config_error(where(key) + " must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> read_;
};

void read_channel(const toml::table* t, const std::string& name, sim::PidChannel& c) {
  Section s(t, name);
  s.number("kp", c.kp);
  s.number("ki", c.ki);
  s.number("kd", c.kd);
  s.number("i_max", c.i_max);
  s.number("alpha", c.alpha);
  s.finish();
}

void check(bool ok, const std::string& what) {
  if (!ok) config_error(what);
}

// Library validators report BadParams; at load time that is a config problem.
template <typename F>
void revalidate(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    config_error(e.what());
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "line " << e.source().begin.line << ", column " << e.source().begin.column << ": "
        << e.description();
    config_error(msg.str());
  }

  RunConfig c;
  Section top(&root, "");
  {
    Section s(top.table("plan"), "plan");
    s.string("prompt", c.prompt);
    s.string("file", c.plan_file);
    s.number("dt", c.dt);
    s.vec3("start", c.start_position);
    s.number("start_yaw", c.start_yaw);
    s.finish();
  }
  {
    Section s(top.table("scene"), "scene");
    s.seed("seed", c.scene_seed);
    s.integer("count", c.scene.count);
    s.vec3("center", c.scene.center);
    s.number("inner_radius", c.scene.inner_radius);
    s.number("outer_radius", c.scene.outer_radius);
    s.number("z_min", c.scene.z_min);
    s.number("z_max", c.scene.z_max);
    s.finish();
  }
  {
    const toml::table* t = top.table("camera");
    Section s(t, "camera");
    s.number("fx", c.camera.fx);
    s.number("fy", c.camera.fy);
    s.integer("width", c.camera.width);
    s.integer("height", c.camera.height);
    // The principal point follows the image size unless given.
    c.camera.cx = 0.5 * c.camera.width;
    c.camera.cy = 0.5 * c.camera.height;
    s.number("cx", c.camera.cx);
    s.number("cy", c.camera.cy);
    s.number("mount_pitch", c.camera.mount_pitch);
    s.finish();
  }
  {
    Section s(top.table("render"), "render");
    s.number("noise_sigma", c.pixel_noise_sigma);
    s.seed("seed", c.render_seed);
    s.number("outlier_rate", c.outlier_rate);
    s.finish();
  }
  {
    Section s(top.table("vo"), "vo");
    auto& v = c.vo;
    s.number("parallax_threshold_deg", v.parallax_threshold_deg);
    std::string solver = solver_name(v.solver);
    s.string("solver", solver);
    if (solver == "auto") v.solver = vo::VoOptions::Solver::kAuto;
    else if (solver == "direct") v.solver = vo::VoOptions::Solver::kDirect;
    else if (solver == "ransac") v.solver = vo::VoOptions::Solver::kRansac;
    else config_error("vo.solver must be one of auto, direct, ransac");
    s.integer("ransac_iterations", v.ransac_iterations);
    s.number("ransac_threshold_px", v.ransac_threshold_px);
    s.seed("ransac_seed", v.ransac_seed);
    s.integer("max_gn_iterations", v.max_gn_iterations);
    s.number("gn_step_tolerance", v.gn_step_tolerance);
    s.number("outlier_reject_px", v.outlier_reject_px);
    s.number("max_rms_px", v.max_rms_px);
    s.number("triangulation_parallax_deg", v.triangulation_parallax_deg);
    s.boolean("refine_points", v.refine_points);
    s.boolean("geometric_triangulation", v.geometric_triangulation);
    s.size("stale_after_frames", v.stale_after_frames);
    s.finish();
  }
  {
    Section s(top.table("uav"), "uav");
    auto& m = c.uav;
    s.number("a_max", m.a_max);
    s.number("v_max", m.v_max);
    s.number("yaw_rate_max", m.yaw_rate_max);
    s.number("dt_sim", m.dt_sim);
    s.vec3("wind", m.wind);
    s.number("accel_noise_sigma", m.accel_noise_sigma);
    s.number("abort_radius", m.abort_radius);
    s.number("estimator_noise_sigma", c.estimator_noise_sigma);
    s.number("estimator_yaw_noise_sigma", c.estimator_yaw_noise_sigma);
    s.seed("seed", c.sim_seed);
    s.finish();
  }
  if (top.has("gains")) {
    Section s(top.table("gains"), "gains");
    sim::PidGains g = sim::tune_default_gains();
    read_channel(s.table("x"), "gains.x", g.x);
    read_channel(s.table("y"), "gains.y", g.y);
    read_channel(s.table("z"), "gains.z", g.z);
    read_channel(s.table("yaw"), "gains.yaw", g.yaw);
    s.finish();
    revalidate([&] { sim::validate(g); });
    c.gains = g;
  }
  {
    Section s(top.table("eval"), "eval");
    std::string align = eval::to_string(c.align);
    s.string("align", align);
    revalidate([&] { c.align = eval::parse_align_mode(align); });
    s.finish();
  }
  {
    Section s(top.table("output"), "output");
    s.string("dir", c.output_dir);
    s.finish();
  }
  top.finish();

  if (!c.plan_file.empty()) {
    std::filesystem::path p(c.plan_file);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    if (!std::filesystem::is_regular_file(p))
      config_error("plan.file '" + p.string() + "' does not exist");
    c.plan_file = p.string();
  }
  check(c.dt >= 0.01 && c.dt <= 0.5, "plan.dt must lie in [0.01, 0.5]");
  check(c.start_position.allFinite() && std::isfinite(c.start_yaw), "plan.start must be finite");
  check(c.pixel_noise_sigma >= 0.0, "render.noise_sigma must be non-negative");
  check(c.outlier_rate >= 0.0 && c.outlier_rate <= 1.0, "render.outlier_rate must lie in [0, 1]");
  check(c.estimator_noise_sigma >= 0.0 && c.estimator_yaw_noise_sigma >= 0.0,
        "uav estimator noise must be non-negative");
  check(c.vo.parallax_threshold_deg > 0.0, "vo.parallax_threshold_deg must be positive");
  check(c.vo.ransac_iterations > 0 && c.vo.max_gn_iterations > 0,
        "vo iteration counts must be positive");
  check(c.vo.ransac_threshold_px > 0.0 && c.vo.outlier_reject_px > 0.0 && c.vo.max_rms_px > 0.0,
        "vo pixel thresholds must be positive");
  check(c.output_dir.size() > 0, "output.dir must not be empty");
  revalidate([&] { render::validate(c.camera); });
  revalidate([&] { sim::validate(c.uav); });
  check(c.uav.dt_sim <= c.dt, "uav.dt_sim must not exceed plan.dt");
  check(c.scene.count >= render::kMinLandmarks, "scene.count must be at least 8");
  check(c.scene.inner_radius >= 0.0 && c.scene.outer_radius > c.scene.inner_radius,
        "scene radii must satisfy 0 <= inner_radius < outer_radius");
  check(c.scene.z_max >= c.scene.z_min, "scene.z_max must not be below scene.z_min");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string base = std::filesystem::path(path).parent_path().string();
  if (std::filesystem::path(path).extension() == ".json") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      config_error(path + ": " + e.what());
    }
    if (!doc.contains("config_toml") || !doc["config_toml"].is_string())
      config_error(path + ": not a run manifest (missing config_toml)");
    return parse_config(doc["config_toml"].get<std::string>(), base.empty() ? "." : base);
  }
  return parse_config(text, base.empty() ? "." : base);
}

std::string to_toml(const RunConfig& c) {
  std::ostringstream o;
  o << "[plan]\n";
  o << "prompt = " << toml_string(c.prompt) << "\n";
  if (!c.plan_file.empty()) o << "file = " << toml_string(c.plan_file) << "\n";
  o << "dt = " << toml_float(c.dt) << "\n";
  o << "start = " << toml_vec(c.start_position) << "\n";
  o << "start_yaw = " << toml_float(c.start_yaw) << "\n";

  o << "\n[scene]\n";
  o << "seed = " << c.scene_seed << "\n";
  o << "count = " << c.scene.count << "\n";
  o << "center = " << toml_vec(c.scene.center) << "\n";
  o << "inner_radius = " << toml_float(c.scene.inner_radius) << "\n";
  o << "outer_radius = " << toml_float(c.scene.outer_radius) << "\n";
  o << "z_min = " << toml_float(c.scene.z_min) << "\n";
  o << "z_max = " << toml_float(c.scene.z_max) << "\n";

  o << "\n[camera]\n";
  o << "fx = " << toml_float(c.camera.fx) << "\n";
  o << "fy = " << toml_float(c.camera.fy) << "\n";
  o << "cx = " << toml_float(c.camera.cx) << "\n";
  o << "cy = " << toml_float(c.camera.cy) << "\n";
  o << "width = " << c.camera.width << "\n";
  o << "height = " << c.camera.height << "\n";
  o << "mount_pitch = " << toml_float(c.camera.mount_pitch) << "\n";

  o << "\n[render]\n";
  o << "noise_sigma = " << toml_float(c.pixel_noise_sigma) << "\n";
  o << "seed = " << c.render_seed << "\n";
  o << "outlier_rate = " << toml_float(c.outlier_rate) << "\n";

  const auto& v = c.vo;
  o << "\n[vo]\n";
  o << "parallax_threshold_deg = " << toml_float(v.parallax_threshold_deg) << "\n";
  o << "solver = " << toml_string(solver_name(v.solver)) << "\n";
  o << "ransac_iterations = " << v.ransac_iterations << "\n";
  o << "ransac_threshold_px = " << toml_float(v.ransac_threshold_px) << "\n";
  o << "ransac_seed = " << v.ransac_seed << "\n";
  o << "max_gn_iterations = " << v.max_gn_iterations << "\n";
  o << "gn_step_tolerance = " << toml_float(v.gn_step_tolerance) << "\n";
  o << "outlier_reject_px = " << toml_float(v.outlier_reject_px) << "\n";
  o << "max_rms_px = " << toml_float(v.max_rms_px) << "\n";
  o << "triangulation_parallax_deg = " << toml_float(v.triangulation_parallax_deg) << "\n";
  o << "refine_points = " << (v.refine_points ? "true" : "false") << "\n";
  o << "geometric_triangulation = " << (v.geometric_triangulation ? "true" : "false") << "\n";
  o << "stale_after_frames = " << v.stale_after_frames << "\n";

  const auto& m = c.uav;
  o << "\n[uav]\n";
  o << "a_max = " << toml_float(m.a_max) << "\n";
  o << "v_max = " << toml_float(m.v_max) << "\n";
  o << "yaw_rate_max = " << toml_float(m.yaw_rate_max) << "\n";
  o << "dt_sim = " << toml_float(m.dt_sim) << "\n";
  o << "wind = " << toml_vec(m.wind) << "\n";
  o << "accel_noise_sigma = " << toml_float(m.accel_noise_sigma) << "\n";
  o << "abort_radius = " << toml_float(m.abort_radius) << "\n";
  o << "estimator_noise_sigma = " << toml_float(c.estimator_noise_sigma) << "\n";
  o << "estimator_yaw_noise_sigma = " << toml_float(c.estimator_yaw_noise_sigma) << "\n";
  o << "seed = " << c.sim_seed << "\n";

  const sim::PidGains g = c.resolved_gains();
  o << "\n[gains]\n";
  o << "x = " << toml_channel(g.x) << "\n";
  o << "y = " << toml_channel(g.y) << "\n";
  o << "z = " << toml_channel(g.z) << "\n";
  o << "yaw = " << toml_channel(g.yaw) << "\n";

  o << "\n[eval]\n";
  o << "align = " << toml_string(eval::to_string(c.align)) << "\n";

  o << "\n[output]\n";
  o << "dir = " << toml_string(c.output_dir) << "\n";
  return o.str();
}

}  // namespace cinefly::cli
