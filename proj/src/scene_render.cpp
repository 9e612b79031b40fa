#include "cinefly/scene_render.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "cinefly/random.hpp"

namespace cinefly::render {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error("BadParams", what); }

}  // namespace

void validate(const CameraModel& cam) {
  if (!(cam.fx > 0.0 && cam.fy > 0.0)) bad("focal lengths must be positive");
  if (cam.width <= 0 || cam.height <= 0) bad("image size must be positive");
  if (!cam.inside(cam.cx, cam.cy)) bad("principal point must lie inside the image");
  if (!std::isfinite(cam.mount_pitch)) bad("mount_pitch must be finite");
}

Mat3 camera_rotation(double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const Vec3 x_c(sy, -cy, 0.0);
  const Vec3 z_c(cp * cy, cp * sy, -sp);
  Mat3 r;
  r.col(0) = x_c;
  r.col(1) = z_c.cross(x_c);
  r.col(2) = z_c;
  return r;
}

bool project_world(const CameraModel& cam, const Mat3& r_wc, const Vec3& center,
                   const Vec3& world, Vec2& uv) {
  const Vec3 p_cam = r_wc.transpose() * (world - center);
  if (!(p_cam.z() > kMinDepth)) return false;
  uv = cam.project(p_cam);
  return cam.inside(uv.x(), uv.y());
}

Scene generate_scene(const SceneParams& params, std::uint64_t seed) {
  if (params.count < kMinLandmarks)
    bad("landmark count " + std::to_string(params.count) + " < 8");
  if (!params.center.allFinite()) bad("center must be finite");
  if (!(params.inner_radius >= 0.0 && params.outer_radius >= params.inner_radius &&
        params.outer_radius > 0.0 && std::isfinite(params.outer_radius)))
    bad("annulus radii must satisfy 0 <= inner <= outer, outer > 0");
  if (!(params.z_max >= params.z_min && std::isfinite(params.z_min) &&
        std::isfinite(params.z_max)))
    bad("height range must satisfy z_min <= z_max");

  Scene scene;
  scene.params = params;
  scene.seed = seed;
  Rng rng(seed);
  const double ri2 = params.inner_radius * params.inner_radius;
  const double ro2 = params.outer_radius * params.outer_radius;
  scene.landmarks.reserve(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) {
    const double r = std::clamp(std::sqrt(ri2 + rng.uniform() * (ro2 - ri2)),
                                params.inner_radius, params.outer_radius);
    const double angle = rng.uniform(-kPi, kPi);
    const double z = rng.uniform(params.z_min, params.z_max);
    scene.landmarks.push_back(
        {i, Vec3(params.center.x() + r * std::cos(angle),
                 params.center.y() + r * std::sin(angle), z)});
  }
  return scene;
}

ObservationSequence render(const Scene& scene, const traj::Trajectory& traj,
                           const CameraModel& camera, const RenderOptions& options) {
  if (traj.empty()) bad("trajectory is empty");
  validate(camera);
  if (!(options.noise_sigma >= 0.0)) bad("noise_sigma must be >= 0");
  if (!(options.outlier_rate >= 0.0 && options.outlier_rate <= 1.0))
    bad("outlier_rate must lie in [0, 1]");

  ObservationSequence seq;
  seq.camera = camera;
  seq.noise_sigma = options.noise_sigma;
  seq.frames.resize(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& pose = traj.samples[i];
    const Mat3 r_wc = camera_rotation(pose.yaw, camera.mount_pitch);
    Rng rng = Rng::substream(options.seed, i);
    Frame& frame = seq.frames[i];
    frame.t = pose.t;
    for (const auto& lm : scene.landmarks) {
      Vec2 uv;
      if (!project_world(camera, r_wc, pose.position, lm.position, uv)) continue;
      if (options.noise_sigma > 0.0) {
        uv.x() += options.noise_sigma * rng.gaussian();
        uv.y() += options.noise_sigma * rng.gaussian();
      }
      if (options.outlier_rate > 0.0 && rng.uniform() < options.outlier_rate) {
        uv = Vec2(rng.uniform(0.0, camera.width), rng.uniform(0.0, camera.height));
      }
      if (!camera.inside(uv.x(), uv.y())) continue;
      frame.observations.push_back({lm.id, uv.x(), uv.y()});
    }
    if (frame.observations.size() < static_cast<std::size_t>(kMinLandmarks))
      seq.degenerate_frames.push_back(i);
  }
  return seq;
}

nlohmann::json to_json(const Scene& scene) {
  nlohmann::json lms = nlohmann::json::array();
  for (const auto& lm : scene.landmarks)
    lms.push_back({{"id", lm.id}, {"position", {lm.position.x(), lm.position.y(), lm.position.z()}}});
  const auto& p = scene.params;
  return {{"generation",
           {{"seed", scene.seed},
            {"count", p.count},
            {"center", {p.center.x(), p.center.y(), p.center.z()}},
            {"inner_radius", p.inner_radius},
            {"outer_radius", p.outer_radius},
            {"z_min", p.z_min},
            {"z_max", p.z_max}}},
          {"landmarks", std::move(lms)}};
}

Scene scene_from_json(const nlohmann::json& doc) {
  try {
    Scene scene;
    const auto& g = doc.at("generation");
    scene.seed = g.at("seed").get<std::uint64_t>();
    auto& p = scene.params;
    p.count = g.at("count").get<int>();
    const auto& c = g.at("center");
    p.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
    p.inner_radius = g.at("inner_radius").get<double>();
    p.outer_radius = g.at("outer_radius").get<double>();
    p.z_min = g.at("z_min").get<double>();
    p.z_max = g.at("z_max").get<double>();
    for (const auto& lm : doc.at("landmarks")) {
      const auto& q = lm.at("position");
      scene.landmarks.push_back(
          {lm.at("id").get<int>(),
           Vec3(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>())});
    }
    for (std::size_t i = 0; i < scene.landmarks.size(); ++i)
      for (std::size_t j = i + 1; j < scene.landmarks.size(); ++j)
        if (scene.landmarks[i].id == scene.landmarks[j].id)
          bad("duplicate landmark id " + std::to_string(scene.landmarks[i].id));
    if (scene.landmarks.size() < static_cast<std::size_t>(kMinLandmarks))
      bad("scene needs at least 8 landmarks");
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw Error("FormatError", std::string("scene.json: ") + e.what());
  }
}

nlohmann::json to_json(const CameraModel& cam) {
  return {{"fx", cam.fx},       {"fy", cam.fy},         {"cx", cam.cx},
          {"cy", cam.cy},       {"width", cam.width},   {"height", cam.height},
          {"mount_pitch", cam.mount_pitch}};
}

CameraModel camera_from_json(const nlohmann::json& doc) {
  CameraModel cam;
  cam.fx = doc.value("fx", cam.fx);
  cam.fy = doc.value("fy", cam.fy);
  cam.width = doc.value("width", cam.width);
  cam.height = doc.value("height", cam.height);
  cam.cx = doc.value("cx", 0.5 * cam.width);
  cam.cy = doc.value("cy", 0.5 * cam.height);
  cam.mount_pitch = doc.value("mount_pitch", cam.mount_pitch);
  validate(cam);
  return cam;
}

void write_jsonl(std::ostream& out, const ObservationSequence& seq) {
  for (const auto& frame : seq.frames) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : frame.observations) obs.push_back({o.id, o.u, o.v});
    out << nlohmann::json{{"t", frame.t}, {"obs", std::move(obs)}}.dump() << '\n';
  }
}

ObservationSequence read_jsonl(std::istream& in, const CameraModel& camera, double noise_sigma) {
  ObservationSequence seq;
  seq.camera = camera;
  seq.noise_sigma = noise_sigma;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      Frame frame;
      frame.t = doc.at("t").get<double>();
      for (const auto& o : doc.at("obs"))
        frame.observations.push_back(
            {o.at(0).get<int>(), o.at(1).get<double>(), o.at(2).get<double>()});
      if (frame.observations.size() < static_cast<std::size_t>(kMinLandmarks))
        seq.degenerate_frames.push_back(seq.frames.size());
      seq.frames.push_back(std::move(frame));
    } catch (const nlohmann::json::exception& e) {
      throw Error("FormatError", "observations line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return seq;
}

}  // namespace cinefly::render
