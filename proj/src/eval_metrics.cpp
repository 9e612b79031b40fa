#include "cinefly/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <vector>

namespace cinefly::eval {

namespace {

// Candidate samples in a common form: position plus camera forward axis.
struct Track {
  std::vector<double> t;
  std::vector<Vec3> position;
  std::vector<Vec3> forward;
};

Vec3 heading(double yaw) { return {std::cos(yaw), std::sin(yaw), 0.0}; }

Track track_of(const traj::Trajectory& tr) {
  Track out;
  for (const auto& p : tr.samples) {
    out.t.push_back(p.t);
    out.position.push_back(p.position);
    out.forward.push_back(heading(p.yaw));
  }
  return out;
}

Track track_of(const vo::EstimatedTrajectory& est) {
  Track out;
  for (const auto& p : est.poses) {
    out.t.push_back(p.t);
    out.position.push_back(p.pose.position);
    out.forward.push_back(p.pose.rotation.col(2));
  }
  return out;
}

// Linear interpolation; exact at sample times.
void interpolate(const Track& tr, double t, Vec3& pos, Vec3& fwd) {
  auto it = std::lower_bound(tr.t.begin(), tr.t.end(), t);
  auto i = static_cast<std::size_t>(it - tr.t.begin());
  if (i < tr.t.size() && std::abs(tr.t[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
    pos = tr.position[i];
    fwd = tr.forward[i];
    return;
  }
  if (i > 0 && std::abs(tr.t[i - 1] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
    pos = tr.position[i - 1];
    fwd = tr.forward[i - 1];
    return;
  }
  i = std::clamp<std::size_t>(i, 1, tr.t.size() - 1);
  const double f = (t - tr.t[i - 1]) / (tr.t[i] - tr.t[i - 1]);
  pos = tr.position[i - 1] + f * (tr.position[i] - tr.position[i - 1]);
  fwd = (tr.forward[i - 1] + f * (tr.forward[i] - tr.forward[i - 1])).normalized();
}

TrajectoryReport compare_tracks(const traj::Trajectory& reference, const Track& cand, AlignMode mode) {
  if (reference.empty() || cand.t.empty()) throw Error("NoOverlap", "empty trajectory");
  const double lo = std::max(reference.start_time(), cand.t.front());
  const double hi = std::min(reference.end_time(), cand.t.back());
  const double tol = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});

  std::vector<const traj::Pose*> ref;
  std::vector<Vec3> pos, fwd;
  for (const auto& p : reference.samples) {
    if (p.t < lo - tol || p.t > hi + tol) continue;
    Vec3 cp, cf;
    if (cand.t.size() == 1) {
      cp = cand.position.front();
      cf = cand.forward.front();
    } else {
      interpolate(cand, p.t, cp, cf);
    }
    ref.push_back(&p);
    pos.push_back(cp);
    fwd.push_back(cf);
  }
  if (ref.empty())
    throw Error("NoOverlap", "reference and candidate time ranges do not overlap");

  const auto n = static_cast<Eigen::Index>(ref.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = pos[static_cast<std::size_t>(i)];
    dst.col(i) = ref[static_cast<std::size_t>(i)]->position;
  }

  TrajectoryReport rep;
  rep.mode = mode;
  rep.associated = ref.size();
  if (mode != AlignMode::kNone) {
    try {
      rep.alignment = align_umeyama(src, dst, mode == AlignMode::kSim3);
    } catch (const Error&) {
      rep.alignment = Sim3{};
      rep.alignment.translation = dst.rowwise().mean() - src.rowwise().mean();
      rep.alignment_fallback = true;
    }
  }

  const Eigen::Matrix3Xd aligned = rep.alignment.apply(src);
  double sq = 0.0, yaw_sq = 0.0, ref_len = 0.0, cand_len = 0.0;
  Vec3 axis_sq = Vec3::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Vec3 d = aligned.col(i) - dst.col(i);
    sq += d.squaredNorm();
    axis_sq += d.cwiseAbs2();
    rep.max_deviation = std::max(rep.max_deviation, d.norm());
    const Vec3 f = rep.alignment.rotation * fwd[k];
    const double yaw = std::hypot(f.x(), f.y()) > 1e-12 ? std::atan2(f.y(), f.x()) : ref[k]->yaw;
    const double dy = wrap_angle(yaw - ref[k]->yaw);
    yaw_sq += dy * dy;
    if (i > 0) {
      ref_len += (dst.col(i) - dst.col(i - 1)).norm();
      cand_len += (aligned.col(i) - aligned.col(i - 1)).norm();
    }
  }
  const double nn = static_cast<double>(n);
  rep.ate_rmse = std::sqrt(sq / nn);
  rep.per_axis_rmse = (axis_sq / nn).cwiseSqrt();
  rep.yaw_rmse = std::sqrt(yaw_sq / nn);
  if (ref_len > 0.0) rep.path_length_ratio = cand_len / ref_len;
  else rep.path_length_ratio = cand_len == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return rep;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double nice_step(double range) {
  const double raw = range / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::string to_string(AlignMode m) {
  switch (m) {
    case AlignMode::kNone: return "none";
    case AlignMode::kSe3: return "se3";
    case AlignMode::kSim3: return "sim3";
  }
  return "none";
}

AlignMode parse_align_mode(const std::string& s) {
  if (s == "none") return AlignMode::kNone;
  if (s == "se3") return AlignMode::kSe3;
  if (s == "sim3") return AlignMode::kSim3;
  throw Error("BadParams", "unknown align mode '" + s + "' (expected none, se3 or sim3)");
}

TrajectoryReport compare(const traj::Trajectory& reference, const traj::Trajectory& candidate,
                         AlignMode mode) {
  return compare_tracks(reference, track_of(candidate), mode);
}

TrajectoryReport compare(const traj::Trajectory& reference, const vo::EstimatedTrajectory& candidate,
                         AlignMode mode) {
  return compare_tracks(reference, track_of(candidate), mode);
}

nlohmann::json to_json(const TrajectoryReport& r) {
  nlohmann::json rot = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    rot.push_back({r.alignment.rotation(i, 0), r.alignment.rotation(i, 1), r.alignment.rotation(i, 2)});
  const auto& t = r.alignment.translation;
  nlohmann::json ratio = r.path_length_ratio;
  if (!std::isfinite(r.path_length_ratio)) ratio = nullptr;
  return {{"ate_rmse", r.ate_rmse},
          {"per_axis_rmse", {r.per_axis_rmse.x(), r.per_axis_rmse.y(), r.per_axis_rmse.z()}},
          {"yaw_rmse", r.yaw_rmse},
          {"max_deviation", r.max_deviation},
          {"path_length_ratio", ratio},
          {"associated_samples", r.associated},
          {"alignment",
           {{"mode", to_string(r.mode)},
            {"scale", r.alignment.scale},
            {"rotation", std::move(rot)},
            {"translation", {t.x(), t.y(), t.z()}},
            {"translation_only_fallback", r.alignment_fallback}}}};
}

std::string render_overlay(const traj::Trajectory* reference, const traj::Trajectory* estimated,
                           const traj::Trajectory* executed, const std::optional<Vec3>& target) {
  struct Series {
    const traj::Trajectory* traj;
    const char* label;
    const char* stroke;
    const char* dash;
  };
  std::vector<Series> series;
  if (reference && !reference->empty()) series.push_back({reference, "generated", "#e6b800", ""});
  if (estimated && !estimated->empty()) series.push_back({estimated, "estimated", "#d35400", "6,4"});
  if (executed && !executed->empty()) series.push_back({executed, "executed", "#1f5fbf", ""});
  if (series.empty()) throw Error("EmptyInput", "no trajectory to draw");

  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  auto extend = [&](double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const auto& s : series)
    for (const auto& p : s.traj->samples) extend(p.position.x(), p.position.y());
  if (target) extend(target->x(), target->y());
  double span = std::max(xmax - xmin, ymax - ymin);
  if (!(span > 0.0)) span = 1.0;
  const double pad = 0.05 * span;
  xmin -= pad;
  ymin -= pad;
  span += 2.0 * pad;

  constexpr double kSize = 640.0, kMargin = 70.0, kLegend = 150.0;
  const double scale = kSize / span;
  auto sx = [&](double x) { return kMargin + (x - xmin) * scale; };
  auto sy = [&](double y) { return kMargin + kSize - (y - ymin) * scale; };

  std::ostringstream svg;
  const double width = kSize + 2.0 * kMargin + kLegend;
  const double height = kSize + 2.0 * kMargin;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" fill=\"white\"/>\n";

  // Axes with ticks in meters.
  const double step = nice_step(span);
  svg << "<g class=\"axes\" stroke=\"#444444\" stroke-width=\"1\" font-family=\"sans-serif\" "
         "font-size=\"11\">\n";
  svg << "<rect x=\"" << num(kMargin) << "\" y=\"" << num(kMargin) << "\" width=\"" << num(kSize)
      << "\" height=\"" << num(kSize) << "\" fill=\"none\"/>\n";
  for (double v = std::ceil(xmin / step) * step; v <= xmin + span + 1e-9; v += step) {
    const double x = sx(v);
    svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(kMargin + kSize) << "\" x2=\"" << num(x)
        << "\" y2=\"" << num(kMargin + kSize + 6) << "\"/>"
        << "<text x=\"" << num(x) << "\" y=\"" << num(kMargin + kSize + 20)
        << "\" text-anchor=\"middle\" stroke=\"none\">" << num(std::abs(v) < 1e-12 ? 0.0 : v)
        << "</text>\n";
  }
  for (double v = std::ceil(ymin / step) * step; v <= ymin + span + 1e-9; v += step) {
    const double y = sy(v);
    svg << "<line x1=\"" << num(kMargin - 6) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kMargin)
        << "\" y2=\"" << num(y) << "\"/>"
        << "<text x=\"" << num(kMargin - 10) << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" stroke=\"none\">" << num(std::abs(v) < 1e-12 ? 0.0 : v)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(kMargin + kSize / 2) << "\" y=\"" << num(height - 15)
      << "\" text-anchor=\"middle\" stroke=\"none\">x [m]</text>\n"
      << "<text x=\"18\" y=\"" << num(kMargin + kSize / 2)
      << "\" text-anchor=\"middle\" stroke=\"none\" transform=\"rotate(-90 18 "
      << num(kMargin + kSize / 2) << ")\">y [m]</text>\n</g>\n";

  for (const auto& s : series) {
    svg << "<polyline class=\"" << s.label << "\" fill=\"none\" stroke=\"" << s.stroke
        << "\" stroke-width=\"2\"";
    if (*s.dash) svg << " stroke-dasharray=\"" << s.dash << '"';
    svg << " points=\"";
    bool first = true;
    for (const auto& p : s.traj->samples) {
      if (!first) svg << ' ';
      svg << num(sx(p.position.x())) << ',' << num(sy(p.position.y()));
      first = false;
    }
    svg << "\"/>\n";
  }
  if (target)
    svg << "<circle class=\"target\" cx=\"" << num(sx(target->x())) << "\" cy=\""
        << num(sy(target->y())) << "\" r=\"8\" fill=\"#888888\" stroke=\"#555555\"/>\n";

  // Legend.
  const double lx = kMargin + kSize + 20.0;
  double ly = kMargin + 10.0;
  svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (const auto& s : series) {
    svg << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 30)
        << "\" y2=\"" << num(ly) << "\" stroke=\"" << s.stroke << "\" stroke-width=\"2\"";
    if (*s.dash) svg << " stroke-dasharray=\"" << s.dash << '"';
    svg << "/><text x=\"" << num(lx + 38) << "\" y=\"" << num(ly + 4) << "\">" << s.label
        << "</text>\n";
    ly += 22.0;
  }
  if (target)
    svg << "<rect x=\"" << num(lx + 9) << "\" y=\"" << num(ly - 6) << "\" width=\"12\" height=\"12\" "
        << "rx=\"6\" fill=\"#888888\"/><text x=\"" << num(lx + 38) << "\" y=\"" << num(ly + 4)
        << "\">target</text>\n";
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace cinefly::eval
