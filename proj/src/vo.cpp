#include "cinefly/vo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "cinefly/random.hpp"

namespace cinefly::vo {

namespace {

using Mat34 = Eigen::Matrix<double, 3, 4>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Hartley conditioning: centroid to origin, mean distance sqrt(2).
Mat3 conditioning(const std::vector<Vec2>& pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  const double s = d > 0.0 ? std::sqrt(2.0) / d : 1.0;
  Mat3 t;
  t << s, 0.0, -s * c.x(), 0.0, s, -s * c.y(), 0.0, 0.0, 1.0;
  return t;
}

Mat3 project_to_essential(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * Vec3(1.0, 1.0, 0.0).asDiagonal() * svd.matrixV().transpose();
}

double sampson_sq(const Mat3& e, const Vec2& a, const Vec2& b) {
  const Vec3 xa = a.homogeneous();
  const Vec3 xb = b.homogeneous();
  const Vec3 ea = e * xa;
  const Vec3 etb = e.transpose() * xb;
  const double num = xb.dot(ea);
  const double den = ea.head<2>().squaredNorm() + etb.head<2>().squaredNorm();
  return den > 0.0 ? num * num / den : std::numeric_limits<double>::infinity();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double ray_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

// Camera-from-world pose used inside the solver.
struct CwPose {
  Mat3 r;
  Vec3 t;
};

CwPose to_cw(const CameraPose& p) {
  const Mat3 r = p.rotation.transpose();
  return {r, -(r * p.position)};
}

CameraPose to_wc(const CwPose& p) {
  const Mat3 rt = p.r.transpose();
  return {rt, -(rt * p.t)};
}

constexpr double kBehindPenalty = 1e6;

// Half the sum of squared pixel residuals; points at or behind the image
// plane contribute a fixed penalty.
double reprojection_cost(const CwPose& pose, const std::vector<Vec3>& world,
                         const std::vector<Vec2>& pixels, const render::CameraModel& cam) {
  double cost = 0.0;
  for (std::size_t i = 0; i < world.size(); ++i) {
    const Vec3 pc = pose.r * world[i] + pose.t;
    if (!(pc.z() > 1e-9)) {
      cost += kBehindPenalty;
      continue;
    }
    cost += 0.5 * (cam.project(pc) - pixels[i]).squaredNorm();
  }
  return cost;
}

struct GnResult {
  CwPose pose;
  double cost;
  std::vector<double> costs;
};

GnResult gauss_newton(CwPose pose, const std::vector<Vec3>& world, const std::vector<Vec2>& pixels,
                      const render::CameraModel& cam, const VoOptions& opt) {
  GnResult res{pose, reprojection_cost(pose, world, pixels, cam), {}};
  res.costs.push_back(res.cost);
  for (int iter = 0; iter < opt.max_gn_iterations; ++iter) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i = 0; i < world.size(); ++i) {
      const Vec3 pc = res.pose.r * world[i] + res.pose.t;
      if (!(pc.z() > 1e-9)) continue;
      const double iz = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz, 0.0, cam.fy * iz,
          -cam.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = -skew(pc);
      dp.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = dproj * dp;
      const Vec2 r = cam.project(pc) - pixels[i];
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    const Vec6 step = h.ldlt().solve(-g);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool accepted = false;
    CwPose trial;
    for (int halving = 0; halving < 30; ++halving) {
      const Vec6 d = scale * step;
      const Mat3 dr = so3_exp<double>(d.head<3>());
      trial = {dr * res.pose.r, dr * res.pose.t + d.tail<3>()};
      const double c = reprojection_cost(trial, world, pixels, cam);
      if (c <= res.cost) {
        res.pose = trial;
        res.cost = c;
        res.costs.push_back(c);
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    // Re-orthonormalize to keep det(R) = +1 to roundoff.
    Eigen::JacobiSVD<Mat3> svd(res.pose.r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    res.pose.r = svd.matrixU() * svd.matrixV().transpose();
    if (!accepted || (scale * step).norm() < opt.gn_step_tolerance) break;
  }
  return res;
}

void gather(const render::Frame& frame, const MapPoints& map, std::vector<Vec3>& world,
            std::vector<Vec2>& pixels, std::vector<int>& ids) {
  for (const auto& o : frame.observations) {
    auto it = map.find(o.id);
    if (it == map.end()) continue;
    world.push_back(it->second.position);
    pixels.emplace_back(o.u, o.v);
    ids.push_back(o.id);
  }
}

}  // namespace

std::string to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::kInitialized: return "initialized";
    case TrackStatus::kTracked: return "tracked";
    case TrackStatus::kLost: return "lost";
  }
  return "lost";
}

std::vector<Correspondence> match(const render::Frame& a, const render::Frame& b,
                                  const render::CameraModel& camera) {
  std::map<int, Vec2> in_b;
  for (const auto& o : b.observations) in_b.emplace(o.id, Vec2(o.u, o.v));
  std::vector<Correspondence> out;
  for (const auto& o : a.observations) {
    auto it = in_b.find(o.id);
    if (it == in_b.end()) continue;
    out.push_back({o.id, camera.normalize(Vec2(o.u, o.v)), camera.normalize(it->second)});
  }
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.id < r.id; });
  return out;
}

Mat3 essential_eight_point(const std::vector<Correspondence>& corr) {
  if (corr.size() < 8)
    throw Error("InsufficientCorrespondences",
                std::to_string(corr.size()) + " correspondences, need 8");
  std::vector<Vec2> pa, pb;
  for (const auto& c : corr) {
    pa.push_back(c.a);
    pb.push_back(c.b);
  }
  const Mat3 ta = conditioning(pa);
  const Mat3 tb = conditioning(pb);
  Eigen::MatrixXd a(corr.size(), 9);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Vec3 p = ta * pa[i].homogeneous();
    const Vec3 q = tb * pb[i].homogeneous();
    a.row(static_cast<Eigen::Index>(i)) << q.x() * p.x(), q.x() * p.y(), q.x() * p.z(),
        q.y() * p.x(), q.y() * p.y(), q.y() * p.z(), q.z() * p.x(), q.z() * p.y(),
        q.z() * p.z();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> f = svd.matrixV().col(8);
  Mat3 fn;
  fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  return project_to_essential(tb.transpose() * fn * ta);
}

std::vector<Motion> decompose_essential(const Mat3& e) {
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Mat3 w;
  w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2);
  return {{r1, t}, {r1, -t}, {r2, t}, {r2, -t}};
}

Vec3 triangulate_dlt(const Mat3& r_a, const Vec3& t_a, const Vec2& x_a, const Mat3& r_b,
                     const Vec3& t_b, const Vec2& x_b) {
  Mat34 pa, pb;
  pa << r_a, t_a;
  pb << r_b, t_b;
  Eigen::Matrix4d a;
  a.row(0) = x_a.x() * pa.row(2) - pa.row(0);
  a.row(1) = x_a.y() * pa.row(2) - pa.row(1);
  a.row(2) = x_b.x() * pb.row(2) - pb.row(0);
  a.row(3) = x_b.y() * pb.row(2) - pb.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  return x.head<3>() / x(3);
}

double median_parallax_deg(const std::vector<Correspondence>& corr) {
  if (corr.empty()) return 0.0;
  Mat3 b = Mat3::Zero();
  std::vector<Vec3> da, db;
  for (const auto& c : corr) {
    da.push_back(c.a.homogeneous().normalized());
    db.push_back(c.b.homogeneous().normalized());
    b += da.back() * db.back().transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  const double d = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = u * Vec3(1.0, 1.0, d).asDiagonal() * v.transpose();
  std::vector<double> angles;
  angles.reserve(corr.size());
  for (std::size_t i = 0; i < corr.size(); ++i) angles.push_back(ray_angle(da[i], r * db[i]));
  return rad_to_deg(median(std::move(angles)));
}

namespace {

// Signed Sampson residual of x_b^T [t]x R x_a over unit t.
double sampson_signed(const Mat3& e, const Vec2& a, const Vec2& b) {
  const Vec3 ea = e * a.homogeneous();
  const Vec3 etb = e.transpose() * b.homogeneous();
  const double den = ea.head<2>().squaredNorm() + etb.head<2>().squaredNorm();
  return den > 0.0 ? b.homogeneous().dot(ea) / std::sqrt(den) : 0.0;
}

// Gauss-Newton on the Sampson error over the five relative-pose degrees of
// freedom (x_b = R x_a + t, |t| = 1). Forward-difference Jacobian.
Motion refine_relative_pose(Motion m, const std::vector<Correspondence>& corr, int iterations) {
  using Vec5 = Eigen::Matrix<double, 5, 1>;
  auto basis = [](const Vec3& t) {
    Vec3 u = t.unitOrthogonal();
    return std::pair<Vec3, Vec3>{u, t.cross(u)};
  };
  auto apply = [&](const Motion& base, const Vec5& d) {
    const auto [u, w] = basis(base.translation);
    Motion out;
    out.rotation = so3_exp<double>(d.head<3>()) * base.rotation;
    out.translation = (base.translation + d(3) * u + d(4) * w).normalized();
    return out;
  };
  auto residuals = [&](const Motion& mm) {
    const Mat3 e = skew(mm.translation) * mm.rotation;
    Eigen::VectorXd r(static_cast<Eigen::Index>(corr.size()));
    for (std::size_t i = 0; i < corr.size(); ++i)
      r(static_cast<Eigen::Index>(i)) = sampson_signed(e, corr[i].a, corr[i].b);
    return r;
  };
  Eigen::VectorXd r = residuals(m);
  double cost = r.squaredNorm();
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd j(r.size(), 5);
    for (int k = 0; k < 5; ++k) {
      Vec5 d = Vec5::Zero();
      d(k) = 1e-7;
      j.col(k) = (residuals(apply(m, d)) - r) / 1e-7;
    }
    const Vec5 step = (j.transpose() * j).ldlt().solve(-(j.transpose() * r));
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h < 20 && !accepted; ++h, scale *= 0.5) {
      const Motion trial = apply(m, scale * step);
      const Eigen::VectorXd rt = residuals(trial);
      if (rt.squaredNorm() < cost) {
        m = trial;
        r = rt;
        cost = rt.squaredNorm();
        accepted = true;
      }
    }
    if (!accepted || scale * step.norm() < 1e-12) break;
  }
  Eigen::JacobiSVD<Mat3> svd(m.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  m.rotation = svd.matrixU() * svd.matrixV().transpose();
  return m;
}

}  // namespace

TwoViewResult initialize_two_view(const render::Frame& a, const render::Frame& b,
                                  const render::CameraModel& camera, double noise_sigma,
                                  const VoOptions& opt) {
  const auto corr = match(a, b, camera);
  if (corr.size() < 8)
    throw Error("InsufficientCorrespondences",
                std::to_string(corr.size()) + " shared landmarks, need 8");
  const double focal = 0.5 * (camera.fx + camera.fy);

  // Parallax is what a pure rotation cannot explain. Sideways motion past
  // distant points is largely absorbed by a small rotation, so the raw
  // triangulation angle overstates how well the pair constrains depth.
  TwoViewResult res;
  res.parallax_deg = median_parallax_deg(corr);
  if (res.parallax_deg < opt.parallax_threshold_deg)
    throw Error("InsufficientParallax", "median parallax " + std::to_string(res.parallax_deg) +
                                            " deg < " +
                                            std::to_string(opt.parallax_threshold_deg));

  const bool ransac = opt.solver == VoOptions::Solver::kRansac ||
                      (opt.solver == VoOptions::Solver::kAuto && noise_sigma > 0.0);
  std::vector<Correspondence> inliers = corr;
  Mat3 e = essential_eight_point(corr);
  if (ransac) {
    // Residuals are Sampson distances; with Gaussian pixel noise in both
    // images their spread is about sqrt(2) sigma.
    const double thresh_px = std::max(opt.ransac_threshold_px, 2.5 * std::sqrt(2.0) * noise_sigma);
    const double thresh_sq = std::pow(thresh_px / focal, 2);
    auto collect = [&](const Mat3& cand) {
      std::vector<Correspondence> out;
      for (const auto& c : corr)
        if (sampson_sq(cand, c.a, c.b) < thresh_sq) out.push_back(c);
      return out;
    };
    Rng rng(opt.ransac_seed);
    std::vector<std::size_t> idx(corr.size());
    std::size_t best = 0;
    Mat3 best_e = e;
    for (int it = 0; it < opt.ransac_iterations; ++it) {
      std::iota(idx.begin(), idx.end(), 0);
      std::vector<Correspondence> sample;
      for (std::size_t k = 0; k < 8; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size() - k));
        std::swap(idx[k], idx[std::min(j, idx.size() - 1)]);
        sample.push_back(corr[idx[k]]);
      }
      const Mat3 cand = essential_eight_point(sample);
      const std::size_t n = collect(cand).size();
      if (n > best) {
        best = n;
        best_e = cand;
      }
    }
    // Local optimization: refit on the consensus set until it stops growing.
    inliers = collect(best_e);
    e = best_e;
    for (int round = 0; round < 10 && inliers.size() >= 8; ++round) {
      const Mat3 refit = essential_eight_point(inliers);
      auto grown = collect(refit);
      if (grown.size() < inliers.size()) break;
      const bool same = grown.size() == inliers.size();
      e = refit;
      inliers = std::move(grown);
      if (same) break;
    }
    if (inliers.size() < 8)
      throw Error("InsufficientCorrespondences",
                  std::to_string(inliers.size()) + " RANSAC inliers, need 8");
  }

  auto in_front = [&](const Motion& m) {
    std::size_t n = 0;
    for (const auto& c : inliers) {
      const Vec3 x = triangulate_dlt(Mat3::Identity(), Vec3::Zero(), c.a, m.rotation,
                                     m.translation, c.b);
      if (x.z() > 0.0 && (m.rotation * x + m.translation).z() > 0.0) ++n;
    }
    return n;
  };
  const auto candidates = decompose_essential(e);
  std::size_t best_count = 0;
  std::optional<Motion> best;
  for (const auto& m : candidates) {
    const std::size_t n = in_front(m);
    if (n > best_count) {
      best_count = n;
      best = m;
    }
  }
  if (!best || 2 * best_count < inliers.size())
    throw Error("CheiralityAmbiguous", "no essential-matrix decomposition places the majority "
                                       "of points in front of both cameras");
  if (noise_sigma > 0.0) {
    const Motion refined = refine_relative_pose(*best, inliers, opt.max_gn_iterations);
    if (2 * in_front(refined) >= inliers.size()) best = refined;
  }

  res.essential = skew(best->translation) * best->rotation;
  res.rotation = best->rotation.transpose();
  res.translation = (-(best->rotation.transpose() * best->translation)).normalized();
  // Triangulate with the normalized baseline.
  const Mat3 r_b = best->rotation;
  const Vec3 t_b = -(r_b * res.translation);
  for (const auto& c : inliers) {
    const Vec3 x = triangulate_dlt(Mat3::Identity(), Vec3::Zero(), c.a, r_b, t_b, c.b);
    if (!x.allFinite() || !(x.z() > 0.0) || !((r_b * x + t_b).z() > 0.0)) continue;
    res.points.emplace(c.id, MapPoint{c.id, x, 2});
    res.inliers.push_back(c.id);
  }
  return res;
}

std::optional<CameraPose> pnp_dlt(const std::vector<Vec3>& world, const std::vector<Vec2>& normalized) {
  const std::size_t n = world.size();
  if (n < 6 || normalized.size() != n) return std::nullopt;
  Vec3 c = Vec3::Zero();
  for (const auto& p : world) c += p;
  c /= static_cast<double>(n);
  double d = 0.0;
  for (const auto& p : world) d += (p - c).norm();
  d /= static_cast<double>(n);
  if (!(d > 0.0)) return std::nullopt;
  const double s = std::sqrt(3.0) / d;
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s;
  t3.topRightCorner<3, 1>() = -s * c;
  const Mat3 t2 = conditioning(normalized);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector4d x = t3 * world[i].homogeneous();
    const Vec3 uv = t2 * normalized[i].homogeneous();
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 4>(r, 0) = x.transpose();
    a.block<1, 4>(r, 8) = -uv.x() * x.transpose();
    a.block<1, 4>(r + 1, 4) = x.transpose();
    a.block<1, 4>(r + 1, 8) = -uv.y() * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(10) > 1e-9 * sv(0))) return std::nullopt;
  const Eigen::Matrix<double, 12, 1> v = svd.matrixV().col(11);
  Mat34 pn;
  pn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8), v(9), v(10), v(11);
  Mat34 p = t2.inverse() * pn * t3;
  Mat3 m = p.leftCols<3>();
  if (m.determinant() < 0.0) {
    p = -p;
    m = -m;
  }
  Eigen::JacobiSVD<Mat3> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0)) return std::nullopt;
  const Mat3 r = msvd.matrixU() * msvd.matrixV().transpose();
  const Vec3 t = p.col(3) / scale;
  return to_wc({r, t});
}

TrackResult track_frame(const render::Frame& frame, const MapPoints& map,
                        const render::CameraModel& camera, const CameraPose& prev_pose,
                        const VoOptions& opt) {
  TrackResult lost{prev_pose, TrackStatus::kLost, 0, 0.0, {}};
  std::vector<Vec3> world;
  std::vector<Vec2> pixels;
  std::vector<int> ids;
  gather(frame, map, world, pixels, ids);
  lost.used_points = static_cast<int>(world.size());
  if (world.size() < 4) return lost;

  auto solve = [&](const std::vector<Vec3>& w, const std::vector<Vec2>& px,
                   const CwPose& fallback) {
    GnResult best = gauss_newton(fallback, w, px, camera, opt);
    std::vector<Vec2> norm;
    norm.reserve(px.size());
    for (const auto& p : px) norm.push_back(camera.normalize(p));
    if (auto init = pnp_dlt(w, norm)) {
      GnResult from_dlt = gauss_newton(to_cw(*init), w, px, camera, opt);
      if (from_dlt.cost < best.cost) best = std::move(from_dlt);
    }
    return best;
  };

  GnResult res = solve(world, pixels, to_cw(prev_pose));
  std::vector<Vec3> kept_w;
  std::vector<Vec2> kept_px;
  for (std::size_t i = 0; i < world.size(); ++i) {
    const Vec3 pc = res.pose.r * world[i] + res.pose.t;
    if (pc.z() > 1e-9 && (camera.project(pc) - pixels[i]).norm() <= opt.outlier_reject_px) {
      kept_w.push_back(world[i]);
      kept_px.push_back(pixels[i]);
    }
  }
  if (kept_w.size() < 4) return lost;
  if (kept_w.size() < world.size()) res = solve(kept_w, kept_px, res.pose);

  TrackResult out;
  out.pose = to_wc(res.pose);
  out.used_points = static_cast<int>(kept_w.size());
  out.rms_px = std::sqrt(2.0 * res.cost / static_cast<double>(kept_w.size()));
  out.costs = std::move(res.costs);
  if (!(out.rms_px <= opt.max_rms_px)) {
    lost.rms_px = out.rms_px;
    return lost;
  }
  return out;
}

VoResult estimate_trajectory(const render::ObservationSequence& obs, const VoOptions& opt) {
  const auto& frames = obs.frames;
  if (frames.size() < 2)
    throw Error("InitializationFailed", "need at least two frames");
  const auto& cam = obs.camera;

  std::optional<TwoViewResult> init;
  std::size_t init_frame = 0;
  for (std::size_t b = 1; b < frames.size() && !init; ++b) {
    try {
      init = initialize_two_view(frames[0], frames[b], cam, obs.noise_sigma, opt);
      init_frame = b;
    } catch (const Error& e) {
      if (e.kind() != "InsufficientParallax" && e.kind() != "InsufficientCorrespondences" &&
          e.kind() != "CheiralityAmbiguous")
        throw;
    }
  }
  if (!init)
    throw Error("InitializationFailed",
                "no frame reaches " + std::to_string(opt.parallax_threshold_deg) +
                    " deg median parallax against frame 0");

  VoResult result;
  MapPoints& map = result.map;
  map = std::move(init->points);
  auto& poses = result.trajectory.poses;
  result.trajectory.init_frame = init_frame;
  poses.resize(frames.size());
  poses[0] = {frames[0].t, CameraPose{}, TrackStatus::kInitialized};
  poses[init_frame] = {frames[init_frame].t, CameraPose{init->rotation, init->translation},
                       TrackStatus::kInitialized};

  // Every sighting of every landmark from usable frames, with the running
  // normal equations of the N-view linear triangulation.
  struct Sighting {
    std::size_t frame;
    Vec2 normalized;
  };
  struct LandmarkTrack {
    std::vector<Sighting> sightings;
    Eigen::Matrix4d normal = Eigen::Matrix4d::Zero();
  };
  // Frame of the latest sighting, for detecting landmarks that come back
  // into view after drift has accumulated.
  std::map<int, std::size_t> last_seen;
  std::map<int, LandmarkTrack> tracks;
  const double min_angle = deg_to_rad(opt.triangulation_parallax_deg);

  auto add_sighting = [&](LandmarkTrack& tr, std::size_t frame, const Vec2& x) {
    tr.sightings.push_back({frame, x});
    const CwPose c = to_cw(poses[frame].pose);
    Mat34 p;
    p << c.r, c.t;
    const Eigen::Matrix<double, 1, 4> r0 = x.x() * p.row(2) - p.row(0);
    const Eigen::Matrix<double, 1, 4> r1 = x.y() * p.row(2) - p.row(1);
    tr.normal.noalias() += r0.transpose() * r0 + r1.transpose() * r1;
  };

  // Positive depth and bounded reprojection error in every supporting frame.
  auto consistent = [&](const LandmarkTrack& tr, const Vec3& x) {
    if (!x.allFinite()) return false;
    for (const auto& s : tr.sightings) {
      const Vec3 pc = poses[s.frame].pose.to_camera(x);
      if (!(pc.z() > render::kMinDepth)) return false;
      if ((cam.project(pc) - cam.project(s.normalized.homogeneous())).norm() > opt.outlier_reject_px)
        return false;
    }
    return true;
  };

  // Linear N-view solution polished by Gauss-Newton on the normalized-plane
  // reprojection error with the poses held fixed.
  auto solve_track = [&](const LandmarkTrack& tr) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(tr.normal);
    const Eigen::Vector4d v = es.eigenvectors().col(0);
    Vec3 x = v.head<3>() / v(3);
    auto cost = [&](const Vec3& p) {
      double c = 0.0;
      for (const auto& s : tr.sightings) {
        const Vec3 pc = poses[s.frame].pose.to_camera(p);
        if (!(pc.z() > 1e-9)) return std::numeric_limits<double>::infinity();
        c += (pc.head<2>() / pc.z() - s.normalized).squaredNorm();
      }
      return c;
    };
    double c = cost(x);
    if (!std::isfinite(c) || !opt.geometric_triangulation) return x;
    for (int iter = 0; iter < 10; ++iter) {
      Mat3 h = Mat3::Zero();
      Vec3 g = Vec3::Zero();
      for (const auto& s : tr.sightings) {
        const Mat3 rt = poses[s.frame].pose.rotation.transpose();
        const Vec3 pc = rt * (x - poses[s.frame].pose.position);
        const double iz = 1.0 / pc.z();
        Eigen::Matrix<double, 2, 3> d;
        d << iz, 0.0, -pc.x() * iz * iz, 0.0, iz, -pc.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> j = d * rt;
        const Vec2 r = pc.head<2>() * iz - s.normalized;
        h.noalias() += j.transpose() * j;
        g.noalias() += j.transpose() * r;
      }
      const Vec3 step = h.ldlt().solve(-g);
      if (!step.allFinite()) break;
      const double trial = cost(x + step);
      if (!(trial < c)) break;
      x += step;
      const bool done = c - trial < 1e-12 * c;
      c = trial;
      if (done) break;
    }
    return x;
  };

  for (const auto& [id, mp] : map) {
    (void)mp;
    for (const auto& o : frames[init_frame].observations)
      if (o.id == id) add_sighting(tracks[id], init_frame, cam.normalize(Vec2(o.u, o.v)));
  }

  auto stale = [&](int id, std::size_t i) {
    auto it = last_seen.find(id);
    return it != last_seen.end() && i - it->second > opt.stale_after_frames;
  };

  auto absorb = [&](std::size_t i) {
    for (const auto& o : frames[i].observations) {
      auto& tr = tracks[o.id];
      if (i == init_frame && map.count(o.id)) {
        last_seen[o.id] = i;
        continue;  // sighting already recorded at bootstrap
      }
      if (stale(o.id, i)) {
        // Without loop closure an old estimate disagrees with the drifted
        // present; start the landmark over.
        map.erase(o.id);
        tr = LandmarkTrack{};
      }
      last_seen[o.id] = i;
      add_sighting(tr, i, cam.normalize(Vec2(o.u, o.v)));
      auto mit = map.find(o.id);
      if (mit != map.end()) {
        ++mit->second.observations;
        if (opt.refine_points && tr.sightings.size() >= 3) {
          const Vec3 x = solve_track(tr);
          if (consistent(tr, x)) mit->second.position = x;
        }
        continue;
      }
      if (tr.sightings.size() < 2) continue;
      const Sighting& first = tr.sightings.front();
      const Sighting& last = tr.sightings.back();
      const Vec3 ray_a = poses[first.frame].pose.rotation * first.normalized.homogeneous();
      const Vec3 ray_b = poses[last.frame].pose.rotation * last.normalized.homogeneous();
      if (ray_angle(ray_a, ray_b) < min_angle) continue;
      Vec3 x;
      if (tr.sightings.size() == 2) {
        const CwPose ca = to_cw(poses[first.frame].pose), cb = to_cw(poses[last.frame].pose);
        x = triangulate_dlt(ca.r, ca.t, first.normalized, cb.r, cb.t, last.normalized);
      } else {
        x = solve_track(tr);
      }
      if (consistent(tr, x)) {
        map.emplace(o.id, MapPoint{o.id, x, static_cast<int>(tr.sightings.size())});
      } else if (tr.sightings.size() == 2) {
        tr = LandmarkTrack{};
        add_sighting(tr, i, cam.normalize(Vec2(o.u, o.v)));
      }
    }
  };

  absorb(0);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (i != init_frame) {
      MapPoints active;
      for (const auto& o : frames[i].observations) {
        auto it = map.find(o.id);
        if (it != map.end() && !stale(o.id, i)) active.insert(*it);
      }
      const TrackResult tr = track_frame(frames[i], active, cam, poses[i - 1].pose, opt);
      poses[i] = {frames[i].t, tr.pose, tr.status};
    }
    if (poses[i].status != TrackStatus::kLost) absorb(i);
  }
  return result;
}

Mat3 gauge_to_z_up() {
  Mat3 g;
  g << 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0;
  return g;
}

traj::Trajectory to_trajectory(const EstimatedTrajectory& est, double dt,
                               const std::optional<Sim3>& alignment) {
  const Sim3 map_to = alignment ? *alignment : Sim3{1.0, gauge_to_z_up(), Vec3::Zero()};
  std::vector<traj::Pose> poses;
  poses.reserve(est.poses.size());
  double last_yaw = 0.0;
  for (const auto& p : est.poses) {
    const Vec3 forward = map_to.rotation * p.pose.rotation.col(2);
    if (std::hypot(forward.x(), forward.y()) > 1e-12) last_yaw = std::atan2(forward.y(), forward.x());
    poses.push_back({p.t, map_to(p.pose.position), wrap_angle(last_yaw)});
  }
  return traj::from_poses(std::move(poses), dt);
}

ExtractedStates to_states(const EstimatedTrajectory& est, double dt,
                          const std::optional<Sim3>& alignment) {
  const auto tracked = std::count_if(est.poses.begin(), est.poses.end(), [](const auto& p) {
    return p.status != TrackStatus::kLost;
  });
  if (tracked < 2) throw Error("TooShort", "need at least two tracked poses");
  ExtractedStates out;
  out.frame = alignment ? StateFrame::kAligned : StateFrame::kGauge;
  out.trajectory = to_trajectory(est, dt, alignment);
  out.pairs = traj::state_action_pairs(out.trajectory);
  return out;
}

std::vector<std::string> status_column(const EstimatedTrajectory& est) {
  std::vector<std::string> out;
  out.reserve(est.poses.size());
  for (const auto& p : est.poses) out.push_back(to_string(p.status));
  return out;
}

nlohmann::json to_json(const MapPoints& map) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [id, p] : map)
    pts.push_back({{"id", id},
                   {"position", {p.position.x(), p.position.y(), p.position.z()}},
                   {"observations", p.observations}});
  return {{"frame", "gauge"}, {"points", std::move(pts)}};
}

}  // namespace cinefly::vo
