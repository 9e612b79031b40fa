#include <doctest.h>

#include "cinefly/eval_metrics.hpp"
#include "support.hpp"

using namespace cinefly;
using namespace cinefly::eval;

namespace {

Eigen::Matrix3Xd random_points(Rng& rng, int n) {
  Eigen::Matrix3Xd p(3, n);
  for (int i = 0; i < n; ++i) p.col(i) = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  return p;
}

traj::Trajectory transformed(const traj::Trajectory& tr, const Sim3& s) {
  std::vector<traj::Pose> poses = tr.samples;
  for (auto& p : poses) p.position = s(p.position);
  return traj::from_poses(poses, tr.dt);
}

}  // namespace

TEST_CASE("umeyama identity") {
  Rng rng(1);
  const auto p = random_points(rng, 20);
  const auto s = align_umeyama(p, p, true);
  CHECK(std::abs(s.scale - 1.0) < 1e-12);
  CHECK((s.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(s.translation.norm() < 1e-12);
}

TEST_CASE("umeyama recovers random similarities") {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const auto p = random_points(rng, 10 + k % 20);
    Sim3 truth;
    truth.scale = rng.uniform(0.1, 10);
    truth.rotation = so3_exp(Vec3(Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)) / 1.8));
    truth.translation = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto s = align_umeyama(p, truth.apply(p), true);
    CHECK(std::abs(s.scale - truth.scale) < 1e-9 * truth.scale);
    CHECK((s.rotation - truth.rotation).norm() < 1e-9);
    CHECK((s.translation - truth.translation).norm() < 1e-9);
  }
}

TEST_CASE("umeyama handles reflections and degeneracy") {
  Rng rng(3);
  const auto p = random_points(rng, 10);
  Eigen::Matrix3Xd mirrored = p;
  mirrored.row(0) *= -1;
  const auto s = align_umeyama(p, mirrored, false);
  CHECK(s.rotation.determinant() == doctest::Approx(1.0));
  CHECK_THROWS_AS(align_umeyama(Eigen::Matrix3Xd(p.leftCols(2)), Eigen::Matrix3Xd(p.leftCols(2)), true), Error);
  const Eigen::Matrix3Xd same = Vec3(1, 2, 3).replicate(1, 5);
  CHECK_THROWS_AS(align_umeyama(same, same, true), Error);
}

TEST_CASE("compare identical trajectories") {
  const auto ref = testsupport::default_orbit();
  for (auto mode : {AlignMode::kNone, AlignMode::kSe3, AlignMode::kSim3}) {
    const auto r = compare(ref, ref, mode);
    CHECK(r.ate_rmse < 1e-12);
    CHECK(r.yaw_rmse < 1e-12);
    CHECK(r.path_length_ratio == doctest::Approx(1.0));
    CHECK(r.associated == ref.size());
  }
}

TEST_CASE("alignment modes remove the right transformations") {
  const auto ref = testsupport::default_orbit();
  Sim3 rigid;
  rigid.rotation = rot_z(0.7);
  rigid.translation = Vec3(1, -2, 0.5);
  const auto moved = transformed(ref, rigid);
  CHECK(compare(ref, moved, AlignMode::kNone).ate_rmse > 1.0);
  CHECK(compare(ref, moved, AlignMode::kSe3).ate_rmse < 1e-9);

  Sim3 scaled = rigid;
  scaled.scale = 2.5;
  const auto grown = transformed(ref, scaled);
  CHECK(compare(ref, grown, AlignMode::kSe3).ate_rmse > 0.1);
  const auto r = compare(ref, grown, AlignMode::kSim3);
  CHECK(r.ate_rmse < 1e-9);
  CHECK(r.alignment.scale == doctest::Approx(1 / 2.5));
}

TEST_CASE("constant offset oracle") {
  const auto ref = testsupport::default_orbit();
  Sim3 shift;
  shift.translation = Vec3(0, 0, 0.3);
  const auto r = compare(ref, transformed(ref, shift), AlignMode::kNone);
  CHECK(r.ate_rmse == doctest::Approx(0.3));
  CHECK(r.per_axis_rmse.z() == doctest::Approx(0.3));
  CHECK(r.max_deviation == doctest::Approx(0.3));
}

TEST_CASE("hold candidate falls back to translation-only") {
  const auto hold = traj::synthesize(grammar::parse("target(0,0,1); hold for 2s"), {0, Vec3(3, 0, 1), kPi})
                        .trajectory;
  const auto r = compare(hold, hold, AlignMode::kSim3);
  CHECK(r.alignment_fallback);
  CHECK(r.ate_rmse < 1e-12);
}

TEST_CASE("non-overlapping time ranges") {
  const auto ref = testsupport::default_orbit();
  auto later = ref.samples;
  for (auto& p : later) p.t += 100;
  try {
    compare(ref, traj::from_poses(later, ref.dt), AlignMode::kNone);
    FAIL("expected NoOverlap");
  } catch (const Error& e) {
    CHECK(e.kind() == "NoOverlap");
  }
}

TEST_CASE("align mode parsing and report json") {
  CHECK(parse_align_mode("sim3") == AlignMode::kSim3);
  CHECK(to_string(AlignMode::kSe3) == "se3");
  CHECK_THROWS_AS(parse_align_mode("affine"), Error);
  const auto ref = testsupport::default_orbit();
  const auto j = to_json(compare(ref, ref, AlignMode::kSim3));
  CHECK(j.contains("ate_rmse"));
  CHECK(j.contains("alignment"));
}

TEST_CASE("overlay svg structure") {
  const auto ref = testsupport::default_orbit();
  const std::string svg = render_overlay(&ref, &ref, &ref, Vec3(0, 0, 1));
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
    return n;
  };
  CHECK(count("<polyline") == 3);
  CHECK(count("<circle") == 1);
  CHECK(render_overlay(&ref, nullptr, nullptr, std::nullopt).find("<circle") == std::string::npos);
  CHECK_THROWS_AS(render_overlay(nullptr, nullptr, nullptr, std::nullopt), Error);
}

TEST_CASE("aligned errors are invariant to transforming the candidate") {
  const auto ref = testsupport::default_orbit();
  // A distorted candidate so the aligned error is nonzero.
  auto poses = ref.samples;
  for (auto& p : poses) p.position += Vec3(0.1 * std::sin(3 * p.t), 0.05 * std::cos(p.t), 0.02 * p.t);
  const auto cand = traj::from_poses(poses, ref.dt);
  const double se3 = compare(ref, cand, AlignMode::kSe3).ate_rmse;
  const double sim3 = compare(ref, cand, AlignMode::kSim3).ate_rmse;
  CHECK(se3 > 0.01);
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    Sim3 t;
    t.rotation = so3_exp(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)));
    t.translation = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    CHECK(std::abs(compare(ref, transformed(cand, t), AlignMode::kSe3).ate_rmse - se3) < 1e-9);
    t.scale = rng.uniform(0.2, 5);
    CHECK(std::abs(compare(ref, transformed(cand, t), AlignMode::kSim3).ate_rmse - sim3) < 1e-9);
  }
}

TEST_CASE("yaw error ignores whole turns") {
  const auto ref = testsupport::default_orbit();
  auto poses = ref.samples;
  for (auto& p : poses) p.yaw += 0.1;
  const auto cand = traj::from_poses(poses, ref.dt);
  for (auto& p : poses) p.yaw += kTwoPi;
  const auto turned = traj::from_poses(poses, ref.dt);
  CHECK(compare(ref, cand, AlignMode::kNone).yaw_rmse == doctest::Approx(0.1));
  CHECK(std::abs(compare(ref, turned, AlignMode::kNone).yaw_rmse - compare(ref, cand, AlignMode::kNone).yaw_rmse) <
        1e-12);
}

TEST_CASE("compare of a trajectory with itself is the zero report") {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    std::vector<traj::Pose> poses;
    for (int k = 0; k < 50; ++k)
      poses.push_back({k * 0.1, Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3)), rng.uniform(-kPi, kPi)});
    const auto tr = traj::from_poses(poses, 0.1);
    for (auto mode : {AlignMode::kNone, AlignMode::kSe3, AlignMode::kSim3}) {
      const auto r = compare(tr, tr, mode);
      CHECK(r.ate_rmse < 1e-9);
      CHECK(r.max_deviation < 1e-9);
      CHECK(r.yaw_rmse < 1e-9);
    }
  }
}

TEST_CASE("aligning back recovers the inverse transform") {
  Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_points(rng, 12);
    Sim3 t;
    t.scale = rng.uniform(0.2, 5);
    t.rotation = so3_exp(Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)));
    t.translation = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto inv = t.inverse();
    const auto s = align_umeyama(t.apply(p), p, true);
    CHECK(std::abs(s.scale - inv.scale) < 1e-9);
    CHECK((s.rotation - inv.rotation).norm() < 1e-9);
    CHECK((s.translation - inv.translation).norm() < 1e-9);
  }
}
