#include <doctest.h>

#include <chrono>

#include "csepose/fit/posefit.hpp"
#include "csepose/geom/raycast.hpp"

using namespace csepose;
using namespace csepose::fit;
using namespace csepose::geom;

namespace {

std::vector<Vec3> random_cloud(Rng& rng, int n, double extent = 0.5) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                     rng.uniform(-extent, extent));
  }
  return pts;
}

ScaledPose random_pose(Rng& rng) {
  ScaledPose pose;
  pose.rigid.rotation = random_rotation(rng);
  pose.rigid.translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.5;
  pose.scale = rng.uniform(0.8, 1.2);
  return pose;
}

}  // namespace

TEST_CASE("correspondence selection with threshold and fallback") {
  std::vector<double> conf = {0.9, 0.2, 0.6, 1.0};
  auto sel = select_correspondences(conf, 0.5);
  CHECK(!sel.fallback);
  REQUIRE(sel.indices.size() == 3);
  CHECK(sel.indices[0] == 3);  // sorted by descending confidence
  CHECK(sel.indices[1] == 0);
  CHECK(sel.indices[2] == 2);

  // all retained at full confidence
  std::vector<double> ones(10, 1.0);
  CHECK(select_correspondences(ones, 0.5).indices.size() == 10);

  // nothing above alpha: top-50 fallback
  std::vector<double> low(120, 0.1);
  auto fb = select_correspondences(low, 0.5);
  CHECK(fb.fallback);
  CHECK(fb.indices.size() == 50);
}

TEST_CASE("lift_depth closed forms and round trip") {
  Camera cam{64, 64, 32, 32, 64, 64};
  std::vector<double> depth(64 * 64, 0.0);
  std::vector<std::uint8_t> mask(64 * 64, 0);
  // pixel whose center is the principal point: row 31? center convention puts
  // (32,32) on the corner of four pixels; use an explicit pixel instead
  const int r = 10, c = 20;
  depth[static_cast<std::size_t>(r) * 64 + c] = 2.0;
  mask[static_cast<std::size_t>(r) * 64 + c] = 1;
  auto pts = lift_depth(depth, mask, cam);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].x() == doctest::Approx(2.0 * (c + 0.5 - 32) / 64));
  CHECK(pts[0].y() == doctest::Approx(2.0 * (r + 0.5 - 32) / 64));
  CHECK(pts[0].z() == doctest::Approx(2.0));

  // principal-point ray goes straight down the axis
  Camera cam2{64, 64, 20.5, 10.5, 64, 64};
  std::vector<double> d2(64 * 64, 0.0);
  std::vector<std::uint8_t> m2(64 * 64, 0);
  d2[10 * 64 + 20] = 2.0;  // center (20.5, 10.5) == principal point
  m2[10 * 64 + 20] = 1;
  auto p2 = lift_depth(d2, m2, cam2);
  REQUIRE(p2.size() == 1);
  CHECK(p2[0].norm() == doctest::Approx(2.0).epsilon(1e-12));

  // project-then-lift returns the original points within 1e-9
  Rng rng(3);
  int skipped = 0;
  std::vector<double> d3(64 * 64, 0.0);
  std::vector<std::uint8_t> m3(64 * 64, 0);
  std::vector<Vec3> original;
  for (int i = 0; i < 30; ++i) {
    // build points exactly on pixel-center rays so lifting is exact
    const int rr = static_cast<int>(rng.uniform_index(64));
    const int cc = static_cast<int>(rng.uniform_index(64));
    const double z = rng.uniform(1.5, 4.0);
    if (m3[static_cast<std::size_t>(rr) * 64 + cc]) continue;
    const Vec3 p = cam.ray_dir(cc + 0.5, rr + 0.5) * z;
    original.push_back(p);
    d3[static_cast<std::size_t>(rr) * 64 + cc] = z;
    m3[static_cast<std::size_t>(rr) * 64 + cc] = 1;
  }
  std::vector<int> px;
  auto lifted = lift_depth(d3, m3, cam, &skipped, &px);
  REQUIRE(lifted.size() == original.size());
  // lifted points come in raster order; compare as sets via sorting by z
  auto key = [](const Vec3& v) { return std::make_tuple(v.z(), v.x(), v.y()); };
  std::sort(lifted.begin(), lifted.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  std::sort(original.begin(), original.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  for (std::size_t i = 0; i < lifted.size(); ++i) {
    CHECK((lifted[i] - original[i]).norm() < 1e-9 * (1.0 + static_cast<double>(std::abs(original[i].z()))));
  }

  std::vector<std::uint8_t> empty_mask(64 * 64, 0);
  CHECK_THROWS_AS(lift_depth(depth, empty_mask, cam), std::invalid_argument);
}

TEST_CASE("umeyama recovers constructed similarities exactly") {
  Rng rng(7);
  // identity on identical clouds
  auto cloud = random_cloud(rng, 20);
  ScaledPose id = umeyama(cloud, cloud);
  CHECK((id.rigid.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(id.rigid.translation.norm() < 1e-12);
  CHECK(id.scale == doctest::Approx(1.0).epsilon(1e-12));

  // s=2, Rz(90 deg), t=(1,0,0) on 50 random points
  auto pts = random_cloud(rng, 50);
  ScaledPose gt;
  gt.rigid.rotation = axis_angle(Vec3::UnitZ(), M_PI / 2);
  gt.rigid.translation = Vec3(1, 0, 0);
  gt.scale = 2.0;
  std::vector<Vec3> scene;
  for (const auto& p : pts) scene.push_back(gt.apply(p));
  ScaledPose est = umeyama(pts, scene);
  CHECK((est.rigid.rotation - gt.rigid.rotation).norm() < 1e-9);
  CHECK((est.rigid.translation - gt.rigid.translation).norm() < 1e-9);
  CHECK(std::abs(est.scale - 2.0) < 1e-9);

  // mirrored target still yields det +1 (reflection correction branch)
  std::vector<Vec3> mirrored;
  for (const auto& p : pts) mirrored.emplace_back(-p.x(), p.y(), p.z());
  ScaledPose m = umeyama(pts, mirrored);
  CHECK(m.rigid.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));

  // collinear canonical points are rejected
  std::vector<Vec3> line, line_q;
  for (int i = 0; i < 10; ++i) {
    line.emplace_back(i * 0.1, 0, 0);
    line_q.emplace_back(i * 0.1, 0.5, 0);
  }
  CHECK_THROWS_AS(umeyama(line, line_q), std::invalid_argument);
}

TEST_CASE("umeyama exactness over 100 random similarities within 1e-9 and 1s") {
  Rng rng(11);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = random_cloud(rng, 50);
    ScaledPose gt = random_pose(rng);
    std::vector<Vec3> scene;
    for (const auto& p : pts) scene.push_back(gt.apply(p));
    ScaledPose est = umeyama(pts, scene);
    CHECK((est.rigid.rotation - gt.rigid.rotation).norm() < 1e-9);
    CHECK(std::abs(est.scale - gt.scale) / gt.scale < 1e-9);
    CHECK((est.rigid.translation - gt.rigid.translation).norm() < 1e-9);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 1.0);
}

TEST_CASE("umeyama is a local optimum under random perturbations") {
  Rng rng(13);
  auto pts = random_cloud(rng, 40);
  ScaledPose gt = random_pose(rng);
  std::vector<Vec3> scene;
  for (const auto& p : pts) {
    scene.push_back(gt.apply(p) + Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.01);
  }
  ScaledPose est = umeyama(pts, scene);
  auto cost = [&](const ScaledPose& pose) {
    double acc = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) acc += (scene[i] - pose.apply(pts[i])).squaredNorm();
    return acc;
  };
  const double base = cost(est);
  for (int i = 0; i < 100; ++i) {
    ScaledPose wiggle = est;
    wiggle.rigid.rotation =
        est.rigid.rotation * axis_angle(Vec3(rng.normal(), rng.normal(), rng.normal()), 1e-4);
    wiggle.rigid.translation += Vec3(rng.normal(), rng.normal(), rng.normal()) * 1e-5;
    wiggle.scale *= 1.0 + rng.normal() * 1e-5;
    CHECK(cost(wiggle) >= base - 1e-15);
  }
}

TEST_CASE("ransac on a noiseless inlier-only set is exact and deterministic") {
  Rng rng(17);
  auto pts = random_cloud(rng, 60);
  ScaledPose gt = random_pose(rng);
  std::vector<Correspondence> set;
  for (const auto& p : pts) set.push_back({p, gt.apply(p), 1.0});
  RansacConfig cfg;
  cfg.seed = 5;
  PoseEstimate est = ransac_umeyama(set, cfg);
  REQUIRE(est.ok);
  CHECK(est.inlier_ratio == doctest::Approx(1.0));
  CHECK((est.pose.rigid.rotation - gt.rigid.rotation).norm() < 1e-9);
  CHECK((est.pose.rigid.translation - gt.rigid.translation).norm() < 1e-9);

  PoseEstimate again = ransac_umeyama(set, cfg);
  CHECK(again.pose.rigid.rotation == est.pose.rigid.rotation);
  CHECK(again.pose.rigid.translation == est.pose.rigid.translation);
  CHECK(again.pose.scale == est.pose.scale);

  std::vector<Correspondence> tiny(set.begin(), set.begin() + 3);
  PoseEstimate fail = ransac_umeyama(tiny, cfg);
  CHECK(!fail.ok);
  CHECK(!fail.failure.empty());
}

TEST_CASE("ransac robustness: 30 percent outliers over 100 trials") {
  Rng rng(23);
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = random_cloud(rng, 200);
    ScaledPose gt = random_pose(rng);
    std::vector<Correspondence> set;
    Vec3 lo = Vec3::Constant(1e30), hi = -lo;
    for (const auto& p : pts) {
      const Vec3 q = gt.apply(p);
      lo = lo.cwiseMin(q);
      hi = hi.cwiseMax(q);
      set.push_back({p, q, 1.0});
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (i % 10 < 7) {
        for (int c = 0; c < 3; ++c) set[i].scene[c] += rng.normal() * 0.002;  // inlier noise
      } else {
        for (int c = 0; c < 3; ++c) set[i].scene[c] = rng.uniform(lo[c], hi[c]);  // outlier
      }
    }
    RansacConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    PoseEstimate est = ransac_umeyama(set, cfg);
    if (!est.ok) continue;
    const double rot_deg = geodesic_angle(est.pose.rigid.rotation, gt.rigid.rotation) * 180.0 / M_PI;
    const double scale_err = std::abs(est.pose.scale - gt.scale) / gt.scale;
    const double trans_err = (est.pose.rigid.translation - gt.rigid.translation).norm();
    if (rot_deg < 1.0 && scale_err < 0.01 && trans_err < 0.01) ++good;
  }
  CHECK(good >= 95);
}
