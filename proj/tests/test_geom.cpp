#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "csepose/diff/gradcheck.hpp"
#include "csepose/geom/diffgeom.hpp"
#include "csepose/synth/priors.hpp"

using namespace csepose;
using namespace csepose::geom;
using csepose::diff::NdArray;
using csepose::diff::Shape;
using csepose::diff::Tape;
using csepose::diff::Var;

namespace {

Eigen::Matrix<double, 6, 1> make6(double a, double b, double c, double d, double e, double f) {
  Eigen::Matrix<double, 6, 1> r;
  r << a, b, c, d, e, f;
  return r;
}

}  // namespace

TEST_CASE("rotation_from_6d basics") {
  CHECK(rotation_from_6d_plain(make6(1, 0, 0, 0, 1, 0)).isApprox(Mat3::Identity(), 1e-15));
  CHECK(rotation_from_6d_plain(make6(2, 0, 0, 0, 3, 0)).isApprox(Mat3::Identity(), 1e-15));
  CHECK_THROWS_AS(rotation_from_6d_plain(make6(1, 0, 0, 2, 0, 0)), std::invalid_argument);

  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Eigen::Matrix<double, 6, 1> r;
    for (int k = 0; k < 6; ++k) r[k] = rng.normal();
    const Mat3 m = rotation_from_6d_plain(r);
    CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotation_from_6d tape version matches plain and is differentiable") {
  Rng rng(5);
  Eigen::Matrix<double, 6, 1> r;
  for (int k = 0; k < 6; ++k) r[k] = rng.normal();
  Tape t;
  Var rv = t.leaf(NdArray({6}, {r[0], r[1], r[2], r[3], r[4], r[5]}), true);
  Var rot = rotation_from_6d(rv);
  const Mat3 plain = rotation_from_6d_plain(r);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(t.value(rot)[i * 3 + j] == doctest::Approx(plain(i, j)).epsilon(1e-12));
    }
  }
  NdArray rn({6}, {r[0], r[1], r[2], r[3], r[4], r[5]});
  NdArray w = NdArray::zeros({3, 3});
  for (auto& v : w.data) v = rng.uniform(0.3, 1.5);
  const double err = diff::grad_check({rn}, [&w](Tape& tape, const std::vector<Var>& l) {
    return diff::sum(diff::mul(rotation_from_6d(l[0]), tape.constant(w)));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("pinhole projection basics") {
  Camera cam{64, 64, 32, 32, 64, 64};
  cam.validate();
  ScaledPose identity;
  auto pr = project_points(cam, identity, {{0, 0, 1}});
  CHECK(pr[0].valid);
  CHECK(pr[0].pixel.x() == doctest::Approx(32.0));
  CHECK(pr[0].pixel.y() == doctest::Approx(32.0));
  CHECK(pr[0].depth == doctest::Approx(1.0));

  // doubling depth halves offsets from the principal point
  auto p1 = project_points(cam, identity, {{0.25, 0.1, 1}})[0];
  ScaledPose deeper;
  deeper.rigid.translation = Vec3(0, 0, 1);
  auto p2 = project_points(cam, deeper, {{0.25, 0.1, 1}})[0];
  CHECK((p2.pixel - Eigen::Vector2d(32, 32)).norm() ==
        doctest::Approx(0.5 * (p1.pixel - Eigen::Vector2d(32, 32)).norm()).epsilon(1e-12));

  // behind the camera is flagged invalid
  auto pb = project_points(cam, identity, {{0, 0, -1}})[0];
  CHECK(!pb.valid);
}

TEST_CASE("tape projection matches plain projection") {
  Camera cam{48, 52, 30, 34, 64, 64};
  Rng rng(7);
  ScaledPose pose;
  pose.rigid.rotation = random_rotation(rng);
  pose.rigid.translation = Vec3(0.2, -0.1, 3.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(rng.uniform(-.5, .5), rng.uniform(-.5, .5), rng.uniform(-.5, .5));
  auto plain = project_points(cam, pose, pts);

  Tape t;
  NdArray rot = NdArray::zeros({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot[i * 3 + j] = pose.rigid.rotation(i, j);
  Var pv = t.leaf(vertices_to_array(pts), true);
  auto proj = project_points(cam, t.constant(rot),
                             t.constant(NdArray({3}, {0.2, -0.1, 3.0})), pv);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(t.value(proj.pixels)[static_cast<std::int64_t>(2 * i)] ==
          doctest::Approx(plain[i].pixel.x()).epsilon(1e-12));
    CHECK(t.value(proj.pixels)[static_cast<std::int64_t>(2 * i + 1)] ==
          doctest::Approx(plain[i].pixel.y()).epsilon(1e-12));
    CHECK(t.value(proj.depths)[static_cast<std::int64_t>(i)] ==
          doctest::Approx(plain[i].depth).epsilon(1e-12));
  }
}

TEST_CASE("inverse_project returns the surface point under a projected vertex") {
  TriMesh sphere = synth::make_icosphere(2);
  Rng rng(11);
  ScaledPose pose;
  pose.rigid.rotation = random_rotation(rng);
  pose.rigid.translation = Vec3(0.1, -0.2, 2.5);
  pose.scale = 1.1;
  Camera cam{64, 64, 32, 32, 64, 64};
  MeshBvh bvh(sphere.vertices, sphere.faces);
  const auto vis = vertex_visibility([&] {
    TriMesh m = sphere;
    return m;
  }(), pose, cam);

  int checked = 0;
  for (int i = 0; i < sphere.vertex_count() && checked < 25; ++i) {
    if (!vis[static_cast<std::size_t>(i)]) continue;
    const auto pr = project_points(cam, pose, {sphere.vertices[static_cast<std::size_t>(i)]})[0];
    if (!pr.valid || !cam.inside(pr.pixel.x(), pr.pixel.y())) continue;
    auto hit = inverse_project(cam, pose, sphere, bvh, pr.pixel.x(), pr.pixel.y());
    REQUIRE(hit.has_value());
    CHECK((hit->point - sphere.vertices[static_cast<std::size_t>(i)]).norm() < 1e-6);
    ++checked;
  }
  CHECK(checked >= 20);

  // a pixel far outside the silhouette misses
  auto miss = inverse_project(cam, pose, sphere, bvh, 1.0, 1.0);
  CHECK(!miss.has_value());
}

TEST_CASE("ray hitting a shared edge picks the lowest face index") {
  // two faces sharing the edge x=0; the ray hits that edge exactly
  std::vector<Vec3> verts = {{0, -1, 2}, {0, 1, 2}, {-1, 0, 2}, {1, 0, 2}};
  std::vector<std::array<int, 3>> faces = {{0, 1, 2}, {0, 3, 1}};
  MeshBvh bvh(verts, faces);
  auto hit = bvh.nearest_hit(Vec3::Zero(), Vec3(0, 0, 1));
  REQUIRE(hit.has_value());
  CHECK(hit->face == 0);
  // reversed face order must still pick the lower index
  std::vector<std::array<int, 3>> faces2 = {{0, 3, 1}, {0, 1, 2}};
  MeshBvh bvh2(verts, faces2);
  auto hit2 = bvh2.nearest_hit(Vec3::Zero(), Vec3(0, 0, 1));
  REQUIRE(hit2.has_value());
  CHECK(hit2->face == 0);
}

TEST_CASE("visibility on a convex mesh matches the normal-orientation rule") {
  // on a convex polyhedron a vertex is visible exactly when one of its
  // incident faces is front-facing
  TriMesh sphere = synth::make_icosphere(2);
  ScaledPose pose;
  pose.rigid.translation = Vec3(0.05, 0.02, 3.0);
  Camera cam{64, 64, 32, 32, 64, 64};
  const auto vis = vertex_visibility(sphere, pose, cam);

  std::vector<std::uint8_t> oracle(static_cast<std::size_t>(sphere.vertex_count()), 0);
  for (int f = 0; f < sphere.face_count(); ++f) {
    const Vec3 n_scene = pose.rigid.rotation * sphere.face_normal(f);
    Vec3 centroid = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      centroid += pose.apply(sphere.vertices[static_cast<std::size_t>(sphere.faces[static_cast<std::size_t>(f)][k])]);
    }
    centroid /= 3.0;
    if (n_scene.dot(centroid) < 0) {
      for (int k = 0; k < 3; ++k) oracle[static_cast<std::size_t>(sphere.faces[static_cast<std::size_t>(f)][k])] = 1;
    }
  }
  int agree = 0;
  for (int i = 0; i < sphere.vertex_count(); ++i) {
    if (oracle[static_cast<std::size_t>(i)] == vis[static_cast<std::size_t>(i)]) ++agree;
  }
  CHECK(agree == sphere.vertex_count());
}

TEST_CASE("single front-facing triangle is fully visible") {
  TriMesh tri;
  tri.vertices = {{-0.5, -0.5, 0}, {0.5, -0.5, 0}, {0, 0.5, 0}};
  tri.faces = {{0, 1, 2}};
  ScaledPose pose;
  pose.rigid.translation = Vec3(0, 0, 2);
  Camera cam{64, 64, 32, 32, 64, 64};
  const auto vis = vertex_visibility(tri, pose, cam);
  CHECK(vis == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("occluded triangle interior vertices are invisible") {
  TriMesh two;
  // big near triangle, small far triangle centered behind it
  two.vertices = {{-2, -2, 0}, {2, -2, 0}, {0, 3, 0},              // near (z=2 after pose)
                  {-0.2, -0.2, 1}, {0.2, -0.2, 1}, {0, 0.3, 1}};   // far (z=3)
  two.faces = {{0, 1, 2}, {3, 4, 5}};
  ScaledPose pose;
  pose.rigid.translation = Vec3(0, 0, 2);
  Camera cam{64, 64, 32, 32, 64, 64};
  const auto vis = vertex_visibility(two, pose, cam);
  CHECK(vis[0] == 1);
  CHECK(vis[1] == 1);
  CHECK(vis[2] == 1);
  CHECK(vis[3] == 0);
  CHECK(vis[4] == 0);
  CHECK(vis[5] == 0);
}

TEST_CASE("laplacian smoothness closed forms") {
  // planar grid: every interior vertex is the mean of its ring
  TriMesh grid;
  const int n = 5;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) grid.vertices.emplace_back(c, 0.0, r);
  }
  auto vid = [&](int r, int c) { return r * n + c; };
  for (int r = 0; r + 1 < n; ++r) {
    for (int c = 0; c + 1 < n; ++c) {
      grid.faces.push_back({vid(r, c), vid(r, c + 1), vid(r + 1, c + 1)});
      grid.faces.push_back({vid(r, c), vid(r + 1, c + 1), vid(r + 1, c)});
    }
  }
  const LaplacianMatrix lap = build_laplacian(grid);
  // interior vertex residual is zero on the flat grid
  {
    const int i = vid(2, 2);
    Vec3 res = Vec3::Zero();
    for (int j = 0; j < grid.vertex_count(); ++j) {
      res += lap.matrix[static_cast<std::int64_t>(i) * grid.vertex_count() + j] *
             grid.vertices[static_cast<std::size_t>(j)];
    }
    CHECK(res.norm() < 1e-12);
  }
  // displacing one interior vertex by d adds d^2 to its own term
  TriMesh bent = grid;
  const double d = 0.37;
  bent.vertices[static_cast<std::size_t>(vid(2, 2))].y() += d;
  const int i = vid(2, 2);
  Vec3 res = Vec3::Zero();
  for (int j = 0; j < bent.vertex_count(); ++j) {
    res += lap.matrix[static_cast<std::int64_t>(i) * bent.vertex_count() + j] *
           bent.vertices[static_cast<std::size_t>(j)];
  }
  CHECK(res.squaredNorm() == doctest::Approx(d * d).epsilon(1e-12));
}

TEST_CASE("laplacian matches a brute-force neighbor-list oracle on the icosphere") {
  TriMesh sphere = synth::make_icosphere(1);
  const double fast = laplacian_smoothness(sphere);
  // oracle: explicit neighbor sets
  std::vector<std::set<int>> nbr(static_cast<std::size_t>(sphere.vertex_count()));
  for (const auto& f : sphere.faces) {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) nbr[static_cast<std::size_t>(f[a])].insert(f[b]);
  }
  double acc = 0;
  for (int i = 0; i < sphere.vertex_count(); ++i) {
    Vec3 mean = Vec3::Zero();
    for (int j : nbr[static_cast<std::size_t>(i)]) mean += sphere.vertices[static_cast<std::size_t>(j)];
    mean /= static_cast<double>(nbr[static_cast<std::size_t>(i)].size());
    acc += (sphere.vertices[static_cast<std::size_t>(i)] - mean).squaredNorm();
  }
  acc /= sphere.vertex_count();
  CHECK(fast == doctest::Approx(acc).epsilon(1e-12));

  // tape version agrees
  Tape t;
  Var verts = t.leaf(vertices_to_array(sphere.vertices), true);
  Var lv = laplacian_term(verts, t.constant(build_laplacian(sphere).matrix));
  CHECK(t.value(lv)[0] == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("chamfer closed forms and brute-force agreement") {
  std::vector<Vec3> a = {{0, 0, 0}, {1, 1, 1}};
  CHECK(chamfer_distance(a, a) == doctest::Approx(0.0));
  std::vector<Vec3> p = {{0, 0, 0}};
  std::vector<Vec3> q = {{0, 0, 0.5}};
  CHECK(chamfer_distance(p, q) == doctest::Approx(2 * 0.25).epsilon(1e-15));

  Rng rng(17);
  std::vector<Vec3> ca, cb;
  for (int i = 0; i < 50; ++i) {
    ca.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    cb.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  // O(KL) brute force oracle
  auto brute = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double dx = 0;
    for (const auto& xi : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& yj : y) best = std::min(best, (xi - yj).squaredNorm());
      dx += best;
    }
    return dx / static_cast<double>(x.size());
  };
  const double expect = brute(ca, cb) + brute(cb, ca);
  CHECK(chamfer_distance(ca, cb) == expect);  // exactly

  // tape chamfer agrees and its gradient passes fd
  Tape t;
  Var va = t.leaf(vertices_to_array(ca), true);
  Var vb = t.leaf(vertices_to_array(cb), true);
  Var c = chamfer(va, vb);
  CHECK(t.value(c)[0] == expect);
  const double err = diff::grad_check({vertices_to_array(ca), vertices_to_array(cb)},
                                      [](Tape&, const std::vector<Var>& l) {
                                        return chamfer(l[0], l[1]);
                                      });
  CHECK(err < 1e-6);
  CHECK_THROWS(chamfer_distance({}, ca));
}

TEST_CASE("surface sampling properties") {
  TriMesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tri.faces = {{0, 1, 2}};
  const auto params = sample_surface_params(tri, 200, 9);
  for (const auto& p : params) {
    CHECK(p.u >= 0);
    CHECK(p.v >= 0);
    CHECK(p.u + p.v <= 1.0);
  }

  // area ratio 9:1 -> binomial counts within 3 sigma
  TriMesh two;
  two.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {10, 0, 0}, {11, 0, 0}, {10, 1, 0}};
  two.faces = {{0, 1, 2}, {3, 4, 5}};
  CHECK(two.face_area(0) == doctest::Approx(4.5));
  CHECK(two.face_area(1) == doctest::Approx(0.5));
  const int n = 2000;
  const auto ps = sample_surface_params(two, n, 21);
  int big = 0;
  for (const auto& p : ps) big += p.face == 0 ? 1 : 0;
  const double mean = n * 0.9, sigma = std::sqrt(n * 0.9 * 0.1);
  CHECK(std::abs(big - mean) <= 3 * sigma);

  // determinism
  const auto again = sample_surface(two, 50, 33);
  const auto again2 = sample_surface(two, 50, 33);
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i] == again2[i]);

  TriMesh degenerate;
  degenerate.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  degenerate.faces = {{0, 1, 2}};
  CHECK_THROWS_AS(sample_surface(degenerate, 10, 1), std::invalid_argument);
}

TEST_CASE("symmetry loss stays under the sampling noise floor") {
  TriMesh cyl = synth::make_cylinder(0.3, 0.8, 10, 32);
  SymmetrySpec rot{SymmetryKind::rotation, Vec3::UnitY()};
  const double floor = chamfer_distance(sample_surface(cyl, 500, 100), sample_surface(cyl, 500, 200));
  const double loss = symmetry_loss_plain(cyl, rot, 500, 12, 42);
  CHECK(loss < floor);

  // K=1 rotation is the identity: loss equals the chamfer of two sample sets
  const double k1 = symmetry_loss_plain(cyl, rot, 500, 1, 42);
  const auto base = sample_surface(cyl, 500, 42);
  const auto ref = sample_surface(cyl, 500, 42 ^ 0x5eed5eedULL);
  CHECK(k1 == doctest::Approx(chamfer_distance(base, ref)).epsilon(1e-12));

  // flip of a mirror-symmetric mesh stays under the floor too
  SymmetrySpec flip{SymmetryKind::flip, Vec3::UnitX()};
  const double floss = symmetry_loss_plain(cyl, flip, 500, 2, 77);
  CHECK(floss < floor);

  SymmetrySpec none;
  none.kind = SymmetryKind::none;
  CHECK_THROWS_AS(symmetry_transforms(none, 4), std::invalid_argument);

  // tape version reproduces the plain value with the same seed
  Tape t;
  Var verts = t.leaf(vertices_to_array(cyl.vertices), true);
  Var sv = symmetry_loss(verts, cyl.faces, cyl.vertices, rot, 500, 12, 42);
  CHECK(t.value(sv)[0] == doctest::Approx(symmetry_loss_plain(cyl, rot, 500, 12, 42)).epsilon(1e-12));
}

TEST_CASE("oriented bbox") {
  TriMesh cube = synth::make_grid_box({1, 1, 1}, {0, 0, 0}, 1, 1, 1);
  ScaledPose identity;
  const auto corners = oriented_bbox(cube, identity);
  for (const auto& c : corners) {
    CHECK(std::abs(c.x()) == doctest::Approx(0.5));
    CHECK(std::abs(c.y()) == doctest::Approx(0.5));
    CHECK(std::abs(c.z()) == doctest::Approx(0.5));
  }
  ScaledPose doubled;
  doubled.scale = 2.0;
  const auto big = oriented_bbox(cube, doubled);
  for (int i = 0; i < 8; ++i) {
    CHECK(big[static_cast<std::size_t>(i)].norm() ==
          doctest::Approx(2.0 * corners[static_cast<std::size_t>(i)].norm()));
  }
  // pairwise distances scale exactly under a random similarity
  Rng rng(8);
  ScaledPose posed;
  posed.rigid.rotation = random_rotation(rng);
  posed.rigid.translation = Vec3(0.3, -1.0, 2.0);
  posed.scale = 1.37;
  const auto moved = oriented_bbox(cube, posed);
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) {
      const double d0 = (corners[static_cast<std::size_t>(i)] - corners[static_cast<std::size_t>(j)]).norm();
      const double d1 = (moved[static_cast<std::size_t>(i)] - moved[static_cast<std::size_t>(j)]).norm();
      CHECK(d1 == doctest::Approx(posed.scale * d0).epsilon(1e-12));
    }
  }
}

TEST_CASE("obj io round trip and rejection") {
  TriMesh mesh = synth::make_icosphere(0);
  const auto path = std::filesystem::temp_directory_path() / "csepose_obj_test.obj";
  save_obj(mesh, path.string());
  TriMesh back = load_obj(path.string());
  REQUIRE(back.vertex_count() == mesh.vertex_count());
  REQUIRE(back.face_count() == mesh.face_count());
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    CHECK((back.vertices[static_cast<std::size_t>(i)] - mesh.vertices[static_cast<std::size_t>(i)]).norm() <
          1e-15);
  }

  const auto bad_quad = std::filesystem::temp_directory_path() / "csepose_quad.obj";
  std::ofstream(bad_quad) << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  CHECK_THROWS(load_obj(bad_quad.string()));

  const auto bad_rel = std::filesystem::temp_directory_path() / "csepose_rel.obj";
  std::ofstream(bad_rel) << "v 0 0 0\nv 1 0 0\nv 1 1 0\nf -3 -2 -1\n";
  CHECK_THROWS(load_obj(bad_rel.string()));
  std::filesystem::remove(path);
  std::filesystem::remove(bad_quad);
  std::filesystem::remove(bad_rel);
}

TEST_CASE("category priors match reference vertex counts and symmetry kinds") {
  const auto bottle = synth::make_prior("bottle");
  CHECK(bottle.mesh.vertex_count() >= 578);
  CHECK(bottle.mesh.vertex_count() <= 706);
  CHECK(bottle.symmetry.kind == SymmetryKind::rotation);

  const auto bowl = synth::make_prior("bowl");
  CHECK(bowl.mesh.vertex_count() >= 434);
  CHECK(bowl.mesh.vertex_count() <= 530);
  CHECK(bowl.symmetry.kind == SymmetryKind::rotation);

  const auto laptop = synth::make_prior("laptop");
  CHECK(laptop.mesh.vertex_count() >= 896);
  CHECK(laptop.mesh.vertex_count() <= 1094);
  CHECK(laptop.symmetry.kind == SymmetryKind::flip);

  CHECK_THROWS_AS(synth::make_prior("spaceship"), std::invalid_argument);

  for (const auto& prior : {bottle, bowl, laptop}) {
    CHECK(prior.keypoint_vertices.size() == 8);
    prior.mesh.validate_canonical();
  }
}

TEST_CASE("raycast on tape reproduces the plain inverse projection") {
  TriMesh sphere = synth::make_icosphere(1);
  Rng rng(23);
  ScaledPose pose;
  pose.rigid.rotation = random_rotation(rng);
  pose.rigid.translation = Vec3(0.1, 0.05, 2.8);
  Camera cam{64, 64, 32, 32, 64, 64};
  MeshBvh bvh(sphere.vertices, sphere.faces);

  // probe pixels near projected visible vertices, nudged off exact vertices
  std::vector<double> px_list;
  std::vector<int> hit_faces;
  std::vector<Vec3> expect;
  const auto vis = vertex_visibility(sphere, pose, cam);
  for (int i = 0; i < sphere.vertex_count() && hit_faces.size() < 12; ++i) {
    if (!vis[static_cast<std::size_t>(i)]) continue;
    const auto pr = project_points(cam, pose, {sphere.vertices[static_cast<std::size_t>(i)]})[0];
    const double px = pr.pixel.x() + 0.31, py = pr.pixel.y() - 0.17;
    if (!cam.inside(px, py)) continue;
    auto hit = inverse_project(cam, pose, sphere, bvh, px, py);
    if (!hit) continue;
    px_list.push_back(px);
    px_list.push_back(py);
    hit_faces.push_back(hit->face);
    expect.push_back(hit->point);
  }
  REQUIRE(hit_faces.size() >= 6);

  NdArray pix(Shape{static_cast<std::int64_t>(hit_faces.size()), 2}, px_list);
  NdArray rot = NdArray::zeros({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot[i * 3 + j] = pose.rigid.rotation(i, j);
  NdArray tr({3}, {pose.rigid.translation.x(), pose.rigid.translation.y(), pose.rigid.translation.z()});
  NdArray vertsA = vertices_to_array(sphere.vertices);

  Tape t;
  Var hitpts = raycast_points_on_tape(cam, t.leaf(pix, true), t.leaf(rot, true), t.leaf(tr, true),
                                      t.leaf(vertsA, true), sphere.faces, hit_faces, pose.scale);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(t.value(hitpts)[static_cast<std::int64_t>(3 * i + c)] ==
            doctest::Approx(expect[i][c]).epsilon(1e-9));
    }
  }

  // full-surface gradients: pixels, pose and vertices all pass fd
  Rng wr(31);
  NdArray w = NdArray::zeros({static_cast<std::int64_t>(hit_faces.size()), 3});
  for (auto& v : w.data) v = wr.uniform(0.3, 1.3);
  const double err =
      diff::grad_check({pix, rot, tr, vertsA}, [&](Tape& tape, const std::vector<Var>& l) {
        Var pts = raycast_points_on_tape(cam, l[0], l[1], l[2], l[3], sphere.faces, hit_faces, 1.0);
        return diff::sum(diff::mul(pts, tape.constant(w)));
      }, 1e-6);
  CHECK(err < 1e-4);
}
