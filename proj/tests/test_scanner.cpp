#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "test_helpers.hpp"
#include "vcomp/scanner.hpp"

using namespace vcomp;
using namespace vcomp::testing;

namespace {

Camera test_intrinsics() {
  Camera c;
  c.width = 160;
  c.height = 120;
  c.fx = c.fy = 140.0f;
  c.cx = 80.0f;  // integral so a pixel sits exactly on the principal point
  c.cy = 60.0f;
  return c;
}

TriMesh big_quad_at_z(float z, float half = 3.0f) {
  TriMesh m;
  m.vertices = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_CASE("render_depth hits an axis-aligned plane at its distance") {
  TriMesh quad = big_quad_at_z(2.0f);
  Camera cam = look_at({0, 0, 0}, {0, 0, 1}, test_intrinsics());
  DepthFrame frame = render_depth(quad, cam);
  CHECK(frame.at(80, 60) == Catch::Approx(2.0).margin(1e-5));
  // Depth is a range map along camera z: every hit pixel reads the plane depth.
  for (int v = 0; v < cam.height; v += 13)
    for (int u = 0; u < cam.width; u += 17) {
      float d = frame.at(u, v);
      if (d > 0.0f) CHECK(d == Catch::Approx(2.0).margin(1e-4));
    }
}

TEST_CASE("render_depth is all zero when looking away") {
  TriMesh quad = big_quad_at_z(2.0f);
  Camera cam = look_at({0, 0, 0}, {0, 0, -1}, test_intrinsics());
  DepthFrame frame = render_depth(quad, cam);
  for (float d : frame.depth) CHECK(d == 0.0f);
}

TEST_CASE("render_depth center pixel on a sphere") {
  TriMesh sphere = make_uv_sphere({0, 0, 2.0f}, 0.5f, 48, 64);
  Camera cam = look_at({0, 0, 0}, {0, 0, 1}, test_intrinsics());
  DepthFrame frame = render_depth(sphere, cam);
  // Analytic ray-sphere hit at z = 1.5; the faceted sphere is slightly inside.
  CHECK(frame.at(80, 60) == Catch::Approx(1.5).margin(2e-3));
}

TEST_CASE("render_depth rejects an empty mesh") {
  TriMesh empty;
  Camera cam = look_at({0, 0, 0}, {0, 0, 1}, test_intrinsics());
  CHECK_THROWS_AS(render_depth(empty, cam), std::invalid_argument);
}

TEST_CASE("backproject puts plane pixels on the plane") {
  TriMesh quad = big_quad_at_z(2.0f);
  Camera cam = look_at({0.3f, -0.2f, -0.4f}, {0, 0, 2.0f}, test_intrinsics());
  DepthFrame frame = render_depth(quad, cam);
  auto points = backproject(frame);
  REQUIRE(points.size() > 1000);
  for (const auto& p : points) CHECK(std::abs(p.z - 2.0f) < 1e-4f);
}

TEST_CASE("backproject skips zero-depth pixels") {
  Camera cam = test_intrinsics();
  DepthFrame frame;
  frame.camera = cam;
  frame.depth.assign(size_t(cam.width) * cam.height, 0.0f);
  frame.at(80, 60) = 1.5f;
  auto points = backproject(frame);
  REQUIRE(points.size() == 1);
  // Identity extrinsics: the principal-point pixel backprojects to (0,0,d).
  CHECK(norm(points[0] - Vec3{0, 0, 1.5f}) < 1e-6f);
}

TEST_CASE("gen_trajectory is deterministic and looks at the center") {
  Vec3 center{0.5f, -0.25f, 1.0f};
  auto a = gen_trajectory(42, 8, 2.0f, center);
  auto b = gen_trajectory(42, 8, 2.0f, center);
  REQUIRE(a.size() == 8);
  REQUIRE(b.size() == 8);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rotation.m == b[i].rotation.m);
    CHECK(a[i].translation == b[i].translation);
  }
  for (const auto& cam : a) {
    CHECK(cam.rotation_orthonormality_error() < 1e-5);
    // Viewing ray through the center: its camera-space image is on the +z axis.
    Vec3 pc = cam.world_to_camera(center);
    CHECK(std::abs(pc.x) < 1e-5f);
    CHECK(std::abs(pc.y) < 1e-5f);
    CHECK(pc.z == Catch::Approx(2.0f).margin(1e-5));
  }
  CHECK(gen_trajectory(7, 1, 1.0f, center).size() == 1);
  CHECK_THROWS_AS(gen_trajectory(7, 0, 1.0f, center), std::invalid_argument);
}

TEST_CASE("watertight convex scan: backprojected points lie on the mesh") {
  TriMesh cube = make_cube({0, 0, 0}, {0.4f, 0.3f, 0.35f});
  auto cams = gen_trajectory(11, 4, 2.5f, {0, 0, 0}, test_intrinsics());
  for (const auto& cam : cams) {
    DepthFrame frame = render_depth(cube, cam);
    auto points = backproject(frame);
    REQUIRE(points.size() > 100);
    size_t checked = 0;
    for (size_t i = 0; i < points.size(); i += 37) {
      CHECK(point_mesh_distance(DVec3(points[i]), cube) < 1e-4);
      ++checked;
    }
    CHECK(checked > 10);
  }
}

TEST_CASE("occluders never increase depth") {
  TriMesh far_quad = big_quad_at_z(3.0f);
  TriMesh both = far_quad;
  both.append(big_quad_at_z(1.5f, 0.4f));
  Camera cam = look_at({0, 0, 0}, {0, 0, 1}, test_intrinsics());
  DepthFrame a = render_depth(far_quad, cam);
  DepthFrame b = render_depth(both, cam);
  for (size_t i = 0; i < a.depth.size(); ++i) {
    if (a.depth[i] > 0.0f && b.depth[i] > 0.0f) CHECK(b.depth[i] <= a.depth[i] + 1e-6f);
  }
}

TEST_CASE("trajectory manifest round trips") {
  auto cams = gen_trajectory(5, 6, 1.8f, {0, 0, 0}, test_intrinsics());
  auto path = std::filesystem::temp_directory_path() / "vcomp_test_traj.txt";
  save_trajectory(cams, 10.0f, path.string());
  float far = 0.0f;
  auto back = load_trajectory(path.string(), &far);
  REQUIRE(back.size() == cams.size());
  CHECK(far == 10.0f);
  for (size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].width == cams[i].width);
    for (int j = 0; j < 9; ++j)
      CHECK(back[i].rotation.m[j] == Catch::Approx(cams[i].rotation.m[j]).margin(1e-6));
    for (int j = 0; j < 3; ++j)
      CHECK(back[i].translation[j] == Catch::Approx(cams[i].translation[j]).margin(1e-6));
    CHECK(back[i].fx == cams[i].fx);
    CHECK(back[i].cx == cams[i].cx);
  }
  std::filesystem::remove(path);
}
