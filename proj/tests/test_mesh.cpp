#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "vcomp/bvh.hpp"
#include "vcomp/mesh.hpp"

using namespace vcomp;

namespace {

TriMesh unit_cube(Vec3 center = {0, 0, 0}, float half = 0.5f) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({center.x + (i & 1 ? half : -half), center.y + (i & 2 ? half : -half),
                          center.z + (i & 4 ? half : -half)});
  auto quad = [&](int a, int b, int c, int d) {
    m.triangles.push_back({uint32_t(a), uint32_t(b), uint32_t(c)});
    m.triangles.push_back({uint32_t(a), uint32_t(c), uint32_t(d)});
  };
  quad(0, 1, 3, 2);  // z-
  quad(5, 4, 6, 7);  // z+
  quad(0, 4, 5, 1);  // y-
  quad(2, 3, 7, 6);  // y+
  quad(0, 2, 6, 4);  // x-
  quad(1, 5, 7, 3);  // x+
  return m;
}

}  // namespace

TEST_CASE("point_triangle_distance covers all regions") {
  DVec3 a{0, 0, 0}, b{1, 0, 0}, c{0, 1, 0};
  CHECK(point_triangle_distance({0.25, 0.25, 0.5}, a, b, c) == Catch::Approx(0.5));
  CHECK(point_triangle_distance({0.25, 0.25, 0.0}, a, b, c) == Catch::Approx(0.0).margin(1e-12));
  CHECK(point_triangle_distance({-1, -1, 0}, a, b, c) == Catch::Approx(std::sqrt(2.0)));
  CHECK(point_triangle_distance({2, 0, 0}, a, b, c) == Catch::Approx(1.0));
  CHECK(point_triangle_distance({0.5, -1, 0}, a, b, c) == Catch::Approx(1.0));
  CHECK(point_triangle_distance({1, 1, 0}, a, b, c) == Catch::Approx(std::sqrt(0.5)));
}

TEST_CASE("ray_triangle basic hits and misses") {
  DVec3 a{-1, -1, 2}, b{1, -1, 2}, c{0, 1, 2};
  double t = ray_triangle({0, 0, 0}, {0, 0, 1}, a, b, c);
  CHECK(t == Catch::Approx(2.0));
  CHECK(ray_triangle({0, 0, 0}, {0, 0, -1}, a, b, c) < 0.0);
  CHECK(ray_triangle({5, 5, 0}, {0, 0, 1}, a, b, c) < 0.0);
}

TEST_CASE("bvh intersection agrees with brute force") {
  TriMesh cube = unit_cube({0.2f, -0.1f, 0.3f}, 0.4f);
  TriangleBvh bvh(cube);
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    DVec3 origin{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    DVec3 dir = rng.unit_sphere_dir();
    RayHit hit = bvh.intersect(origin, dir);

    double best = -1.0;
    for (const auto& t : cube.triangles) {
      double d = ray_triangle(origin, dir, DVec3(cube.vertices[t[0]]), DVec3(cube.vertices[t[1]]),
                              DVec3(cube.vertices[t[2]]));
      if (d > 1e-9 && (best < 0.0 || d < best)) best = d;
    }
    if (best < 0.0) {
      CHECK_FALSE(hit.valid());
    } else {
      REQUIRE(hit.valid());
      CHECK(hit.t == Catch::Approx(best).margin(1e-9));
    }
  }
}

TEST_CASE("point_inside_mesh parity on a cube") {
  TriMesh cube = unit_cube({0, 0, 0}, 0.5f);
  CHECK(point_inside_mesh({0.0, 0.0, 0.0}, cube));
  CHECK(point_inside_mesh({0.4, 0.4, 0.4}, cube));
  CHECK_FALSE(point_inside_mesh({0.6, 0.0, 0.0}, cube));
  CHECK_FALSE(point_inside_mesh({2.0, 2.0, 2.0}, cube));
}

TEST_CASE("obj round trip keeps topology") {
  TriMesh cube = unit_cube({0.1f, 0.2f, 0.3f}, 0.37f);
  auto path = std::filesystem::temp_directory_path() / "vcomp_test_cube.obj";
  save_obj(cube, path.string());
  TriMesh back = load_obj(path.string());
  REQUIRE(back.vertices.size() == cube.vertices.size());
  REQUIRE(back.triangles.size() == cube.triangles.size());
  for (size_t i = 0; i < back.triangles.size(); ++i) CHECK(back.triangles[i] == cube.triangles[i]);
  for (size_t i = 0; i < back.vertices.size(); ++i)
    CHECK(norm(back.vertices[i] - cube.vertices[i]) < 1e-6f);
  std::filesystem::remove(path);
}

TEST_CASE("ply round trip and cross-format agreement") {
  TriMesh cube = unit_cube({-0.3f, 0.05f, 0.0f}, 0.25f);
  auto dir = std::filesystem::temp_directory_path();
  auto ply = dir / "vcomp_test_cube.ply";
  auto obj = dir / "vcomp_test_cube2.obj";
  save_ply(cube, ply.string());
  save_obj(cube, obj.string());
  TriMesh from_ply = load_ply(ply.string());
  TriMesh from_obj = load_obj(obj.string());
  REQUIRE(from_ply.vertices.size() == from_obj.vertices.size());
  REQUIRE(from_ply.triangles.size() == from_obj.triangles.size());
  for (size_t i = 0; i < from_ply.vertices.size(); ++i)
    CHECK(norm(from_ply.vertices[i] - from_obj.vertices[i]) < 1e-5f);
  for (size_t i = 0; i < from_ply.triangles.size(); ++i)
    CHECK(from_ply.triangles[i] == from_obj.triangles[i]);
  std::filesystem::remove(ply);
  std::filesystem::remove(obj);
}

TEST_CASE("empty mesh writes a valid file") {
  TriMesh empty;
  auto path = std::filesystem::temp_directory_path() / "vcomp_test_empty.obj";
  save_obj(empty, path.string());
  TriMesh back = load_obj(path.string());
  CHECK(back.vertices.empty());
  CHECK(back.triangles.empty());
  std::filesystem::remove(path);
}

TEST_CASE("clean_mesh drops degenerate triangles") {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}, {0, 0, 1}, {0, 1, 9}};
  clean_mesh(m);
  REQUIRE(m.triangles.size() == 1);
  CHECK(m.triangles[0] == std::array<uint32_t, 3>{0, 1, 2});
}
