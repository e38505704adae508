#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "vcomp/grid.hpp"
#include "vcomp/vxg_io.hpp"

using namespace vcomp;

namespace {

GridMeta make_meta(int n, float vs = 1.0f, Vec3 origin = {0, 0, 0}) {
  GridMeta m;
  m.dims = {n, n, n};
  m.voxel_size = vs;
  m.origin = origin;
  return m;
}

}  // namespace

TEST_CASE("voxel_to_world uses the center convention") {
  GridMeta m = make_meta(32);
  Vec3 p = m.voxel_to_world(0, 0, 0);
  CHECK(p.x == Catch::Approx(0.5));
  CHECK(p.y == Catch::Approx(0.5));
  CHECK(p.z == Catch::Approx(0.5));

  Vec3 q = m.voxel_to_world(31, 31, 31);
  CHECK(q.x == Catch::Approx(31.5));

  GridMeta m2 = make_meta(32, 0.05f, {-0.8f, -0.8f, -0.8f});
  Vec3 r = m2.voxel_to_world(16, 16, 16);
  CHECK(r.x == Catch::Approx(0.025).margin(1e-6));
  CHECK(r.y == Catch::Approx(0.025).margin(1e-6));
  CHECK(r.z == Catch::Approx(0.025).margin(1e-6));

  CHECK_THROWS_AS(m.voxel_to_world(32, 0, 0), std::out_of_range);
  CHECK_THROWS_AS(m.voxel_to_world(0, -1, 0), std::out_of_range);
}

TEST_CASE("world_to_voxel inverts voxel_to_world") {
  GridMeta m = make_meta(16, 0.03f, {-0.2f, 0.4f, 1.0f});
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    int x = rng.uniform_int(16), y = rng.uniform_int(16), z = rng.uniform_int(16);
    Vec3 v = m.world_to_voxel(m.voxel_to_world(x, y, z));
    CHECK(std::lround(v.x) == x);
    CHECK(std::lround(v.y) == y);
    CHECK(std::lround(v.z) == z);
    CHECK(std::abs(v.x - float(x)) < 1e-3f);
  }
}

TEST_CASE("split_channels separates magnitude and sign") {
  GridMeta m = make_meta(2);
  VoxelGrid tsdf(m, GridKind::TSDF);
  tsdf.at(0, 0, 0) = 0.7f;
  tsdf.at(1, 0, 0) = -1.2f;
  tsdf.at(0, 1, 0) = 0.0f;
  tsdf.at(1, 1, 0) = -3.1f;  // beyond truncation

  TwoChannelGrid two = split_channels(tsdf, 2.5f);
  CHECK(two.abs.at(0, 0, 0) == Catch::Approx(0.7));
  CHECK(two.known.at(0, 0, 0) == 1.0f);
  CHECK(two.abs.at(1, 0, 0) == Catch::Approx(1.2));
  CHECK(two.known.at(1, 0, 0) == 0.0f);
  CHECK(two.abs.at(0, 1, 0) == 0.0f);
  CHECK(two.known.at(0, 1, 0) == 1.0f);  // surface voxels are known
  CHECK(two.abs.at(1, 1, 0) == 2.5f);    // clamped

  VoxelGrid udf(m, GridKind::UnsignedDF);
  CHECK_THROWS_AS(split_channels(udf), std::invalid_argument);
}

TEST_CASE("split then recombine reproduces the truncated field") {
  GridMeta m = make_meta(8);
  VoxelGrid tsdf(m, GridKind::TSDF);
  Rng rng(3);
  for (auto& v : tsdf.values) v = rng.uniformf(-2.5f, 2.5f);
  TwoChannelGrid two = split_channels(tsdf, 2.5f);
  VoxelGrid back = recombine_channels(two);
  for (size_t i = 0; i < tsdf.values.size(); ++i)
    CHECK(back.values[i] == Catch::Approx(tsdf.values[i]).margin(1e-7));
}

TEST_CASE("trilinear_sample identities") {
  GridMeta m = make_meta(4);
  VoxelGrid g(m, GridKind::UnsignedDF);
  Rng rng(11);
  for (auto& v : g.values) v = rng.uniformf(0.0f, 5.0f);

  CHECK(trilinear_sample(g, {2, 1, 3}) == Catch::Approx(g.at(2, 1, 3)));

  VoxelGrid c(m, GridKind::UnsignedDF, 3.25f);
  CHECK(trilinear_sample(c, {1.3f, 0.7f, 2.9f}) == Catch::Approx(3.25f));

  GridMeta m2 = make_meta(2);
  VoxelGrid ramp(m2, GridKind::UnsignedDF);
  ramp.at(1, 0, 0) = ramp.at(1, 1, 0) = ramp.at(1, 0, 1) = ramp.at(1, 1, 1) = 1.0f;
  CHECK(trilinear_sample(ramp, {0.5f, 0.5f, 0.5f}) == Catch::Approx(0.5f));

  CHECK_THROWS_AS(trilinear_sample(g, {-0.1f, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS(trilinear_sample(g, {0, 3.2f, 0}), std::out_of_range);
}

TEST_CASE("trilinear_sample is exact for affine fields") {
  GridMeta m = make_meta(6);
  VoxelGrid g(m, GridKind::UnsignedDF);
  auto f = [](float x, float y, float z) { return 0.3f + 1.7f * x - 0.9f * y + 0.25f * z; };
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) g.at(x, y, z) = f(float(x), float(y), float(z));
  Rng rng(5);
  for (int i = 0; i < 64; ++i) {
    Vec3 p{rng.uniformf(0, 5), rng.uniformf(0, 5), rng.uniformf(0, 5)};
    CHECK(trilinear_sample(g, p) == Catch::Approx(f(p.x, p.y, p.z)).margin(1e-4));
  }
}

TEST_CASE("to_representation thresholds and sign handling") {
  GridMeta m = make_meta(8);
  VoxelGrid plane(m, GridKind::TSDF);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) plane.at(x, y, z) = float(x) - 3.2f;

  VoxelGrid occ = to_representation(plane, GridKind::Occupancy, 0.5f);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        CHECK(occ.at(x, y, z) == (std::abs(float(x) - 3.2f) <= 0.5f ? 1.0f : 0.0f));

  VoxelGrid pos(m, GridKind::TSDF, 2.0f);
  VoxelGrid tern = to_representation(pos, GridKind::Ternary, 0.5f);
  for (float v : tern.values) CHECK(v == 1.0f);

  VoxelGrid udf(m, GridKind::UnsignedDF, 1.0f);
  CHECK_THROWS_AS(to_representation(udf, GridKind::Ternary, 0.5f), std::invalid_argument);

  // Identity on matching kind.
  VoxelGrid same = to_representation(plane, GridKind::TSDF, 0.5f);
  CHECK(same.values == plane.values);
}

TEST_CASE("to_representation occupancy matches brute-force sphere count") {
  const int n = 32;
  GridMeta m = make_meta(n);
  VoxelGrid sphere(m, GridKind::UnsignedDF);
  Vec3 c{16.0f, 16.0f, 16.0f};
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Vec3 p = m.world_to_voxel(m.voxel_to_world(x, y, z));  // = (x,y,z)
        float r = norm(Vec3{p.x - c.x + 0.5f, p.y - c.y + 0.5f, p.z - c.z + 0.5f});
        sphere.at(x, y, z) = std::abs(r - 8.0f);
      }
  VoxelGrid occ = to_representation(sphere, GridKind::Occupancy, 0.5f);
  size_t count = 0, expected = 0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (occ.at(x, y, z) == 1.0f) ++count;
        float r = norm(Vec3{float(x) - c.x + 0.5f, float(y) - c.y + 0.5f, float(z) - c.z + 0.5f});
        if (std::abs(r - 8.0f) <= 0.5f) ++expected;
      }
  CHECK(count == expected);
  CHECK(count > 0);
}

TEST_CASE("VXG1 round trip preserves everything") {
  GridMeta m = make_meta(5, 0.04f, {-0.5f, 0.25f, 1.5f});
  VoxelGrid g(m, GridKind::TSDF);
  Rng rng(23);
  for (auto& v : g.values) v = rng.uniformf(-2.5f, 2.5f);

  auto path = std::filesystem::temp_directory_path() / "vcomp_test_grid.vxg";
  write_vxg(g, path.string());
  VoxelGrid back = read_vxg(path.string());
  CHECK(back.kind == g.kind);
  CHECK(back.meta == g.meta);
  CHECK(back.values == g.values);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_vxg("/nonexistent/nope.vxg"), DataError);
}

TEST_CASE("VXG1 header layout is stable") {
  GridMeta m;
  m.dims = {2, 1, 1};
  m.voxel_size = 1.0f;
  m.origin = {0, 0, 0};
  VoxelGrid g(m, GridKind::UnsignedDF);
  g.values = {1.0f, 2.0f};
  auto path = std::filesystem::temp_directory_path() / "vcomp_test_hdr.vxg";
  write_vxg(g, path.string());

  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 4 + 4 + 12 + 4 + 12 + 8);
  CHECK(bytes[0] == 'V');
  CHECK(bytes[1] == 'X');
  CHECK(bytes[2] == 'G');
  CHECK(bytes[3] == '1');
  CHECK(bytes[4] == 1);  // kind tag little-endian
  CHECK(bytes[8] == 2);  // dims.x
  std::filesystem::remove(path);
}

TEST_CASE("voxel traversal visits the straight-line corridor") {
  GridMeta m = make_meta(8);
  std::vector<std::array<int, 3>> visited;
  traverse_voxels(m, Vec3{0.1f, 4.5f, 4.5f}, Vec3{7.9f, 4.5f, 4.5f},
                  [&](int x, int y, int z) {
                    visited.push_back({x, y, z});
                    return true;
                  });
  REQUIRE(visited.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(visited[size_t(i)][0] == i);
    CHECK(visited[size_t(i)][1] == 4);
    CHECK(visited[size_t(i)][2] == 4);
  }
}
