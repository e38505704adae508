#pragma once

#include <fstream>
#include <sstream>

#include "vcomp/bvh.hpp"
#include "vcomp/camera.hpp"
#include "vcomp/grid.hpp"

namespace vcomp {

// Casts one ray per pixel center against the mesh; stores the camera-z depth
// of the nearest hit (a range map), 0 where nothing is hit or the hit is
// beyond the far plane.
inline DepthFrame render_depth(const TriangleBvh& bvh, const Camera& camera,
                               float far_plane = 10.0f) {
  if (bvh.mesh().empty()) throw std::invalid_argument("render_depth: empty mesh");
  DepthFrame frame;
  frame.camera = camera;
  frame.far_plane = far_plane;
  frame.depth.assign(size_t(camera.width) * camera.height, 0.0f);
  DVec3 origin(camera.position());
  parallel_chunks(size_t(camera.height), [&](size_t vb, size_t ve) {
    for (size_t v = vb; v < ve; ++v) {
      for (int u = 0; u < camera.width; ++u) {
        double dir_z;
        DVec3 dir = camera.pixel_ray(u, int(v), dir_z);
        RayHit hit = bvh.intersect(origin, dir);
        if (!hit.valid()) continue;
        double z = hit.t * dir_z;
        if (z <= 0.0 || z > double(far_plane)) continue;
        frame.depth[v * size_t(camera.width) + u] = float(z);
      }
    }
  });
  return frame;
}

inline DepthFrame render_depth(const TriMesh& mesh, const Camera& camera,
                               float far_plane = 10.0f) {
  TriangleBvh bvh(mesh);
  return render_depth(bvh, camera, far_plane);
}

// Lifts every valid pixel back to a metric world-space point.
inline std::vector<Vec3> backproject(const DepthFrame& frame) {
  std::vector<Vec3> points;
  const Camera& cam = frame.camera;
  points.reserve(frame.depth.size() / 4);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      float d = frame.at(u, v);
      if (d <= 0.0f) continue;
      Vec3 pc{(float(u) - cam.cx) * d / cam.fx, (float(v) - cam.cy) * d / cam.fy, d};
      points.push_back(cam.camera_to_world(pc));
    }
  }
  return points;
}

// n_views cameras on a sphere around `center`, all looking at it. Positions
// come from a seeded uniform sphere distribution.
inline std::vector<Camera> gen_trajectory(uint64_t seed, int n_views, float radius, Vec3 center,
                                          const Camera& intrinsics = Camera{}) {
  if (n_views < 1) throw std::invalid_argument("gen_trajectory: n_views must be >= 1");
  Rng rng(seed);
  std::vector<Camera> cams;
  cams.reserve(size_t(n_views));
  for (int i = 0; i < n_views; ++i) {
    DVec3 dir = rng.unit_sphere_dir();
    Vec3 eye = center + Vec3(dir) * radius;
    cams.push_back(look_at(eye, center, intrinsics));
  }
  return cams;
}

// Trajectory manifest: '#'-prefixed header carries the shared sensor size and
// far plane; each other line is one camera as 12 extrinsic + 4 intrinsic
// numbers (row-major R, t, fx fy cx cy).
inline void save_trajectory(const std::vector<Camera>& cams, float far_plane,
                            const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("save_trajectory: cannot open " + path);
  int w = cams.empty() ? 0 : cams.front().width;
  int h = cams.empty() ? 0 : cams.front().height;
  os << "# vxg-trajectory " << w << ' ' << h << ' ' << far_plane << '\n';
  char buf[128];
  for (const auto& c : cams) {
    for (int i = 0; i < 9; ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g ", c.rotation.m[i]);
      os << buf;
    }
    for (int i = 0; i < 3; ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g ", c.translation[i]);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g\n", c.fx, c.fy, c.cx, c.cy);
    os << buf;
  }
  if (!os) throw DataError("save_trajectory: write failed for " + path);
}

inline std::vector<Camera> load_trajectory(const std::string& path, float* far_plane = nullptr) {
  std::ifstream is(path);
  if (!is) throw DataError("load_trajectory: cannot open " + path);
  std::vector<Camera> cams;
  int w = 320, h = 240;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tag;
      float far = 10.0f;
      ss >> tag >> w >> h >> far;
      if (far_plane) *far_plane = far;
      continue;
    }
    std::istringstream ss(line);
    Camera c;
    c.width = w;
    c.height = h;
    for (int i = 0; i < 9; ++i) ss >> c.rotation.m[i];
    for (int i = 0; i < 3; ++i) ss >> c.translation[i];
    ss >> c.fx >> c.fy >> c.cx >> c.cy;
    if (!ss) throw DataError("load_trajectory: bad camera line in " + path);
    cams.push_back(c);
  }
  return cams;
}

}  // namespace vcomp
