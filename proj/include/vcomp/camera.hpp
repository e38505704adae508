#pragma once

#include <cmath>
#include <vector>

#include "vcomp/core.hpp"

namespace vcomp {

// Pinhole camera, Kinect-style. Extrinsics map world to camera space
// (pc = R*pw + t); +z looks forward, pixel (u,v) rays pass through integer
// pixel centers.
struct Camera {
  float fx = 285.0f, fy = 285.0f;
  float cx = 159.5f, cy = 119.5f;
  int width = 320, height = 240;
  Mat3 rotation;    // world -> camera
  Vec3 translation; // world -> camera

  Vec3 world_to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 camera_to_world(const Vec3& p) const { return rotation.transposed() * (p - translation); }
  Vec3 position() const { return rotation.transposed() * (-translation); }

  // Continuous pixel coordinate and camera depth; z <= 0 means behind.
  bool project(const Vec3& world, float& u, float& v, float& z) const {
    Vec3 pc = world_to_camera(world);
    z = pc.z;
    if (pc.z <= 0.0f) return false;
    u = fx * pc.x / pc.z + cx;
    v = fy * pc.y / pc.z + cy;
    return true;
  }

  // World-space unit ray through pixel center (u,v); dir_z_cam receives the
  // camera-z component of the unit direction (depth = t * dir_z_cam).
  DVec3 pixel_ray(int u, int v, double& dir_z_cam) const {
    DVec3 dc{(double(u) - cx) / fx, (double(v) - cy) / fy, 1.0};
    double len = norm(dc);
    dc = dc / len;
    dir_z_cam = dc.z;
    Mat3 rt = rotation.transposed();
    Vec3 dw = rt * Vec3(float(dc.x), float(dc.y), float(dc.z));
    return normalized(DVec3(dw));
  }

  double rotation_orthonormality_error() const {
    Mat3 rtr = rotation.transposed() * rotation;
    double err = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(double(rtr(i, j)) - (i == j ? 1.0 : 0.0)));
    return err;
  }
};

// Camera at `eye` looking at `target`. Image +x is screen right, +y screen
// down, +z the viewing direction.
inline Camera look_at(const Vec3& eye, const Vec3& target, const Camera& intrinsics = Camera{}) {
  Camera cam = intrinsics;
  Vec3 fwd = normalized(target - eye);
  Vec3 up{0.0f, 1.0f, 0.0f};
  if (std::abs(dot(fwd, up)) > 0.999f) up = Vec3{1.0f, 0.0f, 0.0f};
  Vec3 right = normalized(cross(up, fwd));
  Vec3 down = cross(fwd, right);
  for (int c = 0; c < 3; ++c) {
    cam.rotation(0, c) = right[c];
    cam.rotation(1, c) = down[c];
    cam.rotation(2, c) = fwd[c];
  }
  cam.translation = cam.rotation * (-eye);
  return cam;
}

struct DepthFrame {
  Camera camera;
  std::vector<float> depth;  // camera-z range in meters, 0 = no hit
  float far_plane = 10.0f;

  float at(int u, int v) const { return depth[size_t(v) * camera.width + u]; }
  float& at(int u, int v) { return depth[size_t(v) * camera.width + u]; }
};

}  // namespace vcomp
