#pragma once

#include <cmath>
#include <fstream>
#include <sstream>

#include "vcomp/grid.hpp"
#include "vcomp/scanner.hpp"

namespace vcomp {

struct FusionParams {
  float truncation = 2.5f;  // voxel units; below 1 the surface band can vanish
  GridMeta meta;
};

// Cubic grid covering the mesh bounds plus a margin, so the truncation band
// never clips.
inline GridMeta meta_for_mesh(const TriMesh& mesh, int resolution, int margin_voxels = 3) {
  Aabb b = mesh.bounds();
  if (!b.valid()) throw std::invalid_argument("meta_for_mesh: empty mesh");
  Vec3 ext = b.extent();
  float span = std::max({ext.x, ext.y, ext.z});
  int interior = resolution - 2 * margin_voxels;
  if (interior < 1) throw std::invalid_argument("meta_for_mesh: margin exceeds resolution");
  float vs = span > 0.0f ? span / float(interior) : 1.0f / float(interior);
  GridMeta meta;
  meta.dims = {resolution, resolution, resolution};
  meta.voxel_size = vs;
  Vec3 c = b.center();
  float half = 0.5f * float(resolution) * vs;
  meta.origin = {c.x - half, c.y - half, c.z - half};
  return meta;
}

inline GridMeta refine_meta(const GridMeta& base, int factor) {
  GridMeta m = base;
  m.dims = {base.dims[0] * factor, base.dims[1] * factor, base.dims[2] * factor};
  m.voxel_size = base.voxel_size / float(factor);
  return m;
}

// One frame's projective observation of a voxel: depth(pixel) - camera_z in
// voxel units. Pixels on a depth discontinuity (the 2x2 block around the
// projection jumps or has holes) are rejected; their depth belongs to a
// different surface than the voxel's ray.
inline bool observe_voxel(const DepthFrame& frame, const Vec3& p, float voxel_size,
                          float max_jump, float& sdf_out) {
  float u, v, cz;
  if (!frame.camera.project(p, u, v, cz)) return false;
  int ui = int(std::lround(u)), vi = int(std::lround(v));
  const Camera& cam = frame.camera;
  if (ui < 0 || vi < 0 || ui >= cam.width || vi >= cam.height) return false;
  float d = frame.at(ui, vi);
  if (d <= 0.0f) return false;
  int u0 = std::clamp(int(std::floor(u)), 0, cam.width - 2);
  int v0 = std::clamp(int(std::floor(v)), 0, cam.height - 2);
  float lo = 1e30f, hi = -1e30f;
  for (int dv = 0; dv < 2; ++dv)
    for (int du = 0; du < 2; ++du) {
      float n = frame.at(u0 + du, v0 + dv);
      if (n <= 0.0f) return false;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
  if (hi - lo > max_jump) return false;
  sdf_out = (d - cz) / voxel_size;
  return true;
}

// Curless-Levoy volumetric fusion with free-space carving semantics. Per voxel
// and frame, the projective signed distance along the viewing ray is
// depth(pixel) - camera_z, in voxel units. Observations in front of the
// observed surface (sdf >= 0) prove the voxel empty and average among
// themselves; behind-surface observations (-trunc, 0) only count when no view
// saw the voxel in free space, which keeps occlusion shadows from pulling
// provably-empty voxels into the surface band. Voxels with no observation
// better than -truncation store -truncation. Sign semantics: positive
// known-empty, zero surface, negative unknown.
inline VoxelGrid fuse_tsdf(const std::vector<DepthFrame>& frames, const FusionParams& params) {
  if (frames.empty()) throw std::invalid_argument("fuse_tsdf: no frames");
  if (params.truncation < 1.0f)
    throw std::invalid_argument("fuse_tsdf: truncation below one voxel");
  const GridMeta& meta = params.meta;
  const float trunc = params.truncation;
  const float max_jump = 3.0f * trunc * meta.voxel_size;
  VoxelGrid out(meta, GridKind::TSDF, -trunc);

  const int dx = meta.dims[0], dy = meta.dims[1], dz = meta.dims[2];
  parallel_chunks(size_t(dz), [&](size_t zb, size_t ze) {
    for (size_t z = zb; z < ze; ++z) {
      for (int y = 0; y < dy; ++y) {
        for (int x = 0; x < dx; ++x) {
          Vec3 p = meta.voxel_to_world(x, y, int(z));
          float pos_sum = 0.0f, neg_sum = 0.0f;
          int pos_cnt = 0, neg_cnt = 0;
          for (const DepthFrame& frame : frames) {
            float sdf;
            if (!observe_voxel(frame, p, meta.voxel_size, max_jump, sdf)) continue;
            if (sdf <= -trunc) continue;
            if (sdf >= 0.0f) {
              pos_sum += std::min(sdf, trunc);
              ++pos_cnt;
            } else {
              neg_sum += sdf;
              ++neg_cnt;
            }
          }
          if (pos_cnt > 0)
            out.at(x, y, int(z)) = pos_sum / float(pos_cnt);
          else if (neg_cnt > 0)
            out.at(x, y, int(z)) = neg_sum / float(neg_cnt);
        }
      }
    }
  });
  return out;
}

// Exact truncated unsigned distance field of a mesh, in voxel units. Each
// triangle stamps point-to-triangle distances into the voxels of its expanded
// bounding box; the expansion covers the full truncation band, so values
// within the band are exact minima.
inline VoxelGrid mesh_to_df(const TriMesh& mesh, const GridMeta& meta, float truncation = 2.5f) {
  if (mesh.empty()) throw std::invalid_argument("mesh_to_df: empty mesh");
  VoxelGrid out(meta, GridKind::UnsignedDF, truncation);
  const int dx = meta.dims[0], dy = meta.dims[1], dz = meta.dims[2];
  const double vs = meta.voxel_size;
  const double reach = double(truncation) + 0.87;  // band plus half a voxel diagonal

  unsigned workers = std::min<unsigned>(thread_count(), 8);
  size_t n_tris = mesh.triangles.size();
  std::vector<VoxelGrid> partial(workers > 1 ? workers : 0);
  auto stamp = [&](VoxelGrid& g, size_t tb, size_t te) {
    for (size_t ti = tb; ti < te; ++ti) {
      const auto& t = mesh.triangles[ti];
      DVec3 a(mesh.vertices[t[0]]), b(mesh.vertices[t[1]]), c(mesh.vertices[t[2]]);
      Aabb box;
      box.expand(mesh.vertices[t[0]]);
      box.expand(mesh.vertices[t[1]]);
      box.expand(mesh.vertices[t[2]]);
      Vec3 lov = meta.world_to_voxel(box.lo), hiv = meta.world_to_voxel(box.hi);
      int x0 = std::max(0, int(std::floor(lov.x - reach)));
      int y0 = std::max(0, int(std::floor(lov.y - reach)));
      int z0 = std::max(0, int(std::floor(lov.z - reach)));
      int x1 = std::min(dx - 1, int(std::ceil(hiv.x + reach)));
      int y1 = std::min(dy - 1, int(std::ceil(hiv.y + reach)));
      int z1 = std::min(dz - 1, int(std::ceil(hiv.z + reach)));
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            float& cell = g.at(x, y, z);
            DVec3 p(meta.voxel_to_world(x, y, z));
            double d = point_triangle_distance(p, a, b, c) / vs;
            if (d < double(cell)) cell = float(d);
          }
    }
  };

  if (workers <= 1 || n_tris < 16) {
    stamp(out, 0, n_tris);
    return out;
  }
  for (auto& g : partial) g = VoxelGrid(meta, GridKind::UnsignedDF, truncation);
  std::vector<std::thread> pool;
  size_t chunk = (n_tris + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    size_t tb = std::min(n_tris, size_t(w) * chunk);
    size_t te = std::min(n_tris, tb + chunk);
    if (tb >= te) break;
    pool.emplace_back([&, w, tb, te] { stamp(partial[w], tb, te); });
  }
  for (auto& th : pool) th.join();
  for (const auto& g : partial)
    for (size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = std::min(out.values[i], g.values[i]);
  return out;
}

struct TrainingPair {
  TwoChannelGrid input;
  VoxelGrid target;  // UnsignedDF
  int class_label = 0;
  std::string model_id;
  int trajectory_id = 0;
};

// Renders the trajectory, fuses the frames, and pairs the two-channel input
// with the exact ground-truth DF over the same grid.
inline TrainingPair make_training_pair(const TriMesh& mesh, int class_label,
                                       const std::vector<Camera>& trajectory,
                                       const FusionParams& params, float far_plane = 10.0f) {
  if (trajectory.empty()) throw std::invalid_argument("make_training_pair: no cameras");
  TriangleBvh bvh(mesh);
  std::vector<DepthFrame> frames;
  frames.reserve(trajectory.size());
  for (const Camera& cam : trajectory) frames.push_back(render_depth(bvh, cam, far_plane));
  TrainingPair pair;
  VoxelGrid tsdf = fuse_tsdf(frames, params);
  pair.input = split_channels(tsdf, params.truncation);
  pair.target = mesh_to_df(mesh, params.meta, params.truncation);
  pair.class_label = class_label;
  return pair;
}

// --- Dataset manifest (tab-separated) ---------------------------------------

struct DatasetEntry {
  std::string model_id;
  int class_label = 0;
  int trajectory_id = 0;
  std::string input_path;   // VXG1, fused TSDF
  std::string target_path;  // VXG1, unsigned DF
};

inline void save_dataset_manifest(const std::vector<DatasetEntry>& entries,
                                  const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("save_dataset_manifest: cannot open " + path);
  for (const auto& e : entries)
    os << e.model_id << '\t' << e.class_label << '\t' << e.trajectory_id << '\t' << e.input_path
       << '\t' << e.target_path << '\n';
}

inline std::vector<DatasetEntry> load_dataset_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("load_dataset_manifest: cannot open " + path);
  std::vector<DatasetEntry> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    DatasetEntry e;
    std::string label, traj;
    if (!std::getline(ss, e.model_id, '\t') || !std::getline(ss, label, '\t') ||
        !std::getline(ss, traj, '\t') || !std::getline(ss, e.input_path, '\t') ||
        !std::getline(ss, e.target_path, '\t'))
      throw DataError("load_dataset_manifest: bad line in " + path);
    e.class_label = std::stoi(label);
    e.trajectory_id = std::stoi(traj);
    entries.push_back(e);
  }
  return entries;
}

}  // namespace vcomp
