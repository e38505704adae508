#pragma once

#include <filesystem>

#include "vcomp/ann.hpp"
#include "vcomp/fusion.hpp"
#include "vcomp/pca.hpp"
#include "vcomp/vxg_io.hpp"

namespace vcomp {

struct SynthesisParams {
  int levels = 3;           // level l at dimension 2^l * 32, so 3 -> 128^3
  int passes = 2;           // feature/copy sweeps per level
  float band_iso = 1.0f;    // voxels on the isosurface: value <= iso
  int patch_radius = 2;     // band dilation; matches the 5x5x5 feature support
  int pca_dim = 100;
  size_t ann_visits = 1024;  // probe budget; SIZE_MAX = exact search
  float truncation = 2.5f;
};

struct SynthesisPyramid {
  std::vector<VoxelGrid> levels;  // level l at dims 2^l * base, values in own-level voxel units
  std::string provenance;         // model id, or "prediction"
};

// Neighbor pyramids come straight from the mesh at every resolution. Every
// level stores distances in base-level voxel units with a shared truncation,
// so values are comparable across levels and block-averaging a level
// reproduces the one below it.
inline SynthesisPyramid build_pyramid(const TriMesh& mesh, const GridMeta& base_meta, int levels,
                                      float truncation = 2.5f, const std::string& provenance = "") {
  if (levels < 1) throw std::invalid_argument("build_pyramid: levels must be >= 1");
  SynthesisPyramid pyr;
  pyr.provenance = provenance;
  for (int l = 0; l < levels; ++l) {
    float factor = float(1 << l);
    VoxelGrid g = mesh_to_df(mesh, refine_meta(base_meta, 1 << l), truncation * factor);
    for (auto& v : g.values) v /= factor;
    pyr.levels.push_back(std::move(g));
  }
  return pyr;
}

// Doubling upsample for the prediction pyramid. Values are already in
// base-level units, so this is plain trilinear interpolation.
inline VoxelGrid upsample_double(const VoxelGrid& coarse, float truncation = 2.5f) {
  GridMeta fine_meta = refine_meta(coarse.meta, 2);
  VoxelGrid fine(fine_meta, coarse.kind);
  const auto& fd = fine_meta.dims;
  parallel_chunks(size_t(fd[2]), [&](size_t zb, size_t ze) {
    for (size_t z = zb; z < ze; ++z)
      for (int y = 0; y < fd[1]; ++y)
        for (int x = 0; x < fd[0]; ++x) {
          Vec3 p{(float(x) + 0.5f) * 0.5f - 0.5f, (float(y) + 0.5f) * 0.5f - 0.5f,
                 (float(z) + 0.5f) * 0.5f - 0.5f};
          p.x = std::clamp(p.x, 0.0f, float(coarse.meta.dims[0] - 1));
          p.y = std::clamp(p.y, 0.0f, float(coarse.meta.dims[1] - 1));
          p.z = std::clamp(p.z, 0.0f, float(coarse.meta.dims[2] - 1));
          fine.at(x, y, int(z)) = std::clamp(trilinear_sample(coarse, p), 0.0f, truncation);
        }
  });
  return fine;
}

// Prediction pyramid seeded by the coarse network output; upper levels start
// as upsamplings and get synthesized in place.
inline SynthesisPyramid init_prediction_pyramid(const VoxelGrid& prediction, int levels,
                                                float truncation = 2.5f) {
  SynthesisPyramid pyr;
  pyr.provenance = "prediction";
  VoxelGrid base = prediction;
  base.kind = GridKind::UnsignedDF;
  for (auto& v : base.values) v = std::clamp(v, 0.0f, truncation);
  pyr.levels.push_back(std::move(base));
  for (int l = 1; l < levels; ++l)
    pyr.levels.push_back(upsample_double(pyr.levels.back(), truncation));
  return pyr;
}

// Voxels whose (2r+1)^3 neighborhood touches the isosurface band. Computed as
// a threshold pass plus three separable binary dilations.
inline std::vector<uint8_t> surface_band(const VoxelGrid& df, int patch_radius,
                                         float band_iso = 1.0f) {
  const auto& d = df.meta.dims;
  size_t n = df.values.size();
  std::vector<uint8_t> mask(n), tmp(n);
  for (size_t i = 0; i < n; ++i) mask[i] = df.values[i] <= band_iso ? 1 : 0;
  if (patch_radius <= 0) return mask;

  auto dilate_axis = [&](const std::vector<uint8_t>& src, std::vector<uint8_t>& dst, int axis) {
    int stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
    int extent = d[axis];
    parallel_chunks(size_t(d[2]), [&](size_t zb, size_t ze) {
      for (size_t z = zb; z < ze; ++z)
        for (int y = 0; y < d[1]; ++y)
          for (int x = 0; x < d[0]; ++x) {
            size_t i = (z * size_t(d[1]) + y) * d[0] + x;
            int c = axis == 0 ? x : (axis == 1 ? y : int(z));
            uint8_t v = 0;
            for (int o = -patch_radius; o <= patch_radius && !v; ++o) {
              int cc = c + o;
              if (cc < 0 || cc >= extent) continue;
              v = src[size_t(ptrdiff_t(i) + ptrdiff_t(o) * stride)];
            }
            dst[i] = v;
          }
    });
  };
  dilate_axis(mask, tmp, 0);
  dilate_axis(tmp, mask, 1);
  dilate_axis(mask, tmp, 2);
  return tmp;
}

constexpr int kPatchFeatureDim = 125 + 27;

// 5x5x5 values at the voxel's level followed by the 3x3x3 block around v/2 at
// the parent level, both x-fastest with clamp-to-edge sampling.
inline void compute_feature(const VoxelGrid& level, const VoxelGrid& parent, int x, int y, int z,
                            float* out) {
  if (!level.meta.in_bounds(x, y, z))
    throw std::out_of_range("compute_feature: voxel outside grid");
  int i = 0;
  for (int dz = -2; dz <= 2; ++dz)
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) out[i++] = level.at_clamped(x + dx, y + dy, z + dz);
  int px = x / 2, py = y / 2, pz = z / 2;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) out[i++] = parent.at_clamped(px + dx, py + dy, pz + dz);
}

inline std::vector<float> compute_feature(const VoxelGrid& level, const VoxelGrid& parent, int x,
                                          int y, int z) {
  std::vector<float> f(kPatchFeatureDim);
  compute_feature(level, parent, x, y, z, f.data());
  return f;
}

// Candidate set for one level: projected features of every surface-band voxel
// of every neighbor, with back references to the donor voxel.
struct LevelIndex {
  PcaBasis basis;
  KdAnnIndex ann;
  std::vector<uint32_t> donor;        // candidate -> neighbor index
  std::vector<uint32_t> donor_voxel;  // candidate -> linear voxel in the level grid
};

inline LevelIndex build_level_index(const std::vector<SynthesisPyramid>& neighbors, int level,
                                    const SynthesisParams& params) {
  if (level < 1) throw std::invalid_argument("build_level_index: level must be >= 1");
  struct Cand {
    uint32_t donor, voxel;
  };
  std::vector<Cand> cands;
  for (uint32_t r = 0; r < neighbors.size(); ++r) {
    const VoxelGrid& g = neighbors[r].levels.at(size_t(level));
    std::vector<uint8_t> band = surface_band(g, params.patch_radius, params.band_iso);
    for (uint32_t i = 0; i < band.size(); ++i)
      if (band[i]) cands.push_back({r, i});
  }
  if (cands.empty())
    throw DataError("build_level_index: no surface band in any neighbor at this level");

  // Raw features, gathered once for the PCA fit and reused for projection.
  std::vector<float> raw(cands.size() * size_t(kPatchFeatureDim));
  parallel_chunks(cands.size(), [&](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) {
      const VoxelGrid& g = neighbors[cands[i].donor].levels[size_t(level)];
      const VoxelGrid& p = neighbors[cands[i].donor].levels[size_t(level - 1)];
      const auto& d = g.meta.dims;
      uint32_t v = cands[i].voxel;
      int x = int(v % uint32_t(d[0]));
      int y = int((v / uint32_t(d[0])) % uint32_t(d[1]));
      int z = int(v / uint32_t(d[0] * d[1]));
      compute_feature(g, p, x, y, z, raw.data() + i * size_t(kPatchFeatureDim));
    }
  });

  LevelIndex out;
  out.basis = fit_pca(raw, int(cands.size()), kPatchFeatureDim, params.pca_dim);
  std::vector<float> projected(cands.size() * size_t(out.basis.out_dim));
  parallel_chunks(cands.size(), [&](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i)
      out.basis.project(raw.data() + i * size_t(kPatchFeatureDim),
                        projected.data() + i * size_t(out.basis.out_dim));
  });
  out.donor.reserve(cands.size());
  out.donor_voxel.reserve(cands.size());
  for (const auto& c : cands) {
    out.donor.push_back(c.donor);
    out.donor_voxel.push_back(c.voxel);
  }
  out.ann = KdAnnIndex(std::move(projected), out.basis.out_dim);
  return out;
}

// One synthesis sweep set over level l of the prediction pyramid: band voxels
// take the value of their nearest donor voxel in feature space. Updates are
// gathered from a snapshot and committed in scan order, then a closure stage
// keeps rewriting until every voxel in the final band carries a donor value.
inline void synthesize_level(SynthesisPyramid& pred, const std::vector<SynthesisPyramid>& neighbors,
                             int level, const LevelIndex& index, const SynthesisParams& params,
                             int passes) {
  VoxelGrid& grid = pred.levels.at(size_t(level));
  const VoxelGrid& parent = pred.levels.at(size_t(level - 1));
  const auto& d = grid.meta.dims;
  std::vector<uint8_t> stamped(grid.values.size(), 0);

  auto run_pass = [&](const std::vector<uint32_t>& targets) {
    std::vector<float> updates(targets.size());
    const VoxelGrid snapshot = grid;
    parallel_chunks(targets.size(), [&](size_t b, size_t e) {
      std::vector<float> raw(kPatchFeatureDim), proj(size_t(index.basis.out_dim));
      for (size_t i = b; i < e; ++i) {
        uint32_t v = targets[i];
        int x = int(v % uint32_t(d[0]));
        int y = int((v / uint32_t(d[0])) % uint32_t(d[1]));
        int z = int(v / uint32_t(d[0] * d[1]));
        compute_feature(snapshot, parent, x, y, z, raw.data());
        index.basis.project(raw.data(), proj.data());
        KdAnnIndex::Hit hit = index.ann.query(proj.data(), params.ann_visits);
        updates[i] = neighbors[index.donor[hit.id]].levels[size_t(level)]
                         .values[index.donor_voxel[hit.id]];
      }
    });
    for (size_t i = 0; i < targets.size(); ++i) {
      grid.values[targets[i]] = updates[i];
      stamped[targets[i]] = 1;
    }
  };

  auto band_targets = [&]() {
    std::vector<uint8_t> band = surface_band(grid, params.patch_radius, params.band_iso);
    std::vector<uint32_t> targets;
    for (uint32_t i = 0; i < band.size(); ++i)
      if (band[i]) targets.push_back(i);
    return targets;
  };

  for (int pass = 0; pass < passes; ++pass) run_pass(band_targets());

  // Closure: the band may shift as values change; every band voxel of the
  // final field must hold a donor value.
  if (passes > 0) {
    for (int round = 0; round < 8; ++round) {
      std::vector<uint32_t> missing;
      for (uint32_t v : band_targets())
        if (!stamped[v]) missing.push_back(v);
      if (missing.empty()) break;
      run_pass(missing);
    }
  }
}

// Coarse-to-fine synthesis from the 32^3 prediction to the full-resolution
// DF: each level starts as an upsampling of the one below and band voxels are
// rewritten from the retrieved neighbors. Level 0 stays the network output.
inline VoxelGrid synthesize(const VoxelGrid& prediction,
                            const std::vector<SynthesisPyramid>& neighbors,
                            const SynthesisParams& params) {
  if (neighbors.empty()) throw std::invalid_argument("synthesize: need at least one neighbor");
  for (const auto& nb : neighbors)
    if (int(nb.levels.size()) < params.levels)
      throw std::invalid_argument("synthesize: neighbor pyramid too shallow");
  SynthesisPyramid pred;
  pred.provenance = "prediction";
  VoxelGrid base = prediction;
  base.kind = GridKind::UnsignedDF;
  for (auto& v : base.values) v = std::clamp(v, 0.0f, params.truncation);
  pred.levels.push_back(std::move(base));

  for (int l = 1; l < params.levels; ++l) {
    pred.levels.push_back(upsample_double(pred.levels.back(), params.truncation));
    LevelIndex index = build_level_index(neighbors, l, params);
    synthesize_level(pred, neighbors, l, index, params, params.passes);
  }
  return pred.levels.back();
}

// --- Pyramid store: <dir>/<model_id>.L<level>.vxg ---------------------------

inline std::string pyramid_level_path(const std::string& dir, const std::string& model_id,
                                      int level) {
  return dir + "/" + model_id + ".L" + std::to_string(level) + ".vxg";
}

inline void save_pyramid(const SynthesisPyramid& pyr, const std::string& dir,
                         const std::string& model_id) {
  std::filesystem::create_directories(dir);
  for (size_t l = 0; l < pyr.levels.size(); ++l)
    write_vxg(pyr.levels[l], pyramid_level_path(dir, model_id, int(l)));
}

inline SynthesisPyramid load_pyramid(const std::string& dir, const std::string& model_id,
                                     int levels) {
  SynthesisPyramid pyr;
  pyr.provenance = model_id;
  for (int l = 0; l < levels; ++l)
    pyr.levels.push_back(read_vxg(pyramid_level_path(dir, model_id, l)));
  return pyr;
}

inline bool pyramid_exists(const std::string& dir, const std::string& model_id, int levels) {
  for (int l = 0; l < levels; ++l)
    if (!std::filesystem::exists(pyramid_level_path(dir, model_id, l))) return false;
  return true;
}

}  // namespace vcomp
