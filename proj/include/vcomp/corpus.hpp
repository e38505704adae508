#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vcomp/mesh.hpp"

namespace vcomp {

// Procedural 4-class corpus. The families exercise the structures completion
// has to infer: thin legs, wings, slender stems. Parts are butt-joined or
// overlap as closed solids, and every model is normalized to a unit bounding
// diagonal at the origin.

inline const std::array<const char*, 4> kCorpusClasses = {"table", "chair", "airplane", "lamp"};

namespace corpus_detail {

inline TriMesh box(Vec3 center, Vec3 half) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({center.x + (i & 1 ? half.x : -half.x),
                          center.y + (i & 2 ? half.y : -half.y),
                          center.z + (i & 4 ? half.z : -half.z)});
  auto quad = [&](int a, int b, int c, int d) {
    m.triangles.push_back({uint32_t(a), uint32_t(b), uint32_t(c)});
    m.triangles.push_back({uint32_t(a), uint32_t(c), uint32_t(d)});
  };
  quad(0, 1, 3, 2);
  quad(5, 4, 6, 7);
  quad(0, 4, 5, 1);
  quad(2, 3, 7, 6);
  quad(0, 2, 6, 4);
  quad(1, 5, 7, 3);
  return m;
}

// Solid of revolution around the +y axis. The profile runs bottom to top as
// (radius, y) pairs; zero radii pinch the surface closed.
inline TriMesh lathe(const std::vector<std::pair<float, float>>& profile, int segments,
                     Vec3 offset = {0, 0, 0}) {
  TriMesh m;
  std::vector<std::vector<uint32_t>> rings;
  for (const auto& [r, y] : profile) {
    std::vector<uint32_t> ring;
    if (r <= 1e-6f) {
      ring.push_back(uint32_t(m.vertices.size()));
      m.vertices.push_back({offset.x, offset.y + y, offset.z});
    } else {
      for (int s = 0; s < segments; ++s) {
        float a = 2.0f * float(M_PI) * float(s) / float(segments);
        ring.push_back(uint32_t(m.vertices.size()));
        m.vertices.push_back({offset.x + r * std::cos(a), offset.y + y, offset.z + r * std::sin(a)});
      }
    }
    rings.push_back(std::move(ring));
  }
  for (size_t i = 0; i + 1 < rings.size(); ++i) {
    const auto& lo = rings[i];
    const auto& hi = rings[i + 1];
    if (lo.size() == 1 && hi.size() == 1) continue;
    if (lo.size() == 1) {
      for (int s = 0; s < segments; ++s)
        m.triangles.push_back({lo[0], hi[size_t((s + 1) % segments)], hi[size_t(s)]});
    } else if (hi.size() == 1) {
      for (int s = 0; s < segments; ++s)
        m.triangles.push_back({lo[size_t(s)], lo[size_t((s + 1) % segments)], hi[0]});
    } else {
      for (int s = 0; s < segments; ++s) {
        uint32_t a = lo[size_t(s)], b = lo[size_t((s + 1) % segments)];
        uint32_t c = hi[size_t((s + 1) % segments)], d = hi[size_t(s)];
        m.triangles.push_back({a, b, c});
        m.triangles.push_back({a, c, d});
      }
    }
  }
  return m;
}

inline TriMesh cylinder(Vec3 base_center, float radius, float height, int segments) {
  TriMesh m = lathe({{0.0f, 0.0f}, {radius, 0.0f}, {radius, height}, {0.0f, height}}, segments);
  for (auto& v : m.vertices) v += base_center;
  return m;
}

inline void normalize_model(TriMesh& m) {
  Aabb b = m.bounds();
  Vec3 c = b.center();
  float scale = b.diagonal() > 0 ? 1.0f / b.diagonal() : 1.0f;
  for (auto& v : m.vertices) v = (v - c) * scale;
}

inline TriMesh make_table(Rng& rng) {
  float w = rng.uniformf(0.35f, 0.6f), d = rng.uniformf(0.25f, 0.55f);
  float h = rng.uniformf(0.3f, 0.55f);
  float top_t = rng.uniformf(0.02f, 0.05f);
  float leg_t = rng.uniformf(0.02f, 0.05f);
  bool round_legs = rng.uniform() < 0.4;
  float inset = rng.uniformf(0.01f, 0.06f) + leg_t;

  TriMesh m = box({0, h + top_t, 0}, {w, top_t, d});
  for (int sx = -1; sx <= 1; sx += 2)
    for (int sz = -1; sz <= 1; sz += 2) {
      Vec3 at{float(sx) * (w - inset), 0.0f, float(sz) * (d - inset)};
      if (round_legs)
        m.append(cylinder(at, leg_t, h, 10));
      else {
        TriMesh leg = box({at.x, h * 0.5f, at.z}, {leg_t, h * 0.5f, leg_t});
        m.append(leg);
      }
    }
  if (rng.uniform() < 0.35) {  // lower shelf
    float sh = rng.uniformf(0.08f, 0.5f) * h;
    m.append(box({0, sh, 0}, {w - inset - leg_t, top_t * 0.8f, d - inset - leg_t}));
  }
  normalize_model(m);
  return m;
}

inline TriMesh make_chair(Rng& rng) {
  float seat_w = rng.uniformf(0.2f, 0.3f), seat_d = rng.uniformf(0.2f, 0.3f);
  float seat_h = rng.uniformf(0.22f, 0.35f);
  float seat_t = rng.uniformf(0.02f, 0.04f);
  float back_h = rng.uniformf(0.25f, 0.45f);
  float back_t = rng.uniformf(0.015f, 0.035f);
  float leg_t = rng.uniformf(0.015f, 0.035f);
  bool round_legs = rng.uniform() < 0.5;

  TriMesh m = box({0, seat_h + seat_t, 0}, {seat_w, seat_t, seat_d});
  float inset = leg_t + 0.01f;
  for (int sx = -1; sx <= 1; sx += 2)
    for (int sz = -1; sz <= 1; sz += 2) {
      Vec3 at{float(sx) * (seat_w - inset), 0.0f, float(sz) * (seat_d - inset)};
      if (round_legs)
        m.append(cylinder(at, leg_t, seat_h, 8));
      else
        m.append(box({at.x, seat_h * 0.5f, at.z}, {leg_t, seat_h * 0.5f, leg_t}));
    }
  // Backrest rises from the seat's rear edge.
  float back_base = seat_h + 2.0f * seat_t;
  m.append(box({0, back_base + back_h * 0.5f, -(seat_d - back_t)},
               {seat_w, back_h * 0.5f, back_t}));
  normalize_model(m);
  return m;
}

inline TriMesh make_airplane(Rng& rng) {
  float body_len = rng.uniformf(0.5f, 0.8f);
  float body_r = rng.uniformf(0.05f, 0.09f);
  float wing_span = rng.uniformf(0.45f, 0.8f);
  float wing_chord = rng.uniformf(0.08f, 0.16f);
  float wing_t = rng.uniformf(0.01f, 0.02f);
  float wing_at = rng.uniformf(-0.05f, 0.12f);
  float tail_h = rng.uniformf(0.08f, 0.16f);

  // Fuselage: a lathe along y, rotated onto the x axis.
  TriMesh fus = lathe({{0.0f, -body_len * 0.5f},
                       {body_r * 0.6f, -body_len * 0.38f},
                       {body_r, -body_len * 0.1f},
                       {body_r, body_len * 0.25f},
                       {body_r * 0.35f, body_len * 0.45f},
                       {0.0f, body_len * 0.5f}},
                      12);
  for (auto& v : fus.vertices) v = {v.y, v.z, v.x};  // y axis -> x axis

  TriMesh m = fus;
  m.append(box({wing_at, 0, 0}, {wing_chord, wing_t, wing_span}));            // main wings
  m.append(box({-body_len * 0.42f, 0, 0}, {wing_chord * 0.5f, wing_t, wing_span * 0.35f}));
  m.append(box({-body_len * 0.45f, tail_h * 0.5f, 0}, {wing_chord * 0.5f, tail_h * 0.5f, wing_t}));
  normalize_model(m);
  return m;
}

inline TriMesh make_lamp(Rng& rng) {
  float base_r = rng.uniformf(0.08f, 0.16f);
  float base_h = rng.uniformf(0.015f, 0.04f);
  float stem_r = rng.uniformf(0.012f, 0.028f);
  float stem_h = rng.uniformf(0.3f, 0.55f);
  float shade_r0 = rng.uniformf(0.05f, 0.1f);
  float shade_r1 = rng.uniformf(0.12f, 0.22f);
  float shade_h = rng.uniformf(0.1f, 0.2f);
  bool shade_up = rng.uniform() < 0.3;
  if (shade_up) std::swap(shade_r0, shade_r1);

  float y0 = stem_h + base_h;
  TriMesh m = lathe({{0.0f, 0.0f},
                     {base_r, 0.0f},
                     {base_r, base_h},
                     {stem_r, base_h * 1.5f},
                     {stem_r, y0},
                     {shade_r1, y0},
                     {shade_r0, y0 + shade_h},
                     {0.0f, y0 + shade_h}},
                    14);
  normalize_model(m);
  return m;
}

}  // namespace corpus_detail

inline TriMesh make_corpus_model(int class_label, uint64_t seed) {
  Rng rng(seed);
  switch (class_label) {
    case 0: return corpus_detail::make_table(rng);
    case 1: return corpus_detail::make_chair(rng);
    case 2: return corpus_detail::make_airplane(rng);
    case 3: return corpus_detail::make_lamp(rng);
    default: throw std::invalid_argument("make_corpus_model: unknown class");
  }
}

struct CorpusEntry {
  std::string model_id;
  int class_label = 0;
  std::string mesh_path;
  bool test_split = false;
};

inline void save_corpus_manifest(const std::vector<CorpusEntry>& entries,
                                 const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("save_corpus_manifest: cannot open " + path);
  for (const auto& e : entries)
    os << e.model_id << '\t' << e.class_label << '\t' << e.mesh_path << '\t'
       << (e.test_split ? "test" : "train") << '\n';
}

inline std::vector<CorpusEntry> load_corpus_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("load_corpus_manifest: cannot open " + path);
  std::vector<CorpusEntry> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    CorpusEntry e;
    std::string label, split;
    if (!std::getline(ss, e.model_id, '\t') || !std::getline(ss, label, '\t') ||
        !std::getline(ss, e.mesh_path, '\t') || !std::getline(ss, split, '\t'))
      throw DataError("load_corpus_manifest: bad line in " + path);
    e.class_label = std::stoi(label);
    e.test_split = split == "test";
    entries.push_back(std::move(e));
  }
  return entries;
}

// Deterministic corpus generation: n_per_class models per family, the last
// quarter of each family held out as the test split.
inline std::vector<CorpusEntry> gen_corpus(const std::string& dir, int n_per_class, uint64_t seed,
                                           bool force = false) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ConfigError("gen_corpus: output directory not empty (use --force): " + dir);
  fs::create_directories(dir);
  std::vector<CorpusEntry> entries;
  int test_from = n_per_class - n_per_class / 4;
  for (int cls = 0; cls < 4; ++cls) {
    for (int i = 0; i < n_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%04d", kCorpusClasses[size_t(cls)], i);
      uint64_t model_seed = seed * 1000003u + uint64_t(cls) * 65537u + uint64_t(i);
      TriMesh mesh = make_corpus_model(cls, model_seed);
      CorpusEntry e;
      e.model_id = id;
      e.class_label = cls;
      e.mesh_path = dir + "/" + id + ".obj";
      e.test_split = i >= test_from;
      save_obj(mesh, e.mesh_path);
      entries.push_back(std::move(e));
    }
  }
  save_corpus_manifest(entries, dir + "/corpus.tsv");
  return entries;
}

}  // namespace vcomp
