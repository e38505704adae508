#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vcomp/core.hpp"

namespace vcomp {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  Aabb bounds() const {
    Aabb b;
    for (const auto& v : vertices) b.expand(v);
    return b;
  }

  void append(const TriMesh& o) {
    uint32_t base = uint32_t(vertices.size());
    vertices.insert(vertices.end(), o.vertices.begin(), o.vertices.end());
    for (auto t : o.triangles) {
      t[0] += base;
      t[1] += base;
      t[2] += base;
      triangles.push_back(t);
    }
  }
};

inline double triangle_area(const DVec3& a, const DVec3& b, const DVec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

// Drops triangles with out-of-range indices or near-zero area.
inline void clean_mesh(TriMesh& mesh, double min_area = 1e-12) {
  std::vector<std::array<uint32_t, 3>> kept;
  kept.reserve(mesh.triangles.size());
  uint32_t n = uint32_t(mesh.vertices.size());
  for (const auto& t : mesh.triangles) {
    if (t[0] >= n || t[1] >= n || t[2] >= n) continue;
    DVec3 a(mesh.vertices[t[0]]), b(mesh.vertices[t[1]]), c(mesh.vertices[t[2]]);
    if (triangle_area(a, b, c) < min_area) continue;
    kept.push_back(t);
  }
  mesh.triangles.swap(kept);
}

// Closest distance from p to triangle abc (Eberly-style region walk).
inline double point_triangle_distance(const DVec3& p, const DVec3& a, const DVec3& b,
                                      const DVec3& c) {
  DVec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return norm(ap);

  DVec3 bp = p - b;
  double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return norm(bp);

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    double v = d1 / (d1 - d3);
    return norm(ap - ab * v);
  }

  DVec3 cp = p - c;
  double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return norm(cp);

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    double w = d2 / (d2 - d6);
    return norm(ap - ac * w);
  }

  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return norm(p - (b + (c - b) * w));
  }

  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return norm(p - (a + ab * v + ac * w));
}

inline double point_mesh_distance(const DVec3& p, const TriMesh& mesh) {
  double best = 1e300;
  for (const auto& t : mesh.triangles) {
    double d = point_triangle_distance(p, DVec3(mesh.vertices[t[0]]), DVec3(mesh.vertices[t[1]]),
                                       DVec3(mesh.vertices[t[2]]));
    best = std::min(best, d);
  }
  return best;
}

// Moller-Trumbore. Returns t >= 0 along dir, or a negative value on miss.
inline double ray_triangle(const DVec3& orig, const DVec3& dir, const DVec3& a, const DVec3& b,
                           const DVec3& c) {
  constexpr double kEps = 1e-12;
  DVec3 e1 = b - a, e2 = c - a;
  DVec3 pv = cross(dir, e2);
  double det = dot(e1, pv);
  if (std::abs(det) < kEps) return -1.0;
  double inv = 1.0 / det;
  DVec3 tv = orig - a;
  double u = dot(tv, pv) * inv;
  if (u < -1e-9 || u > 1.0 + 1e-9) return -1.0;
  DVec3 qv = cross(tv, e1);
  double v = dot(dir, qv) * inv;
  if (v < -1e-9 || u + v > 1.0 + 1e-9) return -1.0;
  double t = dot(e2, qv) * inv;
  return t >= 0.0 ? t : -1.0;
}

// Parity test against every triangle. Valid for closed meshes whose parts are
// butt-joined or disjoint; ray direction is slightly irrational to dodge
// edge-on hits.
inline bool point_inside_mesh(const DVec3& p, const TriMesh& mesh) {
  DVec3 dir = normalized(DVec3{0.577215664, 0.301029995, 0.693147180});
  int crossings = 0;
  for (const auto& t : mesh.triangles) {
    double hit = ray_triangle(p, dir, DVec3(mesh.vertices[t[0]]), DVec3(mesh.vertices[t[1]]),
                              DVec3(mesh.vertices[t[2]]));
    if (hit > 1e-12) ++crossings;
  }
  return (crossings & 1) != 0;
}

// --- Wavefront OBJ ---------------------------------------------------------

inline TriMesh load_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("load_obj: cannot open " + path);
  TriMesh mesh;
  std::string line;
  while (std::getline(is, line)) {
    if (line.size() < 2) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x >> v.y >> v.z;
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<uint32_t> ids;
      std::string tok;
      while (ss >> tok) {
        // "i", "i/t", "i/t/n", "i//n" — the vertex index leads.
        long raw = std::strtol(tok.c_str(), nullptr, 10);
        if (raw == 0) throw DataError("load_obj: bad face index in " + path);
        long resolved = raw > 0 ? raw - 1 : long(mesh.vertices.size()) + raw;
        ids.push_back(uint32_t(resolved));
      }
      for (size_t i = 2; i < ids.size(); ++i)
        mesh.triangles.push_back({ids[0], ids[i - 1], ids[i]});
    }
  }
  clean_mesh(mesh);
  return mesh;
}

inline void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("save_obj: cannot open " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    os << buf;
  }
  for (const auto& t : mesh.triangles)
    os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!os) throw DataError("save_obj: write failed for " + path);
}

// --- Binary little-endian PLY ----------------------------------------------

inline void save_ply(const TriMesh& mesh, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_ply: cannot open " + path);
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << mesh.vertices.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  os << "element face " << mesh.triangles.size() << "\n";
  os << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices)
    os.write(reinterpret_cast<const char*>(&v.x), 3 * sizeof(float));
  for (const auto& t : mesh.triangles) {
    uint8_t n = 3;
    os.write(reinterpret_cast<const char*>(&n), 1);
    int32_t ids[3] = {int32_t(t[0]), int32_t(t[1]), int32_t(t[2])};
    os.write(reinterpret_cast<const char*>(ids), sizeof(ids));
  }
  if (!os) throw DataError("save_ply: write failed for " + path);
}

inline TriMesh load_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_ply: cannot open " + path);
  std::string line;
  size_t n_vertices = 0, n_faces = 0;
  bool little = false;
  if (!std::getline(is, line) || line != "ply") throw DataError("load_ply: not a PLY: " + path);
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      little = (fmt == "binary_little_endian");
    } else if (tag == "element") {
      std::string what;
      size_t count;
      ss >> what >> count;
      if (what == "vertex") n_vertices = count;
      if (what == "face") n_faces = count;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!little) throw DataError("load_ply: only binary little-endian supported: " + path);
  TriMesh mesh;
  mesh.vertices.resize(n_vertices);
  for (auto& v : mesh.vertices) is.read(reinterpret_cast<char*>(&v.x), 3 * sizeof(float));
  mesh.triangles.reserve(n_faces);
  for (size_t i = 0; i < n_faces; ++i) {
    uint8_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 1);
    std::vector<int32_t> ids(n);
    is.read(reinterpret_cast<char*>(ids.data()), std::streamsize(n * sizeof(int32_t)));
    for (size_t j = 2; j < ids.size(); ++j)
      mesh.triangles.push_back({uint32_t(ids[0]), uint32_t(ids[j - 1]), uint32_t(ids[j])});
  }
  if (!is) throw DataError("load_ply: truncated file " + path);
  clean_mesh(mesh);
  return mesh;
}

inline void write_mesh(const TriMesh& mesh, const std::string& path) {
  auto dot_pos = path.find_last_of('.');
  std::string ext = dot_pos == std::string::npos ? "" : path.substr(dot_pos + 1);
  if (ext == "obj")
    save_obj(mesh, path);
  else if (ext == "ply")
    save_ply(mesh, path);
  else
    throw DataError("write_mesh: unknown extension for " + path);
}

inline TriMesh load_mesh(const std::string& path) {
  auto dot_pos = path.find_last_of('.');
  std::string ext = dot_pos == std::string::npos ? "" : path.substr(dot_pos + 1);
  if (ext == "obj") return load_obj(path);
  if (ext == "ply") return load_ply(path);
  throw DataError("load_mesh: unknown extension for " + path);
}

}  // namespace vcomp
