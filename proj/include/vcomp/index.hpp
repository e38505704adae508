#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "vcomp/core.hpp"

namespace vcomp {

struct ShapeIndexEntry {
  std::string model_id;
  int class_label = 0;
  std::vector<float> feature;    // L2-normalized descriptor
  std::string pyramid_path;      // directory holding <id>.L<level>.vxg files
  std::string mesh_path;         // source mesh, used to materialize pyramids
};

// Immutable after build; queries are safe from any number of threads.
struct ShapeIndex {
  int feature_width = 0;
  std::vector<ShapeIndexEntry> entries;
  std::set<std::string> excluded;  // benchmark ids, never retrievable

  void add(ShapeIndexEntry e) {
    if (excluded.count(e.model_id))
      throw std::invalid_argument("ShapeIndex: id is excluded: " + e.model_id);
    if (feature_width == 0) feature_width = int(e.feature.size());
    if (int(e.feature.size()) != feature_width)
      throw std::invalid_argument("ShapeIndex: feature width mismatch");
    entries.push_back(std::move(e));
  }
};

struct RetrievalResult {
  std::vector<std::pair<std::string, float>> hits;  // (model_id, distance) ascending
  bool clipped = false;                             // k exceeded the index size
};

// Exact k nearest neighbors by Euclidean distance, ascending, ties broken by
// model id. Excluded ids never appear.
inline RetrievalResult knn_retrieve(const ShapeIndex& index, const std::vector<float>& query,
                                    int k) {
  if (k < 1) throw std::invalid_argument("knn_retrieve: k must be >= 1");
  if (index.entries.empty()) throw std::invalid_argument("knn_retrieve: empty index");
  if (int(query.size()) != index.feature_width)
    throw std::invalid_argument("knn_retrieve: query width mismatch");

  struct Scored {
    float dist;
    const ShapeIndexEntry* entry;
  };
  std::vector<Scored> scored;
  scored.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    if (index.excluded.count(e.model_id)) continue;
    double d2 = 0.0;
    for (size_t i = 0; i < query.size(); ++i) {
      double d = double(query[i]) - double(e.feature[i]);
      d2 += d * d;
    }
    scored.push_back({float(std::sqrt(d2)), &e});
  }
  auto cmp = [](const Scored& a, const Scored& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.entry->model_id < b.entry->model_id;
  };
  RetrievalResult out;
  out.clipped = size_t(k) > scored.size();
  size_t take = std::min(size_t(k), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(take), scored.end(), cmp);
  for (size_t i = 0; i < take; ++i)
    out.hits.emplace_back(scored[i].entry->model_id, scored[i].dist);
  return out;
}

inline const ShapeIndexEntry* index_find(const ShapeIndex& index, const std::string& id) {
  for (const auto& e : index.entries)
    if (e.model_id == id) return &e;
  return nullptr;
}

struct LabeledQuery {
  std::vector<float> feature;
  int true_label = 0;
};

// Fraction of queries whose majority top-k class matches the truth; majority
// ties count as correct when the true class is among the tied classes.
inline double retrieval_accuracy(const ShapeIndex& index, const std::vector<LabeledQuery>& queries,
                                 int k) {
  if (queries.empty()) return 0.0;
  size_t correct = 0;
  for (const auto& q : queries) {
    RetrievalResult r = knn_retrieve(index, q.feature, k);
    std::vector<int> votes;
    for (const auto& [id, dist] : r.hits) {
      const ShapeIndexEntry* e = index_find(index, id);
      votes.push_back(e ? e->class_label : -1);
    }
    std::vector<int> count(64, 0);
    int best = 0;
    for (int v : votes)
      if (v >= 0 && v < 64) best = std::max(best, ++count[size_t(v)]);
    if (q.true_label >= 0 && q.true_label < 64 && count[size_t(q.true_label)] == best && best > 0)
      ++correct;
  }
  return double(correct) / double(queries.size());
}

// --- Index file: header (magic, count, width) + per-entry records -----------

inline void save_index(const ShapeIndex& index, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_index: cannot open " + path);
  os.write("VIX1", 4);
  uint32_t count = uint32_t(index.entries.size());
  uint32_t width = uint32_t(index.feature_width);
  os.write(reinterpret_cast<const char*>(&count), 4);
  os.write(reinterpret_cast<const char*>(&width), 4);
  auto put_str = [&](const std::string& s) {
    uint32_t n = uint32_t(s.size());
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(s.data(), n);
  };
  for (const auto& e : index.entries) {
    put_str(e.model_id);
    int32_t label = e.class_label;
    os.write(reinterpret_cast<const char*>(&label), 4);
    os.write(reinterpret_cast<const char*>(e.feature.data()),
             std::streamsize(e.feature.size() * 4));
    put_str(e.pyramid_path);
    put_str(e.mesh_path);
  }
  uint32_t n_excl = uint32_t(index.excluded.size());
  os.write(reinterpret_cast<const char*>(&n_excl), 4);
  for (const auto& id : index.excluded) put_str(id);
  if (!os) throw DataError("save_index: write failed for " + path);
}

inline ShapeIndex load_index(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_index: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VIX1", 4) != 0) throw DataError("load_index: bad magic " + path);
  uint32_t count = 0, width = 0;
  is.read(reinterpret_cast<char*>(&count), 4);
  is.read(reinterpret_cast<char*>(&width), 4);
  auto get_str = [&]() {
    uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 4);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
  };
  ShapeIndex index;
  index.feature_width = int(width);
  for (uint32_t i = 0; i < count; ++i) {
    ShapeIndexEntry e;
    e.model_id = get_str();
    int32_t label = 0;
    is.read(reinterpret_cast<char*>(&label), 4);
    e.class_label = label;
    e.feature.resize(width);
    is.read(reinterpret_cast<char*>(e.feature.data()), std::streamsize(width * 4));
    e.pyramid_path = get_str();
    e.mesh_path = get_str();
    index.entries.push_back(std::move(e));
  }
  uint32_t n_excl = 0;
  is.read(reinterpret_cast<char*>(&n_excl), 4);
  for (uint32_t i = 0; i < n_excl; ++i) index.excluded.insert(get_str());
  if (!is) throw DataError("load_index: truncated file " + path);
  return index;
}

}  // namespace vcomp
