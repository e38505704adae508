#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "vcomp/index.hpp"

using namespace vcomp;

namespace {

std::vector<float> normalized(std::vector<float> v) {
  double n2 = 0.0;
  for (float x : v) n2 += double(x) * x;
  float inv = float(1.0 / std::sqrt(std::max(n2, 1e-30)));
  for (float& x : v) x *= inv;
  return v;
}

ShapeIndex random_index(uint64_t seed, int n, int width) {
  Rng rng(seed);
  ShapeIndex index;
  for (int i = 0; i < n; ++i) {
    ShapeIndexEntry e;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "m%04d", i);
    e.model_id = buf;
    e.class_label = i % 4;
    auto f = std::vector<float>(size_t(width));
    for (auto& v : f) v = rng.uniformf(-1, 1);
    e.feature = normalized(f);
    index.add(std::move(e));
  }
  return index;
}

}  // namespace

TEST_CASE("self retrieval is rank one at distance zero") {
  ShapeIndex index = random_index(1, 50, 16);
  auto r = knn_retrieve(index, index.entries[17].feature, 3);
  REQUIRE(r.hits.size() == 3);
  CHECK(r.hits[0].first == "m0017");
  CHECK(r.hits[0].second == Catch::Approx(0.0).margin(1e-6));
  CHECK_FALSE(r.clipped);
}

TEST_CASE("knn matches an independent linear scan") {
  ShapeIndex index = random_index(2, 300, 24);
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> q(24);
    for (auto& v : q) v = rng.uniformf(-1, 1);
    q = normalized(q);
    auto r = knn_retrieve(index, q, 5);

    // Oracle: full scan and sort.
    std::vector<std::pair<float, std::string>> all;
    for (const auto& e : index.entries) {
      double d2 = 0.0;
      for (size_t i = 0; i < q.size(); ++i) {
        double d = double(q[i]) - e.feature[i];
        d2 += d * d;
      }
      all.push_back({float(std::sqrt(d2)), e.model_id});
    }
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    });
    REQUIRE(r.hits.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(r.hits[size_t(i)].first == all[size_t(i)].second);
      CHECK(r.hits[size_t(i)].second == Catch::Approx(all[size_t(i)].first).margin(1e-6));
    }
  }
}

TEST_CASE("excluded ids never appear") {
  ShapeIndex index = random_index(3, 40, 8);
  index.excluded.insert("m0005");
  index.excluded.insert("m0011");
  auto r = knn_retrieve(index, index.entries[5].feature, 40);
  CHECK(r.clipped);  // only 38 retrievable
  CHECK(r.hits.size() == 38);
  for (const auto& [id, dist] : r.hits) {
    CHECK(id != "m0005");
    CHECK(id != "m0011");
  }
}

TEST_CASE("distance ties break by model id") {
  ShapeIndex index;
  for (const char* id : {"zebra", "apple", "mango"}) {
    ShapeIndexEntry e;
    e.model_id = id;
    e.feature = {1.0f, 0.0f};
    index.add(std::move(e));
  }
  auto r = knn_retrieve(index, {0.0f, 1.0f}, 3);
  REQUIRE(r.hits.size() == 3);
  CHECK(r.hits[0].first == "apple");
  CHECK(r.hits[1].first == "mango");
  CHECK(r.hits[2].first == "zebra");
}

TEST_CASE("retrieval accuracy on a single-class index is one") {
  Rng rng(5);
  ShapeIndex index;
  for (int i = 0; i < 10; ++i) {
    ShapeIndexEntry e;
    e.model_id = "s" + std::to_string(i);
    e.class_label = 2;
    e.feature = normalized({rng.uniformf(-1, 1), rng.uniformf(-1, 1), rng.uniformf(-1, 1)});
    index.add(std::move(e));
  }
  std::vector<LabeledQuery> queries;
  for (int i = 0; i < 6; ++i)
    queries.push_back(
        {normalized({rng.uniformf(-1, 1), rng.uniformf(-1, 1), rng.uniformf(-1, 1)}), 2});
  CHECK(retrieval_accuracy(index, queries, 3) == 1.0);
  queries[0].true_label = 1;  // wrong label cannot be correct
  CHECK(retrieval_accuracy(index, queries, 3) == Catch::Approx(5.0 / 6.0));
}

TEST_CASE("majority ties count when the true class is among them") {
  ShapeIndex index;
  auto put = [&](const char* id, int label, std::vector<float> f) {
    ShapeIndexEntry e;
    e.model_id = id;
    e.class_label = label;
    e.feature = std::move(f);
    index.add(std::move(e));
  };
  put("a", 0, {1, 0, 0});
  put("b", 0, {0.9f, 0.1f, 0});
  put("c", 1, {0.8f, 0.2f, 0});
  put("d", 1, {0.7f, 0.3f, 0});
  // top-4: two votes each for classes 0 and 1 (tie).
  std::vector<LabeledQuery> q0{{{1, 0, 0}, 0}}, q1{{{1, 0, 0}, 1}}, q2{{{1, 0, 0}, 2}};
  CHECK(retrieval_accuracy(index, q0, 4) == 1.0);
  CHECK(retrieval_accuracy(index, q1, 4) == 1.0);
  CHECK(retrieval_accuracy(index, q2, 4) == 0.0);
}

TEST_CASE("knn argument validation") {
  ShapeIndex index = random_index(6, 5, 4);
  CHECK_THROWS_AS(knn_retrieve(index, index.entries[0].feature, 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_retrieve(index, {1.0f}, 2), std::invalid_argument);
  ShapeIndex empty;
  empty.feature_width = 4;
  CHECK_THROWS_AS(knn_retrieve(empty, {1, 0, 0, 0}, 1), std::invalid_argument);
}

TEST_CASE("index file round trips") {
  ShapeIndex index = random_index(9, 12, 6);
  index.entries[3].pyramid_path = "pyr/m0003";
  index.entries[3].mesh_path = "mesh/m0003.obj";
  index.excluded.insert("heldout_1");
  auto path = std::filesystem::temp_directory_path() / "vcomp_test_index.vix";
  save_index(index, path.string());
  ShapeIndex back = load_index(path.string());
  CHECK(back.feature_width == 6);
  REQUIRE(back.entries.size() == 12);
  CHECK(back.entries[3].model_id == index.entries[3].model_id);
  CHECK(back.entries[3].feature == index.entries[3].feature);
  CHECK(back.entries[3].pyramid_path == "pyr/m0003");
  CHECK(back.entries[3].mesh_path == "mesh/m0003.obj");
  CHECK(back.excluded.count("heldout_1") == 1);
  std::filesystem::remove(path);
}
