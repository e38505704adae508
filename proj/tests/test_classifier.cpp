#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "test_helpers.hpp"
#include "vcomp/classifier.hpp"

using namespace vcomp;
using namespace vcomp::testing;

namespace {

ClassifierConfig small_config(int classes = 2) {
  ClassifierConfig c;
  c.channels = {4, 8, 16};
  c.feature_width = 32;
  c.classes = classes;
  return c;
}

VoxelGrid df_of(const TriMesh& mesh) {
  GridMeta meta = meta_for_mesh(mesh, 32, 3);
  return mesh_to_df(mesh, meta, 2.5f);
}

}  // namespace

TEST_CASE("classify returns a probability vector") {
  ShapeClassifier<float> model(small_config(4), 3);
  VoxelGrid df = df_of(make_cube({0, 0, 0}, {0.4f, 0.3f, 0.35f}));
  auto p = classify(model, df);
  REQUIRE(p.size() == 4);
  float sum = 0.0f;
  for (float v : p) {
    CHECK(v >= 0.0f);
    sum += v;
  }
  CHECK(sum == Catch::Approx(1.0f).margin(1e-6));
}

TEST_CASE("zero-initialized classifier is uniform") {
  ShapeClassifier<float> model(small_config(4), 3);
  for (auto& v : model.params()) std::fill(v.param, v.param + v.size, 0.0f);
  VoxelGrid df = df_of(make_uv_sphere({0, 0, 0}, 0.4f, 8, 10));
  auto p = classify(model, df);
  for (float v : p) CHECK(v == Catch::Approx(0.25f).margin(1e-6));
}

TEST_CASE("classifier rejects wrong resolution") {
  ShapeClassifier<float> model(small_config(), 3);
  GridMeta meta;
  meta.dims = {16, 16, 16};
  VoxelGrid df(meta, GridKind::UnsignedDF, 1.0f);
  CHECK_THROWS_AS(classify(model, df), std::invalid_argument);
}

TEST_CASE("extract_feature is unit norm and deterministic") {
  ShapeClassifier<float> model(small_config(), 7);
  VoxelGrid df = df_of(make_cube({0, 0, 0}, {0.35f, 0.45f, 0.3f}));
  auto f1 = extract_feature(model, df);
  auto f2 = extract_feature(model, df);
  REQUIRE(f1.size() == 32);
  CHECK(f1 == f2);
  double n2 = 0.0;
  for (float v : f1) n2 += double(v) * v;
  CHECK(std::sqrt(n2) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("features only depend on layers up to the feature layer") {
  ShapeClassifier<float> model(small_config(), 7);
  VoxelGrid df = df_of(make_uv_sphere({0, 0, 0}, 0.35f, 8, 10));
  auto before = extract_feature(model, df);
  model.fc_out.w[3] += 10.0f;  // post-feature parameter
  model.fc_out.b[0] -= 5.0f;
  auto after = extract_feature(model, df);
  CHECK(before == after);
  auto probs_changed = classify(model, df);
  (void)probs_changed;
}

TEST_CASE("classifier gradients match finite differences") {
  ClassifierConfig cfg;
  cfg.channels = {2, 2, 2};
  cfg.feature_width = 8;
  cfg.classes = 3;
  ShapeClassifier<double> model(cfg, 11);
  Rng rng(5);
  Tensor4<double> x(1, {32, 32, 32});
  for (auto& v : x.values) v = rng.uniform(0.0, 2.5);
  int label = 1;

  auto loss_fn = [&](ShapeClassifier<double>& m) {
    std::vector<double> dl;
    return double(cross_entropy_with_logits(m.forward(x, true, nullptr), label, dl));
  };

  ClassifierTape<double> tape;
  auto logits = model.forward(x, true, &tape);
  std::vector<double> dlogits;
  cross_entropy_with_logits(logits, label, dlogits);
  model.zero_grads();
  model.backward(tape, dlogits);

  auto views = model.params();
  size_t total = 0;
  for (auto& v : views) total += v.size;
  Rng pick(17);
  const double eps = 1e-5;
  int failures = 0;
  for (int trial = 0; trial < 150; ++trial) {
    size_t flat = size_t(pick.next_u64() % total);
    size_t vi = 0, off = flat;
    while (off >= views[vi].size) {
      off -= views[vi].size;
      ++vi;
    }
    double saved = views[vi].param[off];
    views[vi].param[off] = saved + eps;
    double lp = loss_fn(model);
    views[vi].param[off] = saved - eps;
    double lm = loss_fn(model);
    views[vi].param[off] = saved;
    double fd = (lp - lm) / (2 * eps);
    double an = views[vi].grad[off];
    if (std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) >= 1e-3) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("classifier learns spheres vs boxes", "[slow]") {
  setenv("VCOMP_THREADS", "2", 1);
  Rng rng(23);
  std::vector<ClassifierSample<float>> train;
  std::vector<std::pair<Tensor4<float>, int>> held_out;
  for (int i = 0; i < 24; ++i) {
    bool test_split = i >= 18;
    TriMesh box = make_cube({0, 0, 0}, {rng.uniformf(0.25f, 0.5f), rng.uniformf(0.25f, 0.5f),
                                        rng.uniformf(0.25f, 0.5f)});
    TriMesh sphere = make_uv_sphere({0, 0, 0}, rng.uniformf(0.25f, 0.5f), 10, 12);
    for (auto& [mesh, label] : {std::pair<TriMesh&, int>{box, 0}, {sphere, 1}}) {
      Tensor4<float> t = grid_to_tensor<float>(df_of(mesh));
      if (test_split)
        held_out.push_back({std::move(t), label});
      else
        train.push_back({std::move(t), label});
    }
  }
  ShapeClassifier<float> model(small_config(2), 31);
  TrainOptions opts;
  opts.epochs = 12;
  opts.batch_size = 8;
  opts.seed = 3;
  opts.lr = 1e-3f;
  train_classifier(model, train, opts);
  int correct = 0;
  for (auto& [t, label] : held_out) {
    auto p = softmax(model.forward(t, false, nullptr));
    int arg = int(std::max_element(p.begin(), p.end()) - p.begin());
    if (arg == label) ++correct;
  }
  CHECK(correct >= int(held_out.size()) - 1);
  unsetenv("VCOMP_THREADS");
}

TEST_CASE("classifier checkpoint round trips via the shared container") {
  ShapeClassifier<float> model(small_config(3), 13);
  VoxelGrid df = df_of(make_cube({0, 0, 0}, {0.3f, 0.4f, 0.5f}));
  Tensor4<float> in = grid_to_tensor<float>(df);
  ClassifierTape<float> tape;
  model.forward(in, true, &tape);
  model.update_running_stats(tape);

  auto path = std::filesystem::temp_directory_path() / "vcomp_test_cls.epn1";
  save_classifier(model, path.string());
  auto back = load_classifier<float>(path.string());
  CHECK(back.cfg.feature_width == model.cfg.feature_width);
  auto a = classify(model, df);
  auto b = classify(back, df);
  CHECK(a == b);
  // The EPN loader refuses a classifier checkpoint.
  CHECK_THROWS_AS(load_epn<float>(path.string()), DataError);
  std::filesystem::remove(path);
}
