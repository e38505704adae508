#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "test_helpers.hpp"
#include "vcomp/adam.hpp"
#include "vcomp/epn.hpp"
#include "vcomp/train.hpp"

using namespace vcomp;
using namespace vcomp::testing;

namespace {

EpnConfig tiny_config() {
  EpnConfig c;
  c.enc_channels = {2, 2, 2, 2};
  c.latent = 8;
  c.class_width = 4;
  return c;
}

template <typename T>
Tensor4<T> random_tensor(Rng& rng, int c, std::array<int, 3> d, double lo, double hi) {
  Tensor4<T> t(c, d);
  for (auto& v : t.values) v = T(rng.uniform(lo, hi));
  return t;
}

// Random gradient-check triple: the target keeps a margin away from the
// prediction so the L1 kink cannot sit inside the probe window.
template <typename T>
void make_triple(const Epn<T>& model, Rng& rng, Tensor4<T>& input, Tensor4<T>& target,
                 Tensor4<T>& known, std::vector<T>& probs) {
  std::array<int, 3> d{model.cfg.grid, model.cfg.grid, model.cfg.grid};
  input = Tensor4<T>(model.cfg.in_channels, d);
  for (auto& v : input.values) v = T(rng.uniform(0.0, 2.5));
  known = Tensor4<T>(1, d);
  for (auto& v : known.values) v = rng.uniform() < 0.5 ? T(0) : T(1);
  probs.assign(size_t(model.cfg.class_width), T(0));
  probs[size_t(rng.uniform_int(model.cfg.class_width))] = T(1);

  Tensor4<T> pred = model.forward(input, probs, true, nullptr);
  target = Tensor4<T>(1, d);
  for (size_t i = 0; i < target.values.size(); ++i) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double gap = rng.uniform(0.3, 1.0);
    target.values[i] = T(std::max(0.0, std::min(2.4, double(pred.values[i]) + sign * gap)));
  }
}

}  // namespace

TEST_CASE("epn output contract: one channel at 32^3, deterministic inference") {
  Epn<float> model(tiny_config(), 5);
  Rng rng(1);
  Tensor4<float> input = random_tensor<float>(rng, 2, {32, 32, 32}, 0.0, 2.5);
  std::vector<float> probs{0.25f, 0.25f, 0.25f, 0.25f};
  Tensor4<float> a = model.forward(input, probs, false, nullptr);
  CHECK(a.channels == 1);
  CHECK(a.dims == std::array<int, 3>{32, 32, 32});
  Tensor4<float> b = model.forward(input, probs, false, nullptr);
  CHECK(a.values == b.values);  // bit identical
  for (float v : a.values) CHECK(v >= 0.0f);
}

TEST_CASE("epn rejects malformed inputs") {
  Epn<float> model(tiny_config(), 5);
  Tensor4<float> bad_res(2, {16, 16, 16});
  std::vector<float> probs{0.25f, 0.25f, 0.25f, 0.25f};
  CHECK_THROWS_AS(model.forward(bad_res, probs, false, nullptr), std::invalid_argument);
  Tensor4<float> ok(2, {32, 32, 32});
  std::vector<float> bad_probs{0.5f, 0.1f, 0.1f, 0.1f};
  CHECK_THROWS_AS(model.forward(ok, bad_probs, false, nullptr), std::invalid_argument);
  std::vector<float> wrong_width{0.5f, 0.5f};
  CHECK_THROWS_AS(model.forward(ok, wrong_width, false, nullptr), std::invalid_argument);
}

TEST_CASE("zeroed final layer yields the clamped bias") {
  Epn<float> model(tiny_config(), 5);
  std::fill(model.dec[0].w.begin(), model.dec[0].w.end(), 0.0f);
  model.dec[0].b[0] = 0.75f;
  Rng rng(2);
  Tensor4<float> input = random_tensor<float>(rng, 2, {32, 32, 32}, 0.0, 2.5);
  std::vector<float> probs{1.0f, 0.0f, 0.0f, 0.0f};
  Tensor4<float> out = model.forward(input, probs, false, nullptr);
  for (float v : out.values) CHECK(v == 0.75f);

  model.dec[0].b[0] = -0.75f;  // negative bias clamps to zero
  out = model.forward(input, probs, false, nullptr);
  for (float v : out.values) CHECK(v == 0.0f);
}

TEST_CASE("masked_l1_loss basics") {
  Tensor4<float> pred(1, {2, 1, 1}), target(1, {2, 1, 1}), known(1, {2, 1, 1});
  pred.values = {1.0f, 3.0f};
  target.values = {2.0f, 2.0f};
  known.values = {0.0f, 0.0f};
  Tensor4<float> d;
  CHECK(masked_l1_loss(pred, target, known, d) == Catch::Approx(1.0f));
  CHECK(d.values[0] == Catch::Approx(-0.5f));
  CHECK(d.values[1] == Catch::Approx(0.5f));  // plain L1: gradient follows the sign everywhere

  CHECK(masked_l1_loss(target, target, known, d) == 0.0f);

  known.values = {1.0f, 1.0f};
  pred.values = {0.0f, 9.0f};
  CHECK(masked_l1_loss(pred, target, known, d) == 0.0f);
  for (float v : d.values) CHECK(v == 0.0f);
}

TEST_CASE("masked_l1_loss ignores known voxels entirely") {
  Rng rng(3);
  Tensor4<float> pred = random_tensor<float>(rng, 1, {4, 4, 4}, 0, 2.5);
  Tensor4<float> target = random_tensor<float>(rng, 1, {4, 4, 4}, 0, 2.5);
  Tensor4<float> known(1, {4, 4, 4});
  for (auto& v : known.values) v = rng.uniform() < 0.5f ? 1.0f : 0.0f;
  Tensor4<float> d;
  float base = masked_l1_loss(pred, target, known, d);
  Tensor4<float> fuzzed = pred;
  for (size_t i = 0; i < fuzzed.values.size(); ++i)
    if (known.values[i] == 1.0f) fuzzed.values[i] = rng.uniformf(0, 99);
  CHECK(masked_l1_loss(fuzzed, target, known, d) == base);
}

TEST_CASE("full epn gradients match central finite differences") {
  EpnConfig cfg = tiny_config();
  Epn<double> model(cfg, 11);
  REQUIRE(model.param_count() < 10000);
  Rng rng(21);
  Tensor4<double> input, target, known;
  std::vector<double> probs;
  make_triple(model, rng, input, target, known, probs);

  auto loss_fn = [&](Epn<double>& m) {
    Tensor4<double> pred = m.forward(input, probs, true, nullptr);
    Tensor4<double> d;
    return double(masked_l1_loss(pred, target, known, d));
  };

  EpnTape<double> tape;
  Tensor4<double> pred = model.forward(input, probs, true, &tape);
  Tensor4<double> dpred;
  masked_l1_loss(pred, target, known, dpred);
  model.zero_grads();
  model.backward(tape, dpred);

  auto views = model.params();
  size_t total = 0;
  for (auto& v : views) total += v.size;
  const double eps = 1e-5;
  size_t checked = 0, failures = 0;
  Rng pick(99);
  for (size_t trial = 0; trial < 220; ++trial) {
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
    double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    if (err >= 1e-3) ++failures;
    ++checked;
  }
  CHECK(checked == 220);
  CHECK(failures == 0);
}

TEST_CASE("zero loss gives zero gradients everywhere") {
  EpnConfig cfg = tiny_config();
  Epn<double> model(cfg, 13);
  Rng rng(5);
  Tensor4<double> input = random_tensor<double>(rng, 2, {32, 32, 32}, 0, 2.5);
  std::vector<double> probs{1, 0, 0, 0};
  EpnTape<double> tape;
  Tensor4<double> pred = model.forward(input, probs, true, &tape);
  Tensor4<double> known(1, {32, 32, 32});  // all unknown
  Tensor4<double> dpred;
  double loss = masked_l1_loss(pred, pred, known, dpred);
  CHECK(loss == 0.0);
  model.zero_grads();
  model.backward(tape, dpred);
  for (auto& v : model.params())
    for (size_t i = 0; i < v.size; ++i) CHECK(v.grad[i] == 0.0);
}

TEST_CASE("skip connections are wired, not dead") {
  EpnConfig cfg = tiny_config();
  Epn<float> model(cfg, 17);
  Rng rng(6);
  Tensor4<float> input = random_tensor<float>(rng, 2, {32, 32, 32}, 0, 2.5);
  std::vector<float> probs{0, 1, 0, 0};
  Tensor4<float> base = model.forward(input, probs, false, nullptr);

  // Zeroing every skip path (second half of each decoder input) must change
  // the output; emulate by zeroing the encoder contributions via weights.
  Epn<float> ablated = model;
  for (int j = 0; j < 4; ++j) {
    UpConv3d<float>& L = ablated.dec[j];
    int half = L.in_c / 2;
    for (int i = half; i < L.in_c; ++i)
      for (int o = 0; o < L.out_c; ++o)
        for (int kk = 0; kk < L.k * L.k * L.k; ++kk)
          L.w[size_t((i * L.out_c + o) * L.k * L.k * L.k + kk)] = 0.0f;
  }
  Tensor4<float> cut = ablated.forward(input, probs, false, nullptr);
  float diff = 0.0f;
  for (size_t i = 0; i < base.values.size(); ++i)
    diff = std::max(diff, std::abs(base.values[i] - cut.values[i]));
  CHECK(diff > 1e-4f);
}

TEST_CASE("adam zero gradient leaves parameters fixed") {
  std::vector<double> p{1.0, -2.0, 3.0}, g{0, 0, 0};
  std::vector<ParamView<double>> views{{p.data(), g.data(), 3}};
  AdamState<double> adam(views, 1e-3);
  for (int i = 0; i < 5; ++i) adam.step(views);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam constant gradient converges to -lr*sign(g) steps") {
  std::vector<double> p{0.0, 0.0}, g{0.3, -1.7};
  std::vector<ParamView<double>> views{{p.data(), g.data(), 2}};
  AdamState<double> adam(views, 1e-3);
  for (int i = 0; i < 400; ++i) adam.step(views);
  double before0 = p[0], before1 = p[1];
  adam.step(views);
  CHECK(p[0] - before0 == Catch::Approx(-1e-3).epsilon(0.01));
  CHECK(p[1] - before1 == Catch::Approx(1e-3).epsilon(0.01));
}

TEST_CASE("adam learning-rate schedule halves every 20 epochs") {
  std::vector<double> p{0.0}, g{1.0};
  std::vector<ParamView<double>> views{{p.data(), g.data(), 1}};
  AdamState<double> adam(views, 1e-3);
  adam.set_epoch(0);
  CHECK(adam.lr() == Catch::Approx(1e-3));
  adam.set_epoch(19);
  CHECK(adam.lr() == Catch::Approx(1e-3));
  adam.set_epoch(20);
  CHECK(adam.lr() == Catch::Approx(5e-4));
  adam.set_epoch(40);
  CHECK(adam.lr() == Catch::Approx(2.5e-4));
}

TEST_CASE("epn checkpoint round trips bit-exactly through EPN1") {
  EpnConfig cfg = tiny_config();
  Epn<float> model(cfg, 23);
  // Touch running stats so they must survive serialization.
  Rng rng(7);
  Tensor4<float> input = random_tensor<float>(rng, 2, {32, 32, 32}, 0, 2.5);
  std::vector<float> probs{1, 0, 0, 0};
  EpnTape<float> tape;
  model.forward(input, probs, true, &tape);
  model.update_running_stats(tape);

  auto path = std::filesystem::temp_directory_path() / "vcomp_test_epn.epn1";
  save_epn(model, path.string());
  Epn<float> back = load_epn<float>(path.string());
  CHECK(back.cfg.latent == cfg.latent);
  CHECK(back.cfg.use_skips == cfg.use_skips);
  Tensor4<float> a = model.forward(input, probs, false, nullptr);
  Tensor4<float> b = back.forward(input, probs, false, nullptr);
  CHECK(a.values == b.values);
  std::filesystem::remove(path);
}

TEST_CASE("training memorizes four pairs", "[slow]") {
  setenv("VCOMP_THREADS", "2", 1);
  // Four partial scans of two shapes; targets are exact DFs.
  std::vector<EpnSample<float>> samples;
  EpnConfig cfg;
  cfg.enc_channels = {8, 16, 32, 64};
  cfg.latent = 128;
  cfg.class_width = 4;

  int label = 0;
  for (auto mesh : {make_cube({0, 0, 0}, {0.42f, 0.3f, 0.36f}),
                    make_uv_sphere({0, 0, 0}, 0.4f, 10, 14)}) {
    GridMeta meta = meta_for_mesh(mesh, 32, 3);
    FusionParams params{2.5f, meta};
    Camera sensor;
    sensor.width = 160;
    sensor.height = 120;
    sensor.fx = sensor.fy = 140.0f;
    sensor.cx = 79.5f;
    sensor.cy = 59.5f;
    for (uint64_t traj = 0; traj < 2; ++traj) {
      auto cams = gen_trajectory(100 + traj, 2, 2.5f * mesh.bounds().diagonal(),
                                 mesh.bounds().center(), sensor);
      TrainingPair pair = make_training_pair(mesh, label, cams, params);
      EpnSample<float> s;
      s.input = encode_epn_input<float>(pair.input, cfg.encoding, cfg.truncation);
      s.target = grid_to_tensor<float>(pair.target);
      s.known = grid_to_tensor<float>(pair.input.known);
      s.class_label = label;
      samples.push_back(std::move(s));
    }
    ++label;
  }

  Epn<float> model(cfg, 31);
  TrainOptions opts;
  opts.epochs = 500;
  opts.batch_size = 1;
  opts.seed = 9;
  opts.lr = 2e-3f;
  opts.lr_halve_every = 150;
  auto history = train_epn(model, samples, opts);
  REQUIRE(history.size() == 500);
  CHECK(history.back().mean_loss < 0.05);

  // Smoothed loss is nonincreasing over 10-epoch windows.
  auto window = [&](size_t b) {
    double s = 0.0;
    for (size_t i = b; i < b + 10; ++i) s += history[i].mean_loss;
    return s / 10.0;
  };
  size_t violations = 0;
  for (size_t b = 0; b + 20 < history.size(); b += 10)
    if (window(b + 10) > window(b) + 0.02) ++violations;
  CHECK(violations == 0);
  unsetenv("VCOMP_THREADS");
}

TEST_CASE("training is deterministic for a fixed seed single-threaded") {
  setenv("VCOMP_THREADS", "1", 1);
  std::vector<EpnSample<float>> samples;
  EpnConfig cfg = tiny_config();
  Rng rng(41);
  for (int i = 0; i < 3; ++i) {
    EpnSample<float> s;
    s.input = random_tensor<float>(rng, 2, {32, 32, 32}, 0, 2.5);
    s.target = random_tensor<float>(rng, 1, {32, 32, 32}, 0, 2.5);
    s.known = Tensor4<float>(1, {32, 32, 32});
    s.class_label = i % cfg.class_width;
    samples.push_back(std::move(s));
  }
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 2;
  opts.seed = 77;

  Epn<float> m1(cfg, 88), m2(cfg, 88);
  auto h1 = train_epn(m1, samples, opts);
  auto h2 = train_epn(m2, samples, opts);
  CHECK(h1.back().mean_loss == h2.back().mean_loss);
  auto v1 = m1.params(), v2 = m2.params();
  for (size_t i = 0; i < v1.size(); ++i)
    for (size_t j = 0; j < v1[i].size; ++j) CHECK(v1[i].param[j] == v2[i].param[j]);
  unsetenv("VCOMP_THREADS");
}
