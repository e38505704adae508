#pragma once

#include "vcomp/train.hpp"

namespace vcomp {

struct ClassifierConfig {
  int grid = 32;
  std::array<int, 3> channels{8, 16, 32};
  int feature_width = 128;
  int classes = 4;
};

template <typename T>
struct ClassifierTape {
  Tensor4<T> input;
  std::array<Tensor4<T>, 3> conv_out;
  std::array<BnCache<T>, 3> bn_cache;
  std::array<Tensor4<T>, 3> act;
  std::array<PoolCache<T>, 2> pool_cache;
  std::array<Tensor4<T>, 2> pooled;
  std::vector<T> feat_act;  // penultimate activations, pre-normalization
  std::vector<T> logits;
};

// Shape classifier over a 1-channel 32^3 DF: conv/pool stages, a feature FC
// layer whose activations double as the retrieval descriptor, and a logit
// layer.
template <typename T>
class ShapeClassifier {
 public:
  ClassifierConfig cfg;
  std::array<Conv3d<T>, 3> conv;
  std::array<BatchNorm<T>, 3> bn;
  Linear<T> fc_feat, fc_out;

  ShapeClassifier() = default;

  explicit ShapeClassifier(const ClassifierConfig& c, uint64_t seed = 1) : cfg(c) {
    conv[0] = Conv3d<T>(1, c.channels[0], 3, 1, 1);
    conv[1] = Conv3d<T>(c.channels[0], c.channels[1], 3, 1, 1);
    conv[2] = Conv3d<T>(c.channels[1], c.channels[2], 3, 2, 1);
    for (int i = 0; i < 3; ++i) bn[i] = BatchNorm<T>(c.channels[i]);
    int side = c.grid / 8;  // two pools and one stride-2 conv
    fc_feat = Linear<T>(c.channels[2] * side * side * side, c.feature_width);
    fc_out = Linear<T>(c.feature_width, c.classes);
    Rng rng(seed);
    for (auto& l : conv) l.init_he(rng);
    fc_feat.init_he(rng);
    fc_out.init_he(rng);
  }

  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> v;
    for (auto& l : conv) l.collect(v);
    for (auto& l : bn) l.collect(v);
    fc_feat.collect(v);
    fc_out.collect(v);
    return v;
  }

  std::vector<ParamView<T>> state() {
    std::vector<ParamView<T>> v = params();
    for (auto& l : bn) l.collect_state(v);
    return v;
  }

  void zero_grads() {
    for (auto& p : params()) std::fill(p.grad, p.grad + p.size, T(0));
  }

  std::vector<T> forward(const Tensor4<T>& input, bool training, ClassifierTape<T>* tape) const {
    if (input.channels != 1 || input.dims != std::array<int, 3>{cfg.grid, cfg.grid, cfg.grid})
      throw std::invalid_argument("classifier: input must be 1 channel at grid resolution");
    ClassifierTape<T> local;
    ClassifierTape<T>& t = tape ? *tape : local;
    t.input = input;
    Tensor4<T> cur = input;
    for (int j = 0; j < 3; ++j) {
      Tensor4<T> pre = conv3d_forward(cur, conv[j]);
      Tensor4<T> normed =
          training ? bn_forward_train(pre, bn[j], t.bn_cache[j]) : bn_forward_eval(pre, bn[j]);
      t.conv_out[j] = std::move(pre);
      t.act[j] = relu_forward(normed);
      if (j < 2) {
        t.pooled[j] = maxpool2_forward(t.act[j], t.pool_cache[j]);
        cur = t.pooled[j];
      } else {
        cur = t.act[j];
      }
    }
    std::vector<T> flat(cur.values.begin(), cur.values.end());
    t.feat_act = linear_forward(flat, fc_feat);
    relu_forward_vec(t.feat_act);
    t.logits = linear_forward(t.feat_act, fc_out);
    return t.logits;
  }

  void backward(const ClassifierTape<T>& t, const std::vector<T>& dlogits) {
    std::vector<T> d_feat = linear_backward(t.feat_act, fc_out, dlogits);
    for (size_t i = 0; i < d_feat.size(); ++i)
      if (!(t.feat_act[i] > T(0))) d_feat[i] = T(0);
    std::vector<T> flat(t.act[2].values.begin(), t.act[2].values.end());
    std::vector<T> d_flat = linear_backward(flat, fc_feat, d_feat);

    Tensor4<T> da(t.act[2].channels, t.act[2].dims);
    std::copy(d_flat.begin(), d_flat.end(), da.values.begin());
    for (int j = 2; j >= 0; --j) {
      if (j < 2) da = maxpool2_backward(t.pool_cache[j], da);
      Tensor4<T> dpre = relu_backward(t.act[j], da);
      dpre = bn_backward(t.bn_cache[j], bn[j], dpre);
      Tensor4<T> dx;
      const Tensor4<T>& x = j == 0 ? t.input : t.pooled[j - 1];
      conv3d_backward(x, conv[j], dpre, j == 0 ? nullptr : &dx);
      if (j > 0) da = std::move(dx);
    }
  }

  void update_running_stats(const ClassifierTape<T>& t) {
    for (int j = 0; j < 3; ++j) bn_update_running(bn[j], t.bn_cache[j]);
  }
};

// Softmax class probabilities for a 32^3 DF, deterministic in inference mode.
template <typename T>
std::vector<T> classify(const ShapeClassifier<T>& model, const VoxelGrid& df) {
  Tensor4<T> in = grid_to_tensor<T>(df);
  return softmax(model.forward(in, false, nullptr));
}

// L2-normalized penultimate activations; the learned shape descriptor.
template <typename T>
std::vector<T> extract_feature(const ShapeClassifier<T>& model, const VoxelGrid& df) {
  Tensor4<T> in = grid_to_tensor<T>(df);
  ClassifierTape<T> tape;
  model.forward(in, false, &tape);
  std::vector<T> f = tape.feat_act;
  T n2 = T(0);
  for (T v : f) n2 += v * v;
  if (n2 <= T(0)) {
    f.assign(f.size(), T(0));
    f[0] = T(1);
    return f;
  }
  T inv = T(1) / std::sqrt(n2);
  for (T& v : f) v *= inv;
  return f;
}

template <typename T>
struct ClassifierSample {
  Tensor4<T> input;
  int label = 0;
};

// Cross-entropy training; same batching and determinism contract as the EPN
// trainer.
template <typename T>
std::vector<EpochStat> train_classifier(ShapeClassifier<T>& model,
                                        const std::vector<ClassifierSample<T>>& samples,
                                        const TrainOptions& opts) {
  if (samples.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  AdamState<T> adam(model.params(), T(opts.lr));
  adam.halve_every = opts.lr_halve_every;
  Rng rng(opts.seed);
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::vector<EpochStat> history;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    adam.set_epoch(epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t b = 0; b < order.size(); b += size_t(opts.batch_size)) {
      size_t e = std::min(order.size(), b + size_t(opts.batch_size));
      std::vector<const ClassifierSample<T>*> batch;
      for (size_t i = b; i < e; ++i) batch.push_back(&samples[order[i]]);

      unsigned workers = std::min<size_t>(thread_count(), batch.size());
      model.zero_grads();
      std::vector<double> losses(batch.size(), 0.0);
      std::vector<ClassifierTape<T>> tapes(batch.size());
      auto run_range = [&](ShapeClassifier<T>& m, size_t rb, size_t re) {
        for (size_t s = rb; s < re; ++s) {
          std::vector<T> logits = m.forward(batch[s]->input, true, &tapes[s]);
          std::vector<T> dlogits;
          losses[s] = double(cross_entropy_with_logits(logits, batch[s]->label, dlogits));
          m.backward(tapes[s], dlogits);
        }
      };
      if (workers <= 1) {
        run_range(model, 0, batch.size());
      } else {
        std::vector<ShapeClassifier<T>> replicas(workers, model);
        for (auto& r : replicas) r.zero_grads();
        size_t chunk = (batch.size() + workers - 1) / workers;
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
          size_t rb = std::min(batch.size(), size_t(w) * chunk);
          size_t re = std::min(batch.size(), rb + chunk);
          if (rb >= re) break;
          pool.emplace_back([&, w, rb, re] { run_range(replicas[w], rb, re); });
        }
        for (auto& th : pool) th.join();
        auto mv = model.params();
        for (auto& r : replicas) {
          auto rv = r.params();
          for (size_t i = 0; i < mv.size(); ++i)
            for (size_t j = 0; j < mv[i].size; ++j) mv[i].grad[j] += rv[i].grad[j];
        }
      }
      T scale = T(1) / T(batch.size());
      for (auto& v : model.params())
        for (size_t j = 0; j < v.size; ++j) v.grad[j] *= scale;
      for (size_t s = 0; s < batch.size(); ++s) model.update_running_stats(tapes[s]);
      adam.step(model.params());
      loss_sum += std::accumulate(losses.begin(), losses.end(), 0.0) / double(batch.size());
      ++batches;
    }
    history.push_back({epoch, loss_sum / double(batches), double(adam.lr())});
    if (opts.verbose)
      std::fprintf(stderr, "[train-classifier] epoch %d loss %.4f\n", epoch,
                   history.back().mean_loss);
  }
  if (!opts.history_csv_path.empty()) save_loss_history(history, opts.history_csv_path);
  return history;
}

inline nlohmann::json classifier_config_json(const ClassifierConfig& c) {
  return nlohmann::json{{"type", "classifier"},
                        {"grid", c.grid},
                        {"channels", c.channels},
                        {"feature_width", c.feature_width},
                        {"classes", c.classes}};
}

inline ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.grid = j.at("grid").get<int>();
  auto ch = j.at("channels").get<std::vector<int>>();
  for (int i = 0; i < 3; ++i) c.channels[i] = ch.at(i);
  c.feature_width = j.at("feature_width").get<int>();
  c.classes = j.at("classes").get<int>();
  return c;
}

template <typename T>
void save_classifier(const ShapeClassifier<T>& model, const std::string& path) {
  auto& m = const_cast<ShapeClassifier<T>&>(model);
  save_epn1(path, classifier_config_json(model.cfg), m.state());
}

template <typename T>
ShapeClassifier<T> load_classifier(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_classifier: cannot open " + path);
  is.seekg(8);
  uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  std::string js(n, '\0');
  is.read(js.data(), std::streamsize(n));
  nlohmann::json meta = nlohmann::json::parse(js);
  if (meta.at("type") != "classifier")
    throw DataError("load_classifier: not a classifier checkpoint: " + path);
  ShapeClassifier<T> model(classifier_config_from_json(meta), 0);
  load_epn1(path, model.state());
  return model;
}

}  // namespace vcomp
