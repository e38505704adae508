#pragma once

#include <filesystem>
#include <fstream>
#include <numeric>

#include "vcomp/adam.hpp"
#include "vcomp/epn.hpp"
#include "vcomp/fusion.hpp"
#include "vcomp/vxg_io.hpp"

namespace vcomp {

// A dataset sample held in memory: fused TSDF split into channels plus the
// ground-truth DF, already tensorized for the configured encoding.
template <typename T>
struct EpnSample {
  Tensor4<T> input;
  Tensor4<T> target;
  Tensor4<T> known;
  int class_label = 0;
  std::string model_id;
};

template <typename T>
EpnSample<T> load_epn_sample(const DatasetEntry& e, const EpnConfig& cfg) {
  VoxelGrid tsdf = read_vxg(e.input_path);
  if (tsdf.kind != GridKind::TSDF) throw DataError("dataset input is not a TSDF: " + e.input_path);
  VoxelGrid gt = read_vxg(e.target_path);
  TwoChannelGrid two = split_channels(tsdf, cfg.truncation);
  EpnSample<T> s;
  s.input = encode_epn_input<T>(two, cfg.encoding, cfg.truncation);
  s.target = grid_to_tensor<T>(gt);
  s.known = grid_to_tensor<T>(two.known);
  s.class_label = e.class_label;
  s.model_id = e.model_id;
  return s;
}

struct TrainOptions {
  int epochs = 40;
  int batch_size = 32;
  uint64_t seed = 1;
  float lr = 1e-3f;
  int lr_halve_every = 20;
  std::string checkpoint_path;    // written after the final epoch when set
  std::string history_csv_path;   // epoch, mean_loss, lr
  int log_every_epochs = 1;
  bool verbose = false;
};

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

inline void save_loss_history(const std::vector<EpochStat>& hist, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("save_loss_history: cannot open " + path);
  os << "epoch,mean_loss,lr\n";
  for (const auto& h : hist) os << h.epoch << ',' << h.mean_loss << ',' << h.lr << '\n';
}

// One optimization step over a batch: per-sample forward/backward run in
// parallel with worker-local model replicas, then gradients and normalization
// statistics merge in sample order so a fixed thread count reproduces runs.
template <typename T>
double epn_train_batch(Epn<T>& model, AdamState<T>& adam,
                       const std::vector<const EpnSample<T>*>& batch) {
  unsigned workers = std::min<size_t>(thread_count(), batch.size());
  model.zero_grads();

  std::vector<Epn<T>> replicas;
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<EpnTape<T>> tapes(batch.size());

  auto run_range = [&](Epn<T>& m, size_t b, size_t e) {
    std::vector<T> probs(size_t(m.cfg.class_width), T(0));
    for (size_t s = b; s < e; ++s) {
      const EpnSample<T>& sample = *batch[s];
      std::fill(probs.begin(), probs.end(), T(0));
      probs[size_t(sample.class_label)] = T(1);  // teacher class vector
      Tensor4<T> pred = m.forward(sample.input, probs, true, &tapes[s]);
      Tensor4<T> dpred;
      losses[s] = double(masked_l1_loss(pred, sample.target, sample.known, dpred));
      m.backward(tapes[s], dpred);
    }
  };

  if (workers <= 1) {
    run_range(model, 0, batch.size());
  } else {
    replicas.assign(workers, model);
    for (auto& r : replicas) r.zero_grads();
    size_t chunk = (batch.size() + workers - 1) / workers;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      size_t b = std::min(batch.size(), size_t(w) * chunk);
      size_t e = std::min(batch.size(), b + chunk);
      if (b >= e) break;
      pool.emplace_back([&, w, b, e] { run_range(replicas[w], b, e); });
    }
    for (auto& th : pool) th.join();
    auto main_views = model.params();
    for (auto& r : replicas) {
      auto rv = r.params();
      for (size_t i = 0; i < main_views.size(); ++i)
        for (size_t j = 0; j < main_views[i].size; ++j)
          main_views[i].grad[j] += rv[i].grad[j];
    }
  }

  // Mean gradient over the batch, running stats folded in sample order.
  T scale = T(1) / T(batch.size());
  for (auto& v : model.params())
    for (size_t j = 0; j < v.size; ++j) v.grad[j] *= scale;
  for (size_t s = 0; s < batch.size(); ++s) model.update_running_stats(tapes[s]);

  adam.step(model.params());
  return std::accumulate(losses.begin(), losses.end(), 0.0) / double(batch.size());
}

// Mini-batch training over shuffled samples. Deterministic for a fixed seed
// when single-threaded.
template <typename T>
std::vector<EpochStat> train_epn(Epn<T>& model, const std::vector<EpnSample<T>>& samples,
                                 const TrainOptions& opts) {
  if (samples.empty()) throw std::invalid_argument("train_epn: empty dataset");
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
      std::vector<const EpnSample<T>*> batch;
      batch.reserve(e - b);
      for (size_t i = b; i < e; ++i) batch.push_back(&samples[order[i]]);
      loss_sum += epn_train_batch(model, adam, batch);
      ++batches;
    }
    EpochStat stat{epoch, loss_sum / double(batches), double(adam.lr())};
    history.push_back(stat);
    if (opts.verbose && (epoch % opts.log_every_epochs == 0 || epoch + 1 == opts.epochs))
      std::fprintf(stderr, "[train-epn] epoch %d loss %.4f lr %.2e\n", epoch, stat.mean_loss,
                   stat.lr);
  }

  if (!opts.history_csv_path.empty()) save_loss_history(history, opts.history_csv_path);
  if (!opts.checkpoint_path.empty()) save_epn(model, opts.checkpoint_path);
  return history;
}

}  // namespace vcomp
