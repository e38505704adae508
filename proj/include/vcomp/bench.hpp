#pragma once

#include "vcomp/pipeline.hpp"

namespace vcomp {

// Ground-truth surface band for partialness: voxels within half a voxel of
// the surface whose centers are not inside the solid (the observable side).
inline std::vector<uint8_t> observable_band(const VoxelGrid& gt, const TriMesh& mesh) {
  std::vector<uint8_t> band(gt.values.size(), 0);
  const auto& d = gt.meta.dims;
  parallel_chunks(size_t(d[2]), [&](size_t zb, size_t ze) {
    for (size_t z = zb; z < ze; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          size_t i = gt.idx(x, y, int(z));
          if (gt.values[i] > 0.5f) continue;
          if (point_inside_mesh(DVec3(gt.meta.voxel_to_world(x, y, int(z))), mesh)) continue;
          band[i] = 1;
        }
  });
  return band;
}

struct RecognitionSummary {
  double classification_partial = 0.0;
  double classification_completed = 0.0;
  double retrieval_partial = 0.0;
  double retrieval_completed = 0.0;
  size_t queries = 0;
};

struct BenchResult {
  std::vector<EvalRecord> records;
  std::vector<MethodSummary> summaries;
  RecognitionSummary recognition;
  bool has_recognition = false;
};

inline VoxelGrid as_udf(const VoxelGrid& g) {
  VoxelGrid out = g;
  out.kind = GridKind::UnsignedDF;
  return out;
}

// 128^3 ground truth in its own (fine) voxel units, cached on disk.
inline VoxelGrid fine_ground_truth(const PipelineConfig& config, const CorpusEntry& model,
                                   const GridMeta& meta32) {
  int factor = 1 << (config.synth_levels - 1);
  std::string path = config.dataset_dir + "/" + model.model_id + ".gt" +
                     std::to_string(config.resolution * factor) + ".vxg";
  if (std::filesystem::exists(path)) return read_vxg(path);
  TriMesh mesh = load_mesh(model.mesh_path);
  VoxelGrid gt = mesh_to_df(mesh, refine_meta(meta32, factor), config.truncation);
  write_vxg(gt, path);
  return gt;
}

namespace bench_detail {

struct TestPair {
  const DatasetEntry* entry = nullptr;
  const CorpusEntry* model = nullptr;
};

inline VoxelGrid class_mean_baseline(const PipelineConfig& config,
                                     const std::vector<CorpusEntry>& corpus, int cls) {
  VoxelGrid acc;
  size_t count = 0;
  for (const auto& e : corpus) {
    if (e.test_split || e.class_label != cls) continue;
    VoxelGrid gt = read_vxg(config.dataset_dir + "/" + e.model_id + ".gt.vxg");
    if (count == 0) {
      acc = gt;
    } else {
      for (size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += gt.values[i];
    }
    ++count;
  }
  if (count == 0) throw DataError("bench: no train models for class mean");
  for (auto& v : acc.values) v /= float(count);
  return acc;
}

}  // namespace bench_detail

// The evaluation harness: per-record masked L1 at 32^3 (and 128^3 for the
// synthesis-path methods), partialness per record, and the Table-2-style
// recognition comparison when requested. Every summary value is recomputed
// from the emitted records.
inline BenchResult run_bench(const PipelineConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto corpus = load_corpus_manifest(config.corpus_dir + "/corpus.tsv");
  auto manifest = load_dataset_manifest(config.dataset_dir + "/dataset.tsv");

  std::map<std::string, const CorpusEntry*> by_id;
  for (const auto& e : corpus) by_id[e.model_id] = &e;

  std::vector<bench_detail::TestPair> pairs;
  for (const auto& e : manifest) {
    const CorpusEntry* m = by_id.at(e.model_id);
    if (m->test_split) pairs.push_back({&e, m});
  }
  if (pairs.empty()) throw DataError("bench: no test pairs");
  if (config.bench_limit > 0 && int(pairs.size()) > config.bench_limit)
    pairs.resize(size_t(config.bench_limit));

  // Shared per-pair data: input channels, gt, partialness.
  struct Loaded {
    TwoChannelGrid two;
    VoxelGrid gt;
    double partial = -1.0;
  };
  std::map<std::string, std::vector<uint8_t>> band_cache;
  std::map<std::string, TriMesh> mesh_cache;
  for (const auto& p : pairs)
    if (!mesh_cache.count(p.model->model_id))
      mesh_cache[p.model->model_id] = load_mesh(p.model->mesh_path);

  std::vector<Loaded> loaded(pairs.size());
  parallel_chunks(pairs.size(), [&](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) {
      VoxelGrid tsdf = read_vxg(pairs[i].entry->input_path);
      loaded[i].two = split_channels(tsdf, config.truncation);
      loaded[i].gt = read_vxg(pairs[i].entry->target_path);
    }
  });
  for (size_t i = 0; i < pairs.size(); ++i) {
    const std::string& id = pairs[i].model->model_id;
    if (!band_cache.count(id))
      band_cache[id] = observable_band(loaded[i].gt, mesh_cache.at(id));
    auto frac = partialness(loaded[i].two, band_cache.at(id));
    loaded[i].partial = frac ? *frac : -1.0;
  }

  BenchResult result;
  auto add_record = [&](size_t i, const std::string& method, int res, double err,
                        size_t unknown) {
    EvalRecord r;
    r.model_id = pairs[i].entry->model_id;
    r.class_label = pairs[i].entry->class_label;
    r.method = method;
    r.resolution = res;
    r.partialness = loaded[i].partial;
    r.unknown_count = unknown;
    r.l1_error = err;
    result.records.push_back(std::move(r));
  };

  // Class-mean baselines are shared across methods that need them.
  std::map<int, VoxelGrid> class_means;

  auto checkpoint_or_throw = [&](const std::string& name) {
    std::string path = epn_checkpoint_path(config, name);
    if (!fs::exists(path))
      throw ConfigError("bench: missing checkpoint for variant '" + name + "': " + path);
    return path;
  };

  for (const std::string& method : config.bench_methods) {
    if (method == "recognition") continue;  // handled after the error table
    if (method == "copy") {
      for (size_t i = 0; i < pairs.size(); ++i) {
        size_t unknown = 0;
        VoxelGrid pred = loaded[i].two.abs;
        double err = masked_l1_error(pred, loaded[i].gt, loaded[i].two.known, config.truncation,
                                     &unknown);
        add_record(i, method, config.resolution, err, unknown);
      }
    } else if (method == "mean") {
      for (size_t i = 0; i < pairs.size(); ++i) {
        int cls = pairs[i].entry->class_label;
        if (!class_means.count(cls))
          class_means[cls] = bench_detail::class_mean_baseline(config, corpus, cls);
        VoxelGrid pred = class_means[cls];
        pred.meta = loaded[i].gt.meta;
        size_t unknown = 0;
        double err = masked_l1_error(pred, loaded[i].gt, loaded[i].two.known, config.truncation,
                                     &unknown);
        add_record(i, method, config.resolution, err, unknown);
      }
    } else if (method.rfind("up128:", 0) == 0 || method.rfind("synth:", 0) == 0 ||
               method == "synth-only") {
      // High-resolution family, capped by bench_limit128 models.
      bool up_path = method.rfind("up128:", 0) == 0;
      std::string ckpt_name = method == "synth-only" ? "" : method.substr(6);
      Epn<float> epn;
      if (!ckpt_name.empty()) epn = load_epn<float>(checkpoint_or_throw(ckpt_name));
      ShapeClassifier<float> classifier =
          load_classifier<float>(classifier_checkpoint_path(config));
      ShapeIndex index;
      if (!up_path) index = load_index(index_path(config));
      int factor = 1 << (config.synth_levels - 1);
      int done = 0;
      for (size_t i = 0; i < pairs.size() && done < config.bench_limit128; ++i, ++done) {
        VoxelGrid pred32;
        if (ckpt_name.empty()) {
          pred32 = as_udf(loaded[i].two.abs);
        } else {
          std::vector<float> probs = classify(classifier, as_udf(loaded[i].two.abs));
          pred32 = epn_predict(epn, loaded[i].two, probs);
        }
        // Fine-units ground truth and nearest-neighbor upsampled mask.
        VoxelGrid gt128 = fine_ground_truth(config, *pairs[i].model, loaded[i].gt.meta);
        VoxelGrid known128 = upsample_nearest(loaded[i].two.known, factor);
        VoxelGrid pred128;
        if (up_path) {
          pred128 = upsample_trilinear(pred32, factor, float(factor));
        } else {
          std::vector<float> feature = extract_feature(classifier, pred32);
          RetrievalResult knn = knn_retrieve(index, feature, config.synth_k);
          std::vector<SynthesisPyramid> neighbors;
          for (const auto& [id, dist] : knn.hits)
            neighbors.push_back(fetch_pyramid(config, *index_find(index, id), pred32.meta));
          pred128 = synthesize(pred32, neighbors, config.synthesis_params());
          for (auto& v : pred128.values) v = std::min(v * float(factor), config.truncation);
        }
        size_t unknown = 0;
        double err = masked_l1_error(pred128, gt128, known128, config.truncation, &unknown);
        add_record(i, method, config.resolution * factor, err, unknown);
      }
    } else {
      // Any other method name is an EPN checkpoint evaluated at 32^3.
      auto epn = load_epn<float>(checkpoint_or_throw(method));
      ShapeClassifier<float> classifier =
          load_classifier<float>(classifier_checkpoint_path(config));
      for (size_t i = 0; i < pairs.size(); ++i) {
        std::vector<float> probs = classify(classifier, as_udf(loaded[i].two.abs));
        VoxelGrid pred = epn_predict(epn, loaded[i].two, probs);
        size_t unknown = 0;
        double err = masked_l1_error(pred, loaded[i].gt, loaded[i].two.known, config.truncation,
                                     &unknown);
        add_record(i, method, config.resolution, err, unknown);
      }
    }
  }

  // Recognition comparison (classification / top-3 retrieval on raw partial
  // inputs vs on EPN completions).
  for (const std::string& method : config.bench_methods) {
    if (method != "recognition") continue;
    auto classifier = load_classifier<float>(classifier_checkpoint_path(config));
    auto epn = load_epn<float>(checkpoint_or_throw("epn"));
    ShapeIndex index = load_index(index_path(config));
    size_t cls_hit_partial = 0, cls_hit_completed = 0;
    std::vector<LabeledQuery> q_partial, q_completed;
    for (size_t i = 0; i < pairs.size(); ++i) {
      int truth = pairs[i].entry->class_label;
      VoxelGrid partial_df = as_udf(loaded[i].two.abs);
      auto p1 = classify(classifier, partial_df);
      if (int(std::max_element(p1.begin(), p1.end()) - p1.begin()) == truth) ++cls_hit_partial;
      VoxelGrid completed = epn_predict(epn, loaded[i].two, p1);
      auto p2 = classify(classifier, completed);
      if (int(std::max_element(p2.begin(), p2.end()) - p2.begin()) == truth) ++cls_hit_completed;
      q_partial.push_back({extract_feature(classifier, partial_df), truth});
      q_completed.push_back({extract_feature(classifier, completed), truth});
    }
    result.recognition.queries = pairs.size();
    result.recognition.classification_partial = double(cls_hit_partial) / double(pairs.size());
    result.recognition.classification_completed = double(cls_hit_completed) / double(pairs.size());
    result.recognition.retrieval_partial = retrieval_accuracy(index, q_partial, config.synth_k);
    result.recognition.retrieval_completed =
        retrieval_accuracy(index, q_completed, config.synth_k);
    result.has_recognition = true;
    nlohmann::json j{{"queries", result.recognition.queries},
                     {"classification_partial", result.recognition.classification_partial},
                     {"classification_completed", result.recognition.classification_completed},
                     {"retrieval_partial", result.recognition.retrieval_partial},
                     {"retrieval_completed", result.recognition.retrieval_completed}};
    std::ofstream os(out_dir + "/recognition.json");
    os << j.dump(2) << '\n';
  }

  save_eval_records(result.records, out_dir + "/bench.csv");
  result.summaries = summarize(result.records);
  {
    std::ofstream os(out_dir + "/summary.txt");
    os << summary_table(result.summaries);
    std::ofstream cs(out_dir + "/summary.csv");
    cs << "method,resolution,count,mean_l1\n";
    for (const auto& s : result.summaries)
      cs << s.method << ',' << s.resolution << ',' << s.count << ',' << s.mean_l1 << '\n';
  }
  write_run_record(config, out_dir, "bench");
  return result;
}

}  // namespace vcomp
