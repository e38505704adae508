#pragma once

#include <filesystem>

#include "vcomp/classifier.hpp"
#include "vcomp/corpus.hpp"
#include "vcomp/eval.hpp"
#include "vcomp/index.hpp"
#include "vcomp/marching_cubes.hpp"
#include "vcomp/synthesis.hpp"

namespace vcomp {

struct PipelineConfig {
  std::string corpus_dir = "corpus";
  std::string dataset_dir = "dataset";
  std::string checkpoint_dir = "checkpoints";
  std::string pyramid_dir = "pyramids";
  std::string output_dir = "out";
  uint64_t seed = 1;

  // Grid / fusion.
  int resolution = 32;
  int margin = 3;
  float truncation = 2.5f;

  // Virtual scanner.
  int scan_width = 320;
  int scan_height = 240;
  float scan_focal = 285.0f;
  float scan_far = 10.0f;
  float radius_factor = 2.5f;          // camera distance in bounding diagonals
  std::vector<int> view_counts{1, 2, 3, 4, 6, 8};  // partialness levels, one trajectory each

  // Corpus.
  int per_class = 200;

  // EPN.
  std::array<int, 4> epn_channels{8, 16, 32, 64};
  int epn_latent = 512;
  bool epn_use_skips = true;
  std::string epn_encoding = "sdf";
  int epn_epochs = 28;
  int epn_batch = 32;
  float epn_lr = 1e-3f;

  // Classifier.
  std::array<int, 3> cls_channels{8, 16, 32};
  int cls_feature_width = 128;
  int cls_epochs = 30;
  int cls_batch = 16;
  float cls_lr = 1e-3f;

  // Synthesis.
  int synth_levels = 3;
  int synth_k = 3;
  int synth_passes = 2;
  size_t synth_ann_visits = 1024;
  float synth_band_iso = 1.0f;
  int synth_patch_radius = 2;

  float mesh_iso = 0.5f;

  // Bench.
  std::vector<std::string> bench_methods{"copy", "mean", "epn"};
  int bench_limit = 0;      // per-method cap on evaluated pairs, 0 = all
  int bench_limit128 = 24;  // cap on models evaluated at 128^3

  Camera sensor() const {
    Camera c;
    c.width = scan_width;
    c.height = scan_height;
    c.fx = c.fy = scan_focal;
    c.cx = float(scan_width) * 0.5f - 0.5f;
    c.cy = float(scan_height) * 0.5f - 0.5f;
    return c;
  }

  SynthesisParams synthesis_params() const {
    SynthesisParams p;
    p.levels = synth_levels;
    p.passes = synth_passes;
    p.band_iso = synth_band_iso;
    p.patch_radius = synth_patch_radius;
    p.ann_visits = synth_ann_visits;
    p.truncation = truncation;
    return p;
  }
};

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("corpus_dir", c.corpus_dir);
  get("dataset_dir", c.dataset_dir);
  get("checkpoint_dir", c.checkpoint_dir);
  get("pyramid_dir", c.pyramid_dir);
  get("output_dir", c.output_dir);
  get("seed", c.seed);
  get("resolution", c.resolution);
  get("margin", c.margin);
  get("truncation", c.truncation);
  get("scan_width", c.scan_width);
  get("scan_height", c.scan_height);
  get("scan_focal", c.scan_focal);
  get("scan_far", c.scan_far);
  get("radius_factor", c.radius_factor);
  get("view_counts", c.view_counts);
  get("per_class", c.per_class);
  get("epn_channels", c.epn_channels);
  get("epn_latent", c.epn_latent);
  get("epn_use_skips", c.epn_use_skips);
  get("epn_encoding", c.epn_encoding);
  get("epn_epochs", c.epn_epochs);
  get("epn_batch", c.epn_batch);
  get("epn_lr", c.epn_lr);
  get("cls_channels", c.cls_channels);
  get("cls_feature_width", c.cls_feature_width);
  get("cls_epochs", c.cls_epochs);
  get("cls_batch", c.cls_batch);
  get("cls_lr", c.cls_lr);
  get("synth_levels", c.synth_levels);
  get("synth_k", c.synth_k);
  get("synth_passes", c.synth_passes);
  get("synth_ann_visits", c.synth_ann_visits);
  get("synth_band_iso", c.synth_band_iso);
  get("synth_patch_radius", c.synth_patch_radius);
  get("mesh_iso", c.mesh_iso);
  get("bench_methods", c.bench_methods);
  get("bench_limit", c.bench_limit);
  get("bench_limit128", c.bench_limit128);
  return c;
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  return nlohmann::json{{"corpus_dir", c.corpus_dir},
                        {"dataset_dir", c.dataset_dir},
                        {"checkpoint_dir", c.checkpoint_dir},
                        {"pyramid_dir", c.pyramid_dir},
                        {"output_dir", c.output_dir},
                        {"seed", c.seed},
                        {"resolution", c.resolution},
                        {"margin", c.margin},
                        {"truncation", c.truncation},
                        {"scan_width", c.scan_width},
                        {"scan_height", c.scan_height},
                        {"scan_focal", c.scan_focal},
                        {"scan_far", c.scan_far},
                        {"radius_factor", c.radius_factor},
                        {"view_counts", c.view_counts},
                        {"per_class", c.per_class},
                        {"epn_channels", c.epn_channels},
                        {"epn_latent", c.epn_latent},
                        {"epn_use_skips", c.epn_use_skips},
                        {"epn_encoding", c.epn_encoding},
                        {"epn_epochs", c.epn_epochs},
                        {"epn_batch", c.epn_batch},
                        {"epn_lr", c.epn_lr},
                        {"cls_channels", c.cls_channels},
                        {"cls_feature_width", c.cls_feature_width},
                        {"cls_epochs", c.cls_epochs},
                        {"cls_batch", c.cls_batch},
                        {"cls_lr", c.cls_lr},
                        {"synth_levels", c.synth_levels},
                        {"synth_k", c.synth_k},
                        {"synth_passes", c.synth_passes},
                        {"synth_ann_visits", c.synth_ann_visits},
                        {"synth_band_iso", c.synth_band_iso},
                        {"synth_patch_radius", c.synth_patch_radius},
                        {"mesh_iso", c.mesh_iso},
                        {"bench_methods", c.bench_methods},
                        {"bench_limit", c.bench_limit},
                        {"bench_limit128", c.bench_limit128}};
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config file not found: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

// Every run drops a reproducibility record next to its outputs.
inline void write_run_record(const PipelineConfig& config, const std::string& dir,
                             const std::string& command) {
  std::filesystem::create_directories(dir);
  nlohmann::json rec{{"command", command}, {"seed", config.seed}, {"format_version", 1},
                     {"config", config_to_json(config)}};
  std::ofstream os(dir + "/run_" + command + ".json");
  os << rec.dump(2) << '\n';
}

// --- Subcommand bodies --------------------------------------------------------

inline std::vector<CorpusEntry> run_gen_corpus(const PipelineConfig& config, bool force) {
  auto entries = gen_corpus(config.corpus_dir, config.per_class, config.seed, force);
  write_run_record(config, config.corpus_dir, "gen-corpus");
  return entries;
}

inline uint64_t trajectory_seed(uint64_t base, const std::string& model_id, int traj) {
  uint64_t h = 1469598103934665603ull;
  for (char c : model_id) {
    h ^= uint64_t(uint8_t(c));
    h *= 1099511628211ull;
  }
  return h ^ (base * 0x9e3779b97f4a7c15ull) ^ (uint64_t(traj) << 17);
}

// Renders, fuses, and writes one TSDF per (model, trajectory) plus one shared
// ground-truth DF per model.
inline std::vector<DatasetEntry> run_gen_dataset(const PipelineConfig& config) {
  namespace fs = std::filesystem;
  auto corpus = load_corpus_manifest(config.corpus_dir + "/corpus.tsv");
  if (corpus.empty()) throw DataError("gen-dataset: empty corpus manifest");
  fs::create_directories(config.dataset_dir);

  size_t n_traj = config.view_counts.size();
  std::vector<DatasetEntry> entries(corpus.size() * n_traj);
  std::atomic<size_t> done{0};
  parallel_chunks(corpus.size(), [&](size_t b, size_t e) {
    for (size_t mi = b; mi < e; ++mi) {
      const CorpusEntry& model = corpus[mi];
      TriMesh mesh = load_mesh(model.mesh_path);
      GridMeta meta = meta_for_mesh(mesh, config.resolution, config.margin);
      FusionParams params{config.truncation, meta};

      std::string gt_path = config.dataset_dir + "/" + model.model_id + ".gt.vxg";
      write_vxg(mesh_to_df(mesh, meta, config.truncation), gt_path);

      TriangleBvh bvh(mesh);
      float radius = config.radius_factor * mesh.bounds().diagonal();
      for (size_t t = 0; t < n_traj; ++t) {
        auto cams = gen_trajectory(trajectory_seed(config.seed, model.model_id, int(t)),
                                   config.view_counts[t], radius, mesh.bounds().center(),
                                   config.sensor());
        std::vector<DepthFrame> frames;
        frames.reserve(cams.size());
        for (const auto& cam : cams) frames.push_back(render_depth(bvh, cam, config.scan_far));
        VoxelGrid tsdf = fuse_tsdf(frames, params);
        std::string in_path =
            config.dataset_dir + "/" + model.model_id + ".t" + std::to_string(t) + ".vxg";
        write_vxg(tsdf, in_path);
        entries[mi * n_traj + t] =
            DatasetEntry{model.model_id, model.class_label, int(t), in_path, gt_path};
      }
      done.fetch_add(1);
    }
  });
  save_dataset_manifest(entries, config.dataset_dir + "/dataset.tsv");
  write_run_record(config, config.dataset_dir, "gen-dataset");
  return entries;
}

inline bool model_in_split(const std::vector<CorpusEntry>& corpus, const std::string& id,
                           bool test_split) {
  for (const auto& e : corpus)
    if (e.model_id == id) return e.test_split == test_split;
  throw DataError("model not in corpus manifest: " + id);
}

inline EpnConfig epn_config_from_pipeline(const PipelineConfig& config) {
  EpnConfig cfg;
  cfg.grid = config.resolution;
  cfg.enc_channels = config.epn_channels;
  cfg.latent = config.epn_latent;
  cfg.class_width = 4;
  cfg.use_skips = config.epn_use_skips;
  cfg.encoding = encoding_from_name(config.epn_encoding);
  cfg.in_channels = encoding_channels(cfg.encoding);
  cfg.truncation = config.truncation;
  return cfg;
}

// Train-split samples loaded into memory.
inline std::vector<EpnSample<float>> load_epn_dataset(const PipelineConfig& config,
                                                      const EpnConfig& cfg, bool test_split) {
  auto corpus = load_corpus_manifest(config.corpus_dir + "/corpus.tsv");
  auto manifest = load_dataset_manifest(config.dataset_dir + "/dataset.tsv");
  std::vector<const DatasetEntry*> picked;
  for (const auto& e : manifest)
    if (model_in_split(corpus, e.model_id, test_split)) picked.push_back(&e);
  std::vector<EpnSample<float>> samples(picked.size());
  parallel_chunks(picked.size(), [&](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) samples[i] = load_epn_sample<float>(*picked[i], cfg);
  });
  return samples;
}

inline std::string epn_checkpoint_path(const PipelineConfig& config, const std::string& name) {
  return config.checkpoint_dir + "/" + name + ".epn1";
}

inline std::vector<EpochStat> run_train_epn(const PipelineConfig& config,
                                            const std::string& name = "epn",
                                            bool verbose = false) {
  EpnConfig cfg = epn_config_from_pipeline(config);
  auto samples = load_epn_dataset(config, cfg, false);
  if (samples.empty()) throw DataError("train-epn: no training samples");
  Epn<float> model(cfg, config.seed);
  std::filesystem::create_directories(config.checkpoint_dir);
  TrainOptions opts;
  opts.epochs = config.epn_epochs;
  opts.batch_size = config.epn_batch;
  opts.seed = config.seed;
  opts.lr = config.epn_lr;
  opts.checkpoint_path = epn_checkpoint_path(config, name);
  opts.history_csv_path = config.checkpoint_dir + "/" + name + "_loss.csv";
  opts.verbose = verbose;
  auto history = train_epn(model, samples, opts);
  write_run_record(config, config.checkpoint_dir, "train-epn-" + name);
  return history;
}

inline std::string classifier_checkpoint_path(const PipelineConfig& config) {
  return config.checkpoint_dir + "/classifier.epn1";
}

// The classifier trains on complete ground-truth DFs of the train split.
inline std::vector<EpochStat> run_train_classifier(const PipelineConfig& config,
                                                   bool verbose = false) {
  auto corpus = load_corpus_manifest(config.corpus_dir + "/corpus.tsv");
  std::vector<const CorpusEntry*> train;
  for (const auto& e : corpus)
    if (!e.test_split) train.push_back(&e);
  if (train.empty()) throw DataError("train-classifier: no training models");

  std::vector<ClassifierSample<float>> samples(train.size());
  parallel_chunks(train.size(), [&](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) {
      VoxelGrid gt = read_vxg(config.dataset_dir + "/" + train[i]->model_id + ".gt.vxg");
      samples[i].input = grid_to_tensor<float>(gt);
      samples[i].label = train[i]->class_label;
    }
  });

  ClassifierConfig cfg;
  cfg.grid = config.resolution;
  cfg.channels = config.cls_channels;
  cfg.feature_width = config.cls_feature_width;
  cfg.classes = 4;
  ShapeClassifier<float> model(cfg, config.seed + 7);
  std::filesystem::create_directories(config.checkpoint_dir);
  TrainOptions opts;
  opts.epochs = config.cls_epochs;
  opts.batch_size = config.cls_batch;
  opts.seed = config.seed + 7;
  opts.lr = config.cls_lr;
  opts.history_csv_path = config.checkpoint_dir + "/classifier_loss.csv";
  opts.verbose = verbose;
  auto history = train_classifier(model, samples, opts);
  save_classifier(model, classifier_checkpoint_path(config));
  write_run_record(config, config.checkpoint_dir, "train-classifier");
  return history;
}

inline std::string index_path(const PipelineConfig& config) {
  return config.checkpoint_dir + "/shapes.vix";
}

// Features of every train-split model over its complete DF; test ids recorded
// as excluded so benchmark models can never be retrieved.
inline ShapeIndex run_build_index(const PipelineConfig& config) {
  auto corpus = load_corpus_manifest(config.corpus_dir + "/corpus.tsv");
  auto classifier = load_classifier<float>(classifier_checkpoint_path(config));
  ShapeIndex index;
  for (const auto& e : corpus)
    if (e.test_split) index.excluded.insert(e.model_id);
  std::vector<const CorpusEntry*> train;
  for (const auto& e : corpus)
    if (!e.test_split) train.push_back(&e);
  std::vector<ShapeIndexEntry> entries(train.size());
  parallel_chunks(train.size(), [&](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) {
      VoxelGrid gt = read_vxg(config.dataset_dir + "/" + train[i]->model_id + ".gt.vxg");
      ShapeIndexEntry entry;
      entry.model_id = train[i]->model_id;
      entry.class_label = train[i]->class_label;
      entry.feature = extract_feature(classifier, gt);
      entry.pyramid_path = config.pyramid_dir;
      entry.mesh_path = train[i]->mesh_path;
      entries[i] = std::move(entry);
    }
  });
  for (auto& e : entries) index.add(std::move(e));
  save_index(index, index_path(config));
  write_run_record(config, config.checkpoint_dir, "build-index");
  return index;
}

// Pyramids materialize lazily from source meshes and stay cached on disk.
inline SynthesisPyramid fetch_pyramid(const PipelineConfig& config, const ShapeIndexEntry& entry,
                                      const GridMeta& base_meta) {
  if (pyramid_exists(entry.pyramid_path, entry.model_id, config.synth_levels))
    return load_pyramid(entry.pyramid_path, entry.model_id, config.synth_levels);
  TriMesh mesh = load_mesh(entry.mesh_path);
  GridMeta own = meta_for_mesh(mesh, config.resolution, config.margin);
  (void)base_meta;
  SynthesisPyramid pyr =
      build_pyramid(mesh, own, config.synth_levels, config.truncation, entry.model_id);
  save_pyramid(pyr, entry.pyramid_path, entry.model_id);
  return pyr;
}

struct CompleteResult {
  VoxelGrid prediction32;
  std::vector<std::pair<std::string, float>> retrieved;
  VoxelGrid synthesized128;  // fine-voxel units, truncated
  TriMesh mesh;
  std::vector<float> class_probs;
};

// The end-to-end completion pass: classify, predict, retrieve, synthesize,
// and extract. Persists one artifact per stage under out_dir.
inline CompleteResult run_complete(const PipelineConfig& config, const std::string& input_path,
                                   const std::string& out_dir, bool no_synth = false,
                                   bool synth_only = false) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  VoxelGrid tsdf = read_vxg(input_path);
  if (tsdf.kind != GridKind::TSDF) throw DataError("complete: input must be a TSDF grid");
  TwoChannelGrid two = split_channels(tsdf, config.truncation);
  write_vxg(tsdf, out_dir + "/stage0_input.vxg");

  CompleteResult result;
  auto classifier = load_classifier<float>(classifier_checkpoint_path(config));

  // Class probabilities always come from the partial observation.
  VoxelGrid abs_df = two.abs;
  abs_df.kind = GridKind::UnsignedDF;
  result.class_probs = classify(classifier, abs_df);
  {
    nlohmann::json j{{"class_probs", result.class_probs}};
    std::ofstream os(out_dir + "/stage1_class.json");
    os << j.dump(2) << '\n';
  }

  if (synth_only) {
    result.prediction32 = abs_df;  // the raw partial field stands in for the prediction
  } else {
    auto epn = load_epn<float>(epn_checkpoint_path(config, "epn"));
    result.prediction32 = epn_predict(epn, two, result.class_probs);
  }
  write_vxg(result.prediction32, out_dir + "/stage2_epn32.vxg");

  if (no_synth) return result;

  ShapeIndex index = load_index(index_path(config));
  std::vector<float> feature = extract_feature(classifier, result.prediction32);
  RetrievalResult knn = knn_retrieve(index, feature, config.synth_k);
  result.retrieved = knn.hits;
  {
    std::ofstream os(out_dir + "/stage3_retrieved.txt");
    for (const auto& [id, dist] : knn.hits) os << id << '\t' << dist << '\n';
  }

  std::vector<SynthesisPyramid> neighbors;
  for (const auto& [id, dist] : knn.hits) {
    const ShapeIndexEntry* entry = index_find(index, id);
    if (!entry) throw DataError("complete: retrieved id missing from index: " + id);
    neighbors.push_back(fetch_pyramid(config, *entry, result.prediction32.meta));
  }
  VoxelGrid synth = synthesize(result.prediction32, neighbors, config.synthesis_params());

  // Convert to the fine level's own voxel units, truncated like the ground truth.
  float factor = float(1 << (config.synth_levels - 1));
  result.synthesized128 = synth;
  for (auto& v : result.synthesized128.values)
    v = std::min(v * factor, config.truncation);
  write_vxg(result.synthesized128, out_dir + "/stage4_synth128.vxg");

  result.mesh = marching_cubes(result.synthesized128, {config.mesh_iso, GridKind::UnsignedDF});
  write_mesh(result.mesh, out_dir + "/stage5_mesh.obj");
  write_run_record(config, out_dir, "complete");
  return result;
}

inline void run_mesh(const PipelineConfig& config, const std::string& input_path,
                     const std::string& output_path, float iso) {
  VoxelGrid grid = read_vxg(input_path);
  IsoParams params;
  params.iso = iso;
  params.source = grid.kind == GridKind::TSDF ? GridKind::TSDF : GridKind::UnsignedDF;
  TriMesh mesh = marching_cubes(grid, params);
  write_mesh(mesh, output_path);
  (void)config;
}

}  // namespace vcomp
