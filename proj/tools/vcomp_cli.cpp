// Command-line front end for the volumetric shape-completion pipeline.
// Subcommands compose over the filesystem: every stage reads and writes
// plain artifacts (OBJ/PLY meshes, VXG1 grids, EPN1 checkpoints, TSV/CSV
// manifests), so any stage can be rerun or inspected in isolation.

#include <CLI11.hpp>

#include "vcomp/bench.hpp"
#include "vcomp/pipeline.hpp"

using namespace vcomp;

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool has_seed = false;
};

PipelineConfig make_config(const CommonArgs& args) {
  PipelineConfig config = args.config_path.empty() ? PipelineConfig{} : load_config(args.config_path);
  if (args.has_seed) config.seed = args.seed;
  return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&](const std::string&) { args.has_seed = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vcomp: data-driven 3D shape completion pipeline"};
  app.require_subcommand(1);

  CommonArgs args;

  // gen-corpus
  auto* gen_corpus_cmd = app.add_subcommand("gen-corpus", "generate the procedural model corpus");
  bool force = false;
  add_common(gen_corpus_cmd, args);
  gen_corpus_cmd->add_flag("--force", force, "overwrite a non-empty corpus directory");

  // gen-dataset
  auto* gen_dataset_cmd =
      app.add_subcommand("gen-dataset", "scan, fuse, and pair every corpus model");
  add_common(gen_dataset_cmd, args);
  std::vector<int> views_override;
  gen_dataset_cmd->add_option("--views", views_override,
                              "per-trajectory view counts (overrides config)");

  // train-classifier
  auto* train_cls_cmd = app.add_subcommand("train-classifier", "train the shape classifier");
  add_common(train_cls_cmd, args);
  bool verbose = false;
  train_cls_cmd->add_flag("-v,--verbose", verbose, "log per-epoch loss");

  // train-epn
  auto* train_epn_cmd = app.add_subcommand("train-epn", "train the encoder-predictor network");
  add_common(train_epn_cmd, args);
  std::string epn_name = "epn";
  bool epn_verbose = false;
  bool no_skips = false;
  std::string encoding_override;
  int epochs_override = 0;
  train_epn_cmd->add_option("--name", epn_name, "checkpoint name");
  train_epn_cmd->add_flag("--no-skips", no_skips, "train the skip-free ablation");
  train_epn_cmd->add_option("--encoding", encoding_override,
                            "input representation: sdf, df, ternary, binary");
  train_epn_cmd->add_option("--epochs", epochs_override, "override training epochs");
  train_epn_cmd->add_flag("-v,--verbose", epn_verbose, "log per-epoch loss");

  // build-index
  auto* build_index_cmd =
      app.add_subcommand("build-index", "embed the train split into the retrieval index");
  add_common(build_index_cmd, args);

  // complete
  auto* complete_cmd = app.add_subcommand("complete", "run the full completion pipeline");
  add_common(complete_cmd, args);
  std::string input_path, out_dir = "out/complete";
  bool no_synth = false, synth_only = false;
  int k_override = 0;
  float iso_override = -1.0f;
  complete_cmd->add_option("input", input_path, "partial-scan TSDF (.vxg)")->required();
  complete_cmd->add_option("--out", out_dir, "output directory");
  complete_cmd->add_flag("--no-synth", no_synth, "stop after the 32^3 prediction");
  complete_cmd->add_flag("--synth-only", synth_only,
                         "skip the network and synthesize from the partial input");
  complete_cmd->add_option("--k", k_override, "retrieved neighbor count");
  complete_cmd->add_option("--iso", iso_override, "mesh extraction iso value");

  // mesh
  auto* mesh_cmd = app.add_subcommand("mesh", "extract an isosurface mesh from a grid");
  add_common(mesh_cmd, args);
  std::string mesh_in, mesh_out = "out/mesh.obj";
  float mesh_iso = 0.5f;
  mesh_cmd->add_option("input", mesh_in, "grid file (.vxg)")->required();
  mesh_cmd->add_option("output", mesh_out, "mesh file (.obj or .ply)");
  mesh_cmd->add_option("--iso", mesh_iso, "iso value in voxel units");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "evaluate method variants on the test split");
  add_common(bench_cmd, args);
  std::string bench_out = "out/bench";
  std::vector<std::string> methods_override;
  bench_cmd->add_option("--out", bench_out, "output directory");
  bench_cmd->add_option("--methods", methods_override,
                        "methods: copy, mean, recognition, synth-only, <ckpt>, up128:<ckpt>, "
                        "synth:<ckpt>");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig config = make_config(args);
    if (*gen_corpus_cmd) {
      auto entries = run_gen_corpus(config, force);
      std::printf("corpus: %zu models in %s\n", entries.size(), config.corpus_dir.c_str());
    } else if (*gen_dataset_cmd) {
      if (!views_override.empty()) config.view_counts = views_override;
      auto entries = run_gen_dataset(config);
      std::printf("dataset: %zu training pairs in %s\n", entries.size(),
                  config.dataset_dir.c_str());
    } else if (*train_cls_cmd) {
      auto history = run_train_classifier(config, verbose);
      std::printf("classifier trained, final loss %.4f -> %s\n", history.back().mean_loss,
                  classifier_checkpoint_path(config).c_str());
    } else if (*train_epn_cmd) {
      if (no_skips) config.epn_use_skips = false;
      if (!encoding_override.empty()) config.epn_encoding = encoding_override;
      if (epochs_override > 0) config.epn_epochs = epochs_override;
      auto history = run_train_epn(config, epn_name, epn_verbose);
      std::printf("epn '%s' trained, final loss %.4f\n", epn_name.c_str(),
                  history.back().mean_loss);
    } else if (*build_index_cmd) {
      ShapeIndex index = run_build_index(config);
      std::printf("index: %zu entries (%zu excluded) -> %s\n", index.entries.size(),
                  index.excluded.size(), index_path(config).c_str());
    } else if (*complete_cmd) {
      if (k_override > 0) config.synth_k = k_override;
      if (iso_override > 0.0f) config.mesh_iso = iso_override;
      CompleteResult r = run_complete(config, input_path, out_dir, no_synth, synth_only);
      std::printf("complete: stages written to %s\n", out_dir.c_str());
      if (!no_synth)
        std::printf("  mesh: %zu vertices, %zu triangles\n", r.mesh.vertices.size(),
                    r.mesh.triangles.size());
    } else if (*mesh_cmd) {
      run_mesh(config, mesh_in, mesh_out, mesh_iso);
      std::printf("mesh written to %s\n", mesh_out.c_str());
    } else if (*bench_cmd) {
      if (!methods_override.empty()) config.bench_methods = methods_override;
      BenchResult r = run_bench(config, bench_out);
      std::printf("%s", summary_table(r.summaries).c_str());
      if (r.has_recognition)
        std::printf("recognition: classification %.3f -> %.3f, retrieval %.3f -> %.3f\n",
                    r.recognition.classification_partial,
                    r.recognition.classification_completed, r.recognition.retrieval_partial,
                    r.recognition.retrieval_completed);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
