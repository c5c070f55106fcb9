#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "beds/ensemble.hpp"
#include "beds/kmeans.hpp"
#include "beds/stain.hpp"

namespace beds {

enum class ExperimentKind { Benchmark, SingleModel, Beds, ModelStain, StainModel, All };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string experiment_kind_name(ExperimentKind kind);

struct ExperimentHyper {
  int patch_size = 256;
  int overlap = 20;
  double threshold = 0.5;
  double fraction = 2.0 / 3.0;
  double lambda = 0.1;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::All;
  int n = 0;            // models drawn from the stack (0 = whole stack)
  int model_index = 0;  // for benchmark / single-model kinds
  std::uint64_t master_seed = 0;
  std::string test_dir;        // images/ + masks/
  std::string train_dir;       // template source images
  std::string stack_dir;       // trained ModelStack
  std::string templates_file;  // TemplateSet json; stain models cached next to it
  std::string grid_dir;        // prediction cache; empty disables caching
  ExperimentHyper hyper;
};

ExperimentConfig load_experiment_config(const std::string& path);

struct ResultRow {
  std::string experiment;
  std::string image_id;
  double dsc = 0.0;
  double f1 = 0.0;
};

struct Aggregate {
  std::string experiment;
  int images = 0;
  double mean_dsc = 0.0;
  double median_dsc = 0.0;
  double mean_f1 = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  std::vector<Aggregate> aggregates() const;
  void append(const ResultTable& other);
  void to_csv(const std::string& path) const;
  static ResultTable from_csv(const std::string& path);
};

struct Corpus {
  std::vector<std::string> ids;
  std::vector<RgbImage> images;
  std::vector<BinaryMask> masks;  // empty when loaded without masks
};

// images/<id>.png (+ masks/<id>.png when require_masks), sorted by id
Corpus load_corpus(const std::string& dir, bool require_masks = true);

// Cut every image into patch_size x patch_size tiles (zero overlap plan, so a
// 512x512 image yields its four quadrants). These tiles are the dataset rows
// that bootstrap subsets index.
std::vector<PatchPair> make_training_patches(
    const std::vector<std::pair<RgbImage, BinaryMask>>& images, int patch_size = 256);

// In-memory pipeline state shared by run_experiment and ablation_sweep.
struct PipelineContext {
  ModelStack stack;
  std::vector<StainModel> template_models;
  Corpus test;
  std::string grid_dir;
  std::uint64_t master_seed = 0;
  ExperimentHyper hyper;
  // opt-in: keep computed grid rows resident so repeated experiments over the
  // same stack never re-predict or re-read a mask
  bool cache_in_memory = false;
  std::map<std::string, std::vector<std::vector<BinaryMask>>> memory_cache;
};

// Load stack / templates / test corpus from the paths in `config`, fitting
// and caching template stain models as needed.
PipelineContext load_pipeline_context(const ExperimentConfig& config,
                                      bool require_test_masks = true);

// The (m+1) x n prediction grid for one test image, using the on-disk cache
// when available. stains_needed is 1 for stain-free kinds, m+1 otherwise.
MaskGrid predict_grid(PipelineContext& ctx, std::size_t test_index, int stains_needed);

// Seed-keyed model order used by beds-n prefixes.
std::vector<int> model_permutation(int stack_size, std::uint64_t master_seed);

ResultTable run_experiment(const ExperimentConfig& config);
ResultTable run_experiment(PipelineContext& ctx, ExperimentKind kind, int n, int model_index);

// One run per (n, topology); the shared grid cache means every (image,
// stain, model) mask is predicted exactly once.
ResultTable ablation_sweep(const std::vector<int>& n_values,
                           const std::vector<ExperimentKind>& topologies,
                           const ExperimentConfig& base_config);

struct ReportRow {
  std::string experiment;
  int images = 0;
  double mean_dsc = 0.0;
  double median_dsc = 0.0;
  double mean_f1 = 0.0;
  double p_vs_baseline = 1.0;  // NaN when too few pairs
  bool significant = false;    // p < 0.05
};

struct Report {
  std::string baseline;
  std::vector<ReportRow> rows;
};

Report make_report(const ResultTable& table, const std::string& baseline_experiment);
void write_report_csv(const Report& report, const std::string& path);

// plot-ready (topology, n, mean_dsc) rows for experiments labeled "<topology>-n<k>"
void write_plot_data_csv(const ResultTable& table, const std::string& path);

}  // namespace beds
