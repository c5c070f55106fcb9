#include "beds/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "beds/metrics.hpp"
#include "beds/rng.hpp"

namespace fs = std::filesystem;

namespace beds {

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "benchmark") return ExperimentKind::Benchmark;
  if (name == "single-model") return ExperimentKind::SingleModel;
  if (name == "beds") return ExperimentKind::Beds;
  if (name == "model-stain") return ExperimentKind::ModelStain;
  if (name == "stain-model") return ExperimentKind::StainModel;
  if (name == "all") return ExperimentKind::All;
  throw std::invalid_argument("unknown experiment kind: " + name);
}

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Benchmark: return "benchmark";
    case ExperimentKind::SingleModel: return "single-model";
    case ExperimentKind::Beds: return "beds";
    case ExperimentKind::ModelStain: return "model-stain";
    case ExperimentKind::StainModel: return "stain-model";
    case ExperimentKind::All: return "all";
  }
  return "?";
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read experiment config: " + path);
  nlohmann::json j;
  in >> j;

  ExperimentConfig cfg;
  cfg.kind = parse_experiment_kind(j.at("kind").get<std::string>());
  cfg.n = j.value("n", 0);
  cfg.model_index = j.value("model_index", 0);
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  cfg.test_dir = j.value("test_dir", std::string());
  cfg.train_dir = j.value("train_dir", std::string());
  cfg.stack_dir = j.value("stack_dir", std::string());
  cfg.templates_file = j.value("templates_file", std::string());
  cfg.grid_dir = j.value("grid_dir", std::string());
  if (j.contains("hyper")) {
    const auto& hj = j["hyper"];
    cfg.hyper.patch_size = hj.value("patch_size", cfg.hyper.patch_size);
    cfg.hyper.overlap = hj.value("overlap", cfg.hyper.overlap);
    cfg.hyper.threshold = hj.value("threshold", cfg.hyper.threshold);
    cfg.hyper.fraction = hj.value("fraction", cfg.hyper.fraction);
    cfg.hyper.lambda = hj.value("lambda", cfg.hyper.lambda);
  }
  return cfg;
}

std::vector<Aggregate> ResultTable::aggregates() const {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.experiment) == order.end())
      order.push_back(r.experiment);

  std::vector<Aggregate> out;
  for (const auto& exp : order) {
    Aggregate a;
    a.experiment = exp;
    std::vector<double> dscs;
    for (const auto& r : rows) {
      if (r.experiment != exp) continue;
      dscs.push_back(r.dsc);
      a.mean_f1 += r.f1;
    }
    a.images = static_cast<int>(dscs.size());
    for (double d : dscs) a.mean_dsc += d;
    a.mean_dsc /= a.images;
    a.mean_f1 /= a.images;
    std::sort(dscs.begin(), dscs.end());
    a.median_dsc = dscs.size() % 2 ? dscs[dscs.size() / 2]
                                   : 0.5 * (dscs[dscs.size() / 2 - 1] + dscs[dscs.size() / 2]);
    out.push_back(a);
  }
  return out;
}

void ResultTable::append(const ResultTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

void ResultTable::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results csv: " + path);
  out << "experiment,image_id,dsc,f1\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g", r.dsc, r.f1);
    out << r.experiment << ',' << r.image_id << ',' << buf << '\n';
  }
}

ResultTable ResultTable::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read results csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results csv is empty: " + path);
  ResultTable table;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    ResultRow r;
    std::string dsc_s, f1_s;
    if (!std::getline(ss, r.experiment, ',') || !std::getline(ss, r.image_id, ',') ||
        !std::getline(ss, dsc_s, ',') || !std::getline(ss, f1_s))
      throw std::runtime_error(path + ": malformed row at line " + std::to_string(lineno));
    r.dsc = std::stod(dsc_s);
    r.f1 = std::stod(f1_s);
    table.rows.push_back(std::move(r));
  }
  return table;
}

Corpus load_corpus(const std::string& dir, bool require_masks) {
  const fs::path images_dir = fs::path(dir) / "images";
  if (!fs::is_directory(images_dir))
    throw std::runtime_error("corpus directory has no images/ subdirectory: " + dir);
  Corpus corpus;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (entry.path().extension() == ".png") corpus.ids.push_back(entry.path().stem().string());
  }
  std::sort(corpus.ids.begin(), corpus.ids.end());
  if (corpus.ids.empty()) throw std::runtime_error("no PNG images in " + images_dir.string());

  for (const auto& id : corpus.ids) {
    corpus.images.push_back(load_image((images_dir / (id + ".png")).string()));
    if (require_masks) {
      const fs::path mask_path = fs::path(dir) / "masks" / (id + ".png");
      if (!fs::exists(mask_path))
        throw std::runtime_error("missing mask for image '" + id + "': " + mask_path.string());
      corpus.masks.push_back(load_mask(mask_path.string()));
    }
  }
  return corpus;
}

std::vector<PatchPair> make_training_patches(
    const std::vector<std::pair<RgbImage, BinaryMask>>& images, int patch_size) {
  std::vector<PatchPair> patches;
  for (const auto& [img, mask] : images) {
    const TileGrid grid = plan_tiles(img.width, img.height, patch_size, 0);
    for (std::size_t t = 0; t < grid.size(); ++t) {
      RgbImage p = extract_patch(img, grid, t);
      BinaryMask m(patch_size, patch_size);
      const int ox = grid.origin_x(t), oy = grid.origin_y(t);
      for (int y = 0; y < patch_size; ++y)
        for (int x = 0; x < patch_size; ++x) m.at(x, y) = mask.at(ox + x, oy + y);
      patches.emplace_back(std::move(p), std::move(m));
    }
  }
  return patches;
}

namespace {

StainFitOptions fit_options_for(const ExperimentHyper& hyper, std::uint64_t seed) {
  StainFitOptions opt;
  opt.lambda = hyper.lambda;
  opt.seed = seed;
  return opt;
}

}  // namespace

PipelineContext load_pipeline_context(const ExperimentConfig& config,
                                      bool require_test_masks) {
  PipelineContext ctx;
  ctx.hyper = config.hyper;
  ctx.master_seed = config.master_seed;
  ctx.grid_dir = config.grid_dir;

  if (config.stack_dir.empty())
    throw std::runtime_error("experiment config names no stack_dir");
  ctx.stack = load_stack(config.stack_dir);

  if (!config.templates_file.empty()) {
    const TemplateSet set = load_template_set(config.templates_file);
    Corpus train;
    bool train_loaded = false;
    const fs::path cache_dir = fs::path(config.templates_file).parent_path();
    for (const auto& id : set.template_ids) {
      const fs::path model_path = cache_dir / ("stain_" + id + ".json");
      if (fs::exists(model_path)) {
        ctx.template_models.push_back(load_stain_model(model_path.string()));
        continue;
      }
      if (!train_loaded) {
        if (config.train_dir.empty())
          throw std::runtime_error("template stain model " + model_path.string() +
                                   " is missing and no train_dir is configured to fit it");
        train = load_corpus(config.train_dir, false);
        train_loaded = true;
      }
      const auto it = std::find(train.ids.begin(), train.ids.end(), id);
      if (it == train.ids.end())
        throw std::runtime_error("template image '" + id + "' not found in " + config.train_dir);
      const RgbImage& img = train.images[it - train.ids.begin()];
      StainModel model = fit_stain_model(
          img, fit_options_for(config.hyper, hash_key(config.master_seed, "template-fit",
                                                      hash_str(id))));
      save_stain_model(model, model_path.string());
      ctx.template_models.push_back(std::move(model));
    }
  }

  if (config.test_dir.empty()) throw std::runtime_error("experiment config names no test_dir");
  ctx.test = load_corpus(config.test_dir, require_test_masks);
  return ctx;
}

std::vector<int> model_permutation(int stack_size, std::uint64_t master_seed) {
  std::vector<int> perm(stack_size);
  for (int i = 0; i < stack_size; ++i) perm[i] = i;
  Rng rng(hash_key(master_seed, "beds-permutation"));
  rng.shuffle(perm);
  return perm;
}

MaskGrid predict_grid(PipelineContext& ctx, std::size_t test_index, int stains_needed) {
  const RgbImage& image = ctx.test.images[test_index];
  const std::string& id = ctx.test.ids[test_index];
  const int n_models = static_cast<int>(ctx.stack.models.size());

  const fs::path image_cache =
      ctx.grid_dir.empty() ? fs::path() : fs::path(ctx.grid_dir) / id;
  if (!ctx.grid_dir.empty()) fs::create_directories(image_cache);

  PredictOptions pred;
  pred.threshold = ctx.hyper.threshold;
  pred.patch_size = ctx.hyper.patch_size;
  pred.overlap = ctx.hyper.overlap;

  std::vector<const LinearPixelSegmenter*> models;
  for (const auto& m : ctx.stack.models) models.push_back(&m);

  StainModel source_model;
  bool source_fitted = false;
  auto ensure_source_model = [&]() {
    if (source_fitted) return;
    const fs::path cached = image_cache / "source_stain.json";
    if (!ctx.grid_dir.empty() && fs::exists(cached)) {
      source_model = load_stain_model(cached.string());
    } else {
      source_model = fit_stain_model(
          image, fit_options_for(ctx.hyper, hash_key(ctx.master_seed, "source-fit",
                                                     hash_str(id))));
      if (!ctx.grid_dir.empty()) save_stain_model(source_model, cached.string());
    }
    source_fitted = true;
  };

  auto mask_path = [&](int p, int q) {
    return image_cache /
           ("stain" + std::to_string(p) + "_model" + std::to_string(q) + ".png");
  };

  auto compute_row = [&](int p) {
    // disk cache first
    if (!ctx.grid_dir.empty()) {
      bool complete = true;
      for (int q = 0; q < n_models && complete; ++q) complete = fs::exists(mask_path(p, q));
      if (complete) {
        std::vector<BinaryMask> row(n_models);
        for (int q = 0; q < n_models; ++q) {
          row[q] = load_mask(mask_path(p, q).string());
          if (row[q].width != image.width || row[q].height != image.height)
            throw std::runtime_error("cached mask " + mask_path(p, q).string() +
                                     " does not match the test image dimensions");
        }
        return row;
      }
    }
    RgbImage stained;
    if (p == 0) {
      stained = image;
    } else {
      ensure_source_model();
      if (static_cast<std::size_t>(p - 1) >= ctx.template_models.size())
        throw std::runtime_error("experiment needs template " + std::to_string(p - 1) +
                                 " but only " + std::to_string(ctx.template_models.size()) +
                                 " template models are loaded");
      stained = normalize_stain(image, source_model, ctx.template_models[p - 1]);
    }
    std::vector<BinaryMask> row = predict_image_stack(models, stained, pred);
    if (!ctx.grid_dir.empty())
      for (int q = 0; q < n_models; ++q) save_mask(row[q], mask_path(p, q).string());
    return row;
  };

  MaskGrid grid(stains_needed, n_models);
  if (ctx.cache_in_memory) {
    auto& rows = ctx.memory_cache[id];
    while (static_cast<int>(rows.size()) < stains_needed)
      rows.push_back(compute_row(static_cast<int>(rows.size())));
    for (int p = 0; p < stains_needed; ++p)
      for (int q = 0; q < n_models; ++q) grid.at(p, q) = rows[p][q];
  } else {
    for (int p = 0; p < stains_needed; ++p) {
      std::vector<BinaryMask> row = compute_row(p);
      for (int q = 0; q < n_models; ++q) grid.at(p, q) = std::move(row[q]);
    }
  }
  return grid;
}

namespace {

std::string experiment_label(ExperimentKind kind, int n, int model_index) {
  switch (kind) {
    case ExperimentKind::Benchmark: return "benchmark";
    case ExperimentKind::SingleModel: return "model-" + std::to_string(model_index);
    case ExperimentKind::Beds: return "beds-n" + std::to_string(n);
    case ExperimentKind::ModelStain: return "model-stain-n" + std::to_string(n);
    case ExperimentKind::StainModel: return "stain-model-n" + std::to_string(n);
    case ExperimentKind::All: return "all-n" + std::to_string(n);
  }
  return "?";
}

MaskGrid select_columns(const MaskGrid& grid, const std::vector<int>& columns) {
  MaskGrid out(grid.stains, static_cast<int>(columns.size()));
  for (int p = 0; p < grid.stains; ++p)
    for (std::size_t q = 0; q < columns.size(); ++q) out.at(p, q) = grid.at(p, columns[q]);
  return out;
}

}  // namespace

ResultTable run_experiment(PipelineContext& ctx, ExperimentKind kind, int n, int model_index) {
  const int stack_size = static_cast<int>(ctx.stack.models.size());
  if (n <= 0) n = stack_size;
  if (n > stack_size)
    throw std::invalid_argument("experiment requests n=" + std::to_string(n) +
                                " models from a stack of " + std::to_string(stack_size));
  const bool stain_aware = kind == ExperimentKind::ModelStain ||
                           kind == ExperimentKind::StainModel || kind == ExperimentKind::All;
  const int stains_needed = stain_aware ? 1 + static_cast<int>(ctx.template_models.size()) : 1;
  if ((kind == ExperimentKind::Benchmark || kind == ExperimentKind::SingleModel) &&
      (model_index < 0 || model_index >= stack_size))
    throw std::invalid_argument("model index " + std::to_string(model_index) +
                                " outside the stack of " + std::to_string(stack_size));

  const std::vector<int> perm = model_permutation(stack_size, ctx.master_seed);
  const std::vector<int> columns(perm.begin(), perm.begin() + n);
  const std::string label = experiment_label(kind, n, model_index);

  ResultTable table;
  for (std::size_t i = 0; i < ctx.test.images.size(); ++i) {
    const MaskGrid full = predict_grid(ctx, i, stains_needed);
    BinaryMask fused;
    switch (kind) {
      case ExperimentKind::Benchmark:
      case ExperimentKind::SingleModel:
        fused = full.at(0, model_index);
        break;
      case ExperimentKind::Beds: {
        std::vector<BinaryMask> row;
        for (int q : columns) row.push_back(full.at(0, q));
        fused = majority_vote(row);
        break;
      }
      case ExperimentKind::ModelStain:
        fused = fuse_model_stain(select_columns(full, columns));
        break;
      case ExperimentKind::StainModel:
        fused = fuse_stain_model(select_columns(full, columns));
        break;
      case ExperimentKind::All:
        fused = fuse_all(select_columns(full, columns));
        break;
    }
    ResultRow row;
    row.experiment = label;
    row.image_id = ctx.test.ids[i];
    row.dsc = dsc(fused, ctx.test.masks[i]);
    row.f1 = object_f1(fused, ctx.test.masks[i]).f1;
    table.rows.push_back(std::move(row));
  }
  return table;
}

ResultTable run_experiment(const ExperimentConfig& config) {
  PipelineContext ctx = load_pipeline_context(config);
  return run_experiment(ctx, config.kind, config.n, config.model_index);
}

ResultTable ablation_sweep(const std::vector<int>& n_values,
                           const std::vector<ExperimentKind>& topologies,
                           const ExperimentConfig& base_config) {
  PipelineContext ctx = load_pipeline_context(base_config);
  ctx.cache_in_memory = true;  // every (image, stain, model) mask predicted once
  const int stack_size = static_cast<int>(ctx.stack.models.size());
  for (int n : n_values)
    if (n < 1 || n > stack_size)
      throw std::invalid_argument("ablation n=" + std::to_string(n) +
                                  " exceeds the stack of " + std::to_string(stack_size));
  ResultTable table;
  for (ExperimentKind kind : topologies)
    for (int n : n_values) table.append(run_experiment(ctx, kind, n, 0));
  return table;
}

Report make_report(const ResultTable& table, const std::string& baseline_experiment) {
  std::vector<std::pair<std::string, double>> baseline;
  for (const auto& r : table.rows)
    if (r.experiment == baseline_experiment) baseline.emplace_back(r.image_id, r.dsc);
  if (baseline.empty())
    throw std::invalid_argument("baseline experiment '" + baseline_experiment +
                                "' not present in the result table");
  std::sort(baseline.begin(), baseline.end());

  Report report;
  report.baseline = baseline_experiment;
  for (const auto& agg : table.aggregates()) {
    ReportRow row;
    row.experiment = agg.experiment;
    row.images = agg.images;
    row.mean_dsc = agg.mean_dsc;
    row.median_dsc = agg.median_dsc;
    row.mean_f1 = agg.mean_f1;

    std::vector<std::pair<std::string, double>> exp_rows;
    for (const auto& r : table.rows)
      if (r.experiment == agg.experiment) exp_rows.emplace_back(r.image_id, r.dsc);
    std::sort(exp_rows.begin(), exp_rows.end());

    std::vector<double> a, b;
    std::size_t bi = 0;
    for (const auto& [id, d] : exp_rows) {
      while (bi < baseline.size() && baseline[bi].first < id) ++bi;
      if (bi < baseline.size() && baseline[bi].first == id) {
        a.push_back(d);
        b.push_back(baseline[bi].second);
      }
    }
    if (a.size() >= 5) {
      const WilcoxonResult w = wilcoxon_signed_rank(a, b);
      row.p_vs_baseline = w.p_value;
      row.significant = w.p_value < 0.05;
    } else {
      row.p_vs_baseline = std::numeric_limits<double>::quiet_NaN();
      row.significant = false;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_csv(const Report& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report csv: " + path);
  out << "experiment,images,mean_dsc,median_dsc,mean_f1,wilcoxon_p_vs_" << report.baseline
      << ",significant\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,", r.mean_dsc, r.median_dsc, r.mean_f1);
    out << r.experiment << ',' << r.images << ',' << buf;
    if (std::isnan(r.p_vs_baseline))
      out << "na";
    else {
      std::snprintf(buf, sizeof(buf), "%.10g", r.p_vs_baseline);
      out << buf;
    }
    out << ',' << (r.significant ? "yes" : "N.S.") << '\n';
  }
}

void write_plot_data_csv(const ResultTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot data csv: " + path);
  out << "topology,n,mean_dsc\n";
  char buf[64];
  for (const auto& agg : table.aggregates()) {
    const auto pos = agg.experiment.rfind("-n");
    if (pos == std::string::npos) continue;
    const std::string topo = agg.experiment.substr(0, pos);
    int n = 0;
    try {
      n = std::stoi(agg.experiment.substr(pos + 2));
    } catch (const std::exception&) {
      continue;
    }
    std::snprintf(buf, sizeof(buf), "%.10g", agg.mean_dsc);
    out << topo << ',' << n << ',' << buf << '\n';
  }
}

}  // namespace beds
