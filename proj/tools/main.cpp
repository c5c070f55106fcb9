#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beds/experiment.hpp"
#include "beds/features.hpp"
#include "beds/metrics.hpp"
#include "beds/synthetic.hpp"

namespace fs = std::filesystem;
using namespace beds;

namespace {

struct StageTimer {
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  explicit StageTimer(std::string n) : name(std::move(n)) {}
  ~StageTimer() {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    std::cerr << "[beds] " << name << ": " << ms / 1000.0 << " s\n";
  }
};

std::vector<std::pair<RgbImage, BinaryMask>> corpus_pairs(const Corpus& corpus) {
  std::vector<std::pair<RgbImage, BinaryMask>> pairs;
  for (std::size_t i = 0; i < corpus.images.size(); ++i)
    pairs.emplace_back(corpus.images[i], corpus.masks[i]);
  return pairs;
}

// infer stains x models from stain{p}_model{q}.png names
void infer_grid_shape(const std::string& dir, int& stains, int& models) {
  const std::regex pattern(R"(stain(\d+)_model(\d+)\.png)");
  int max_p = -1, max_q = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      max_p = std::max(max_p, std::stoi(m[1]));
      max_q = std::max(max_q, std::stoi(m[2]));
    }
  }
  if (max_p < 0) throw std::runtime_error("no stain{p}_model{q}.png files in " + dir);
  stains = max_p + 1;
  models = max_q + 1;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"BEDs: bagging-ensemble segmentation with test-time stain augmentation"};
  app.require_subcommand(1);

  // ---- gen-synthetic ----
  auto* gen = app.add_subcommand("gen-synthetic", "render a synthetic H&E-style corpus");
  std::string gen_out;
  int gen_count = 8;
  SyntheticSpec spec;
  gen->add_option("--out", gen_out, "output corpus directory")->required();
  gen->add_option("--count", gen_count, "number of images");
  gen->add_option("--width", spec.width);
  gen->add_option("--height", spec.height);
  gen->add_option("--nuclei-min", spec.nuclei_min, "nuclei per 256x256 tile, lower bound");
  gen->add_option("--nuclei-max", spec.nuclei_max, "nuclei per 256x256 tile, upper bound");
  gen->add_option("--radius-min", spec.radius_min);
  gen->add_option("--radius-max", spec.radius_max);
  gen->add_option("--stain-jitter", spec.stain_jitter);
  gen->add_option("--noise-sigma", spec.noise_sigma);
  gen->add_option("--seed", spec.seed);
  gen->callback([&]() {
    StageTimer t("gen-synthetic");
    const auto ids = write_synthetic_corpus(spec, gen_count, gen_out);
    std::cout << "wrote " << ids.size() << " images to " << gen_out << "\n";
  });

  // ---- templates select ----
  auto* templates = app.add_subcommand("templates", "stain style templates");
  templates->require_subcommand(1);
  auto* tsel = templates->add_subcommand("select", "pick m templates by feature clustering");
  std::string tsel_train, tsel_out, tsel_embeddings;
  int tsel_m = 6;
  std::uint64_t tsel_seed = 0;
  tsel->add_option("--train-dir", tsel_train, "training corpus directory");
  tsel->add_option("--embeddings", tsel_embeddings, "externally computed embeddings csv");
  tsel->add_option("--m", tsel_m, "number of templates");
  tsel->add_option("--seed", tsel_seed);
  tsel->add_option("--out", tsel_out, "templates json path")->required();
  tsel->callback([&]() {
    StageTimer t("templates select");
    std::vector<FeatureVector> feats;
    std::string kind;
    if (!tsel_embeddings.empty()) {
      feats = ingest_embeddings(tsel_embeddings);
      kind = "external";
    } else if (!tsel_train.empty()) {
      const Corpus train = load_corpus(tsel_train, false);
      for (std::size_t i = 0; i < train.images.size(); ++i)
        feats.push_back(extract_features(train.images[i], train.ids[i]));
      kind = "builtin-72";
    } else {
      throw std::runtime_error("templates select: need --train-dir or --embeddings");
    }
    TemplateSet set = select_templates(feats, tsel_m, tsel_seed);
    set.feature_kind = kind;
    save_template_set(set, tsel_out);
    std::cout << "selected templates:";
    for (const auto& id : set.template_ids) std::cout << ' ' << id;
    std::cout << "\n";
  });

  // ---- stain fit / normalize ----
  auto* stain = app.add_subcommand("stain", "stain model fitting and normalization");
  stain->require_subcommand(1);
  auto* sfit = stain->add_subcommand("fit", "fit a two-stain SNMF model to an image");
  std::string sfit_image, sfit_out;
  StainFitOptions fit_opt;
  sfit->add_option("--image", sfit_image)->required();
  sfit->add_option("--out", sfit_out, "stain model json")->required();
  sfit->add_option("--lambda", fit_opt.lambda);
  sfit->add_option("--beta", fit_opt.beta);
  sfit->add_option("--i0", fit_opt.i0);
  sfit->add_option("--max-iters", fit_opt.max_outer_iters);
  sfit->add_option("--seed", fit_opt.seed);
  sfit->callback([&]() {
    StageTimer t("stain fit");
    StainFitTrace trace;
    const StainModel model = fit_stain_model(load_image(sfit_image), fit_opt, &trace);
    save_stain_model(model, sfit_out);
    std::cout << "fit " << (model.converged ? "converged" : "did not converge") << " after "
              << trace.iterations << " iterations\n";
  });

  auto* snorm = stain->add_subcommand("normalize", "map an image onto a template's stains");
  std::string snorm_image, snorm_template, snorm_source, snorm_out;
  double snorm_lambda = 0.1;
  std::uint64_t snorm_seed = 0;
  snorm->add_option("--image", snorm_image)->required();
  snorm->add_option("--template", snorm_template, "template stain model json")->required();
  snorm->add_option("--source-model", snorm_source,
                    "source stain model json (fitted from --image when omitted)");
  snorm->add_option("--lambda", snorm_lambda);
  snorm->add_option("--seed", snorm_seed);
  snorm->add_option("--out", snorm_out)->required();
  snorm->callback([&]() {
    StageTimer t("stain normalize");
    const RgbImage image = load_image(snorm_image);
    const StainModel tmpl = load_stain_model(snorm_template);
    StainModel source;
    if (snorm_source.empty()) {
      StainFitOptions opt;
      opt.lambda = snorm_lambda;
      opt.seed = snorm_seed;
      source = fit_stain_model(image, opt);
    } else {
      source = load_stain_model(snorm_source);
    }
    save_image(normalize_stain(image, source, tmpl), snorm_out);
  });

  // ---- ensemble train ----
  auto* ensemble = app.add_subcommand("ensemble", "segmentation model stack");
  ensemble->require_subcommand(1);
  auto* etrain = ensemble->add_subcommand("train", "train n bagged reference segmenters");
  std::string etrain_train, etrain_val, etrain_out;
  int etrain_n = 33;
  double etrain_fraction = 2.0 / 3.0;
  std::uint64_t etrain_seed = 0;
  TrainConfig train_cfg;
  etrain->add_option("--train-dir", etrain_train)->required();
  etrain->add_option("--val-dir", etrain_val)->required();
  etrain->add_option("--n", etrain_n, "ensemble size");
  etrain->add_option("--fraction", etrain_fraction, "subset fraction of the training rows");
  etrain->add_option("--seed", etrain_seed);
  etrain->add_option("--patch-size", train_cfg.patch_size);
  etrain->add_option("--epochs", train_cfg.max_epochs);
  etrain->add_option("--patience", train_cfg.patience);
  etrain->add_option("--pixels-per-patch", train_cfg.pixels_per_patch);
  etrain->add_option("--learning-rate", train_cfg.learning_rate);
  etrain->add_option("--out", etrain_out, "stack directory")->required();
  etrain->callback([&]() {
    StageTimer t("ensemble train");
    const Corpus train = load_corpus(etrain_train);
    const Corpus val = load_corpus(etrain_val);
    const auto train_patches = make_training_patches(corpus_pairs(train), train_cfg.patch_size);
    const auto val_patches = make_training_patches(corpus_pairs(val), train_cfg.patch_size);
    const SubsetPlan plan = sample_subsets(static_cast<int>(train_patches.size()), etrain_n,
                                           etrain_fraction, etrain_seed);
    const ModelStack stack = train_stack(train_patches, val_patches, plan, train_cfg);
    save_stack(stack, etrain_out);
    std::cout << "trained " << stack.models.size() << " models on " << train_patches.size()
              << " patches; validation DSC:";
    for (double d : stack.selection_scores) std::cout << ' ' << d;
    std::cout << "\n";
  });

  // ---- predict-grid ----
  auto* pgrid = app.add_subcommand("predict-grid",
                                   "predict the (stain x model) mask grid for test images");
  ExperimentConfig pg_cfg;
  pgrid->add_option("--test-dir", pg_cfg.test_dir)->required();
  pgrid->add_option("--train-dir", pg_cfg.train_dir);
  pgrid->add_option("--stack", pg_cfg.stack_dir)->required();
  pgrid->add_option("--templates", pg_cfg.templates_file);
  pgrid->add_option("--out", pg_cfg.grid_dir, "grid cache directory")->required();
  pgrid->add_option("--seed", pg_cfg.master_seed);
  pgrid->add_option("--patch-size", pg_cfg.hyper.patch_size);
  pgrid->add_option("--overlap", pg_cfg.hyper.overlap);
  pgrid->add_option("--threshold", pg_cfg.hyper.threshold);
  pgrid->add_option("--lambda", pg_cfg.hyper.lambda);
  pgrid->callback([&]() {
    StageTimer t("predict-grid");
    PipelineContext ctx = load_pipeline_context(pg_cfg, false);
    const int stains = 1 + static_cast<int>(ctx.template_models.size());
    for (std::size_t i = 0; i < ctx.test.images.size(); ++i) {
      StageTimer img_t("predict-grid " + ctx.test.ids[i]);
      predict_grid(ctx, i, stains);
    }
    std::cout << "grid written to " << pg_cfg.grid_dir << "\n";
  });

  // ---- fuse ----
  auto* fuse = app.add_subcommand("fuse", "majority-vote fusion of a mask grid");
  std::string fuse_topology = "all", fuse_grid, fuse_out;
  int fuse_stains = 0, fuse_models = 0;
  fuse->add_option("--topology", fuse_topology, "beds | all | model-stain | stain-model")
      ->check(CLI::IsMember({"beds", "all", "model-stain", "stain-model"}));
  fuse->add_option("--grid", fuse_grid, "directory of stain{p}_model{q}.png masks")->required();
  fuse->add_option("--stains", fuse_stains, "stain count (inferred when omitted)");
  fuse->add_option("--models", fuse_models, "model count (inferred when omitted)");
  fuse->add_option("--out", fuse_out, "fused mask png")->required();
  fuse->callback([&]() {
    StageTimer t("fuse");
    if (fuse_stains == 0 || fuse_models == 0)
      infer_grid_shape(fuse_grid, fuse_stains, fuse_models);
    const MaskGrid grid = ingest_external_masks(fuse_grid, fuse_stains, fuse_models);
    BinaryMask fused;
    if (fuse_topology == "all") {
      fused = fuse_all(grid);
    } else if (fuse_topology == "model-stain") {
      fused = fuse_model_stain(grid);
    } else if (fuse_topology == "stain-model") {
      fused = fuse_stain_model(grid);
    } else {  // beds: models only, original stain row
      std::vector<BinaryMask> row;
      for (int q = 0; q < grid.models; ++q) row.push_back(grid.at(0, q));
      fused = majority_vote(row);
    }
    save_mask(fused, fuse_out);
  });

  // ---- evaluate ----
  auto* evaluate = app.add_subcommand("evaluate", "pixel DSC and object F1 for mask pairs");
  std::string eval_pred, eval_gt, eval_out;
  double eval_iou = 0.5;
  evaluate->add_option("--pred", eval_pred, "directory of predicted <id>.png masks")->required();
  evaluate->add_option("--gt", eval_gt, "directory of ground-truth <id>.png masks")->required();
  evaluate->add_option("--iou", eval_iou, "IoU threshold for object matches");
  evaluate->add_option("--out", eval_out, "csv path (stdout when omitted)");
  evaluate->callback([&]() {
    StageTimer t("evaluate");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(eval_pred))
      if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw std::runtime_error("no predicted masks in " + eval_pred);

    std::ostringstream csv;
    csv << "image_id,dsc,f1,precision,recall,tp,fp,fn\n";
    for (const auto& id : ids) {
      const BinaryMask pred = load_mask((fs::path(eval_pred) / (id + ".png")).string());
      const fs::path gt_path = fs::path(eval_gt) / (id + ".png");
      if (!fs::exists(gt_path))
        throw std::runtime_error("missing ground truth for '" + id + "': " + gt_path.string());
      const BinaryMask gt = load_mask(gt_path.string());
      const double d = dsc(pred, gt);
      const ObjectScore s = object_f1(pred, gt, eval_iou);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%d,%d,%d\n", id.c_str(), d,
                    s.f1, s.precision, s.recall, s.match.true_positives,
                    s.match.false_positives, s.match.false_negatives);
      csv << buf;
    }
    if (eval_out.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream out(eval_out);
      if (!out) throw std::runtime_error("cannot write " + eval_out);
      out << csv.str();
    }
  });

  // ---- run ----
  auto* run = app.add_subcommand("run", "run one experiment from a json config");
  std::string run_config, run_out;
  run->add_option("--config", run_config)->required();
  run->add_option("--out", run_out, "results csv")->required();
  run->callback([&]() {
    StageTimer t("run");
    const ExperimentConfig cfg = load_experiment_config(run_config);
    const ResultTable table = run_experiment(cfg);
    table.to_csv(run_out);
    for (const auto& agg : table.aggregates())
      std::cout << agg.experiment << ": mean DSC " << agg.mean_dsc << ", median "
                << agg.median_dsc << ", mean F1 " << agg.mean_f1 << " over " << agg.images
                << " images\n";
  });

  // ---- ablate ----
  auto* ablate = app.add_subcommand("ablate", "sweep ensemble size per fusion topology");
  std::string ab_config, ab_out, ab_plot;
  std::vector<int> ab_n;
  std::vector<std::string> ab_topologies = {"beds", "all"};
  ablate->add_option("--config", ab_config)->required();
  ablate->add_option("--n-values", ab_n, "ensemble sizes to sweep")->required();
  ablate->add_option("--topologies", ab_topologies, "subset of: beds model-stain stain-model all");
  ablate->add_option("--out", ab_out, "results csv")->required();
  ablate->add_option("--plot", ab_plot, "plot-data csv (topology, n, mean dsc)");
  ablate->callback([&]() {
    StageTimer t("ablate");
    const ExperimentConfig cfg = load_experiment_config(ab_config);
    std::vector<ExperimentKind> kinds;
    for (const auto& name : ab_topologies) kinds.push_back(parse_experiment_kind(name));
    const ResultTable table = ablation_sweep(ab_n, kinds, cfg);
    table.to_csv(ab_out);
    if (!ab_plot.empty()) write_plot_data_csv(table, ab_plot);
    std::cout << "wrote " << table.rows.size() << " rows to " << ab_out << "\n";
  });

  // ---- report ----
  auto* report = app.add_subcommand("report", "aggregate results and test against a baseline");
  std::string rep_results, rep_baseline, rep_out, rep_plot;
  report->add_option("--results", rep_results, "results csv from run/ablate")->required();
  report->add_option("--baseline", rep_baseline, "baseline experiment id")->required();
  report->add_option("--out", rep_out, "report csv")->required();
  report->add_option("--plot", rep_plot, "plot-data csv for ablation-style labels");
  report->callback([&]() {
    StageTimer t("report");
    const ResultTable table = ResultTable::from_csv(rep_results);
    const Report rep = make_report(table, rep_baseline);
    write_report_csv(rep, rep_out);
    if (!rep_plot.empty()) write_plot_data_csv(table, rep_plot);
    for (const auto& row : rep.rows)
      std::cout << row.experiment << ": mean DSC " << row.mean_dsc << ", median "
                << row.median_dsc << ", F1 " << row.mean_f1 << ", p " << row.p_vs_baseline
                << (row.significant ? " (*)" : " (N.S.)") << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    const char* stage = argc > 1 ? argv[1] : "cli";
    std::cerr << "error (" << stage << "): " << e.what() << "\n";
    return 1;
  }
}
