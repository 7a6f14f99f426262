// vitsel: command-line entry point for every pipeline stage and the grid.
//
// Each subcommand reads and validates all of its inputs before creating the
// --out directory, and writes nothing outside it.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vitsel/encoder.hpp"
#include "vitsel/grid.hpp"
#include "vitsel/shap.hpp"

namespace fs = std::filesystem;
using namespace vitsel;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 1;

int exit_code(ErrorCode code) { return 3 + static_cast<int>(code); }

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Master seed (overrides the config)");
  sub->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "Output directory")->required();
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  require(!ec, ErrorCode::kIo, "cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, [&](std::ostream& o) { o << text; });
}

void write_labels(const fs::path& path, const LabelVector& labels) {
  write_file_atomic(path, [&](std::ostream& o) { write_labels_csv(o, labels); });
}

Dataset load_dataset(const std::string& features, const std::string& labels) {
  PooledFeatures x = tensor_to_pooled_rows(load_tensor(features));
  LabelVector y = read_labels_csv(labels);
  require(x.rows() == y.size(), ErrorCode::kShapeMismatch,
          features + " holds " + std::to_string(x.rows()) + " samples but " + labels + " has " +
              std::to_string(y.size()) + " labels");
  return Dataset(std::move(x), std::move(y));
}

ClassCounts split_counts(const ExperimentConfig& cfg, const std::string& split) {
  return split == "train" ? cfg.data.train_counts : cfg.data.test_counts;
}

std::uint64_t split_stream(const std::string& split) { return split == "train" ? 10 : 11; }

void print_f1(const F1Report& f1) {
  std::cout << "f1 rubbish " << format(f1.per_class[0]) << "  healthy " << format(f1.per_class[1]) << "  unhealthy "
            << format(f1.per_class[2]) << "  macro " << format(f1.macro) << '\n';
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string source;
};

void run_synth(const Common& common, const SynthArgs& a) {
  ExperimentConfig cfg = load_config(common);
  if (!a.source.empty()) cfg.data.source = a.source;
  require(cfg.data.source == "gaussian" || cfg.data.source == "xor", ErrorCode::kConfig,
          "synth generates gaussian or xor tokens, not '" + cfg.data.source + "'");
  const TokenSplits s = load_grid_tokens(cfg);
  const fs::path out = prepare_out(common);
  save_tensor(out / "train_tokens.tnsr", s.train.tokens);
  write_labels(out / "train_labels.csv", s.train.labels);
  save_tensor(out / "test_tokens.tnsr", s.test.tokens);
  write_labels(out / "test_labels.csv", s.test.labels);
  std::cout << "train " << s.train.labels.size() << " x " << s.train.tokens.shape().l << " x "
            << s.train.tokens.shape().e << ", test " << s.test.labels.size() << '\n';
}

struct FineTuneArgs {
  bool weighted = false;
};

void run_finetune(const Common& common, const FineTuneArgs& a) {
  const ExperimentConfig cfg = load_config(common);
  const auto& d = cfg.data;
  const ImageSet train = generate_toy_images(d.train_counts, d.encoder.image_size, d.encoder.channels, d.pixel_noise,
                                             Rng::derive(cfg.seed, 10));
  FineTuneConfig ft = d.finetune;
  ft.seed = Rng::derive(cfg.seed, 15);
  std::optional<ClassWeights> weights;
  if (a.weighted) weights = compute_class_weights(train.labels.counts());
  const FineTuneResult r = fine_tune(init_encoder(d.encoder, Rng::derive(cfg.seed, 14)), train, ft, weights);
  const fs::path out = prepare_out(common);
  save_bundle(out / "encoder.tnsr", encoder_to_bundle(r.best_state));
  write_file_atomic(out / "finetune_history.csv", [&](std::ostream& o) {
    o << "epoch,loss,learning_rate\n";
    for (std::size_t i = 0; i < r.loss_history.size(); ++i)
      o << i << ',' << format(r.loss_history[i]) << ',' << r.learning_rate_history[i] << '\n';
  });
  std::cout << "best epoch " << r.best_epoch << '\n';
}

struct ExtractArgs {
  std::string encoder;
  std::string split = "train";
  std::string mode = "all";
};

void run_extract(const Common& common, const ExtractArgs& a) {
  const ExperimentConfig cfg = load_config(common);
  const EncoderState encoder = encoder_from_bundle(load_bundle(a.encoder));
  const ImageSet images =
      generate_toy_images(split_counts(cfg, a.split), encoder.config.image_size, encoder.config.channels,
                          cfg.data.pixel_noise, Rng::derive(cfg.seed, split_stream(a.split)));
  const TokenTensor tokens = extract_tokens(encoder, images, parse_extraction_mode(a.mode));
  const fs::path out = prepare_out(common);
  save_tensor(out / (a.split + "_tokens.tnsr"), tokens);
  write_labels(out / (a.split + "_labels.csv"), images.labels);
  std::cout << tokens.shape().n << " x " << tokens.shape().l << " x " << tokens.shape().e << '\n';
}

struct PoolArgs {
  std::string tokens;
  std::string mode;
  std::string name = "pooled.tnsr";
};

void run_pool(const Common& common, const PoolArgs& a) {
  TokenTensor t = load_tensor(a.tokens);
  if (!a.mode.empty()) t = token_view(t, parse_extraction_mode(a.mode));
  const PooledFeatures pooled = pool_tokens(t);
  const fs::path out = prepare_out(common);
  save_tensor(out / a.name, pooled.to_tensor());
  std::cout << pooled.rows() << " x " << pooled.cols() << '\n';
}

struct RankArgs {
  std::string features;
  std::string labels;
  std::string method;
};

void run_rank(const Common& common, const RankArgs& a) {
  const ExperimentConfig cfg = load_config(common);
  const SelectionMethod method = parse_selection_method(a.method);
  const Dataset data = load_dataset(a.features, a.labels);
  const ImportanceRanking r =
      rank_features(method, data, cfg.rankers, Rng::derive(cfg.seed, detail::name_hash("rank/" + a.method)));
  const fs::path out = prepare_out(common);
  write_file_atomic(out / ("ranking_" + a.method + ".csv"), [&](std::ostream& o) { write_ranking_csv(o, r); });
  const std::string report = score_distribution_report(r.scores);
  write_text(out / ("scores_" + a.method + ".txt"), report);
  std::cout << "kept " << r.kept() << " of " << r.scores.size() << " features\n" << report;
}

struct SelectArgs {
  std::string features;
  std::string ranking;
  std::string name = "selected.tnsr";
};

void run_select(const Common& common, const SelectArgs& a) {
  const PooledFeatures x = tensor_to_pooled_rows(load_tensor(a.features));
  std::ifstream in(a.ranking);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open ranking " + a.ranking);
  const ImportanceRanking r = read_ranking_csv(in);
  const PooledFeatures kept = project_features(x, r.keep_mask);
  const fs::path out = prepare_out(common);
  save_tensor(out / a.name, kept.to_tensor());
  std::cout << kept.rows() << " x " << kept.cols() << '\n';
}

struct TrainArgs {
  std::string features;
  std::string labels;
  bool weighted = false;
  bool baseline = false;
};

void run_train(const Common& common, const TrainArgs& a) {
  const ExperimentConfig cfg = load_config(common);
  const Dataset data = load_dataset(a.features, a.labels);
  auto [train, val] = stratified_split(data, cfg.validation_fraction, Rng::derive(cfg.seed, 16));
  MLPTrainConfig ann = cfg.ann;
  ann.seed = Rng::derive(cfg.seed, detail::name_hash(a.baseline ? "train/baseline" : "train/ann"));
  std::optional<ClassWeights> weights;
  if (a.weighted) weights = compute_class_weights(train.labels.counts());
  const TrainReport r = a.baseline ? baseline_head(train, val, ann, weights) : train_mlp(train, val, ann, weights);
  const fs::path out = prepare_out(common);
  save_bundle(out / "model.tnsr", mlp_to_bundle(r.best_params));
  write_file_atomic(out / "training_history.csv", [&](std::ostream& o) {
    o << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < r.train_loss.size(); ++i)
      o << i << ',' << format(r.train_loss[i]) << ',' << format(r.val_loss[i]) << '\n';
  });
  std::cout << "best epoch " << r.best_epoch << ", validation loss " << format(r.val_loss[r.best_epoch]) << '\n';
}

struct EvalArgs {
  std::string model;
  std::string features;
  std::string labels;
};

void run_eval(const Common& common, const EvalArgs& a) {
  const MLPParams params = mlp_from_bundle(load_bundle(a.model));
  const Dataset data = load_dataset(a.features, a.labels);
  const Prediction p = predict(params, data.features.matrix());
  const F1Report f1 = macro_f1(data.labels, p.classes);
  const fs::path out = prepare_out(common);
  write_file_atomic(out / "predictions.csv", [&](std::ostream& o) {
    o << "index,label,predicted,p_rubbish,p_healthy,p_unhealthy\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      o << i << ',' << data.labels[i] << ',' << p.classes[i] << ',' << format(p.probabilities(r, 0)) << ','
        << format(p.probabilities(r, 1)) << ',' << format(p.probabilities(r, 2)) << '\n';
    }
  });
  write_file_atomic(out / "eval.csv", [&](std::ostream& o) {
    o << "f1_rubbish,f1_healthy,f1_unhealthy,macro_f1\n"
      << format(f1.per_class[0]) << ',' << format(f1.per_class[1]) << ',' << format(f1.per_class[2]) << ','
      << format(f1.macro) << '\n';
  });
  print_f1(f1);
}

struct ShapArgs {
  std::string model;
  std::string features;
  std::string background;
  std::size_t background_size = 100;
  std::vector<std::size_t> rows;
  std::size_t count = 10;
  std::size_t samples = 0;
  int target = -1;
  std::size_t top_k = 5;
  std::size_t workers = 1;
};

void run_shap(const Common& common, const ShapArgs& a) {
  const ExperimentConfig cfg = load_config(common);
  const MLPParams params = mlp_from_bundle(load_bundle(a.model));
  const PooledFeatures x = tensor_to_pooled_rows(load_tensor(a.features));
  const PooledFeatures bg_source =
      a.background.empty() ? x : tensor_to_pooled_rows(load_tensor(a.background));
  require(params.input_width() == x.cols(), ErrorCode::kShapeMismatch,
          "model expects " + std::to_string(params.input_width()) + " features but " + a.features + " has " +
              std::to_string(x.cols()));
  require(a.target >= -1 && a.target < static_cast<int>(kNumClasses), ErrorCode::kInvalidArgument,
          "target must be -1 (predicted class) or a class index 0..2");
  std::vector<std::size_t> rows = a.rows;
  if (rows.empty())
    for (std::size_t i = 0; i < std::min(a.count, x.rows()); ++i) rows.push_back(i);
  for (std::size_t r : rows)
    require(r < x.rows(), ErrorCode::kInvalidArgument, "row " + std::to_string(r) + " outside the feature matrix");

  const Eigen::MatrixXd background = sample_background(bg_source.matrix(), a.background_size, Rng::derive(cfg.seed, 20));
  const PredictFn model = [&](const Eigen::MatrixXd& in) { return softmax_rows(mlp_logits(params, in)); };
  const Prediction pred = predict(params, x.matrix());
  std::vector<int> targets;
  for (std::size_t r : rows) targets.push_back(a.target >= 0 ? a.target : pred.classes[r]);
  const std::size_t samples = a.samples ? a.samples : default_shap_samples(x.cols());
  const std::vector<ShapExplanation> ex =
      explain_rows(model, background, x.matrix(), rows, targets, samples, Rng::derive(cfg.seed, 21), a.workers);
  const GlobalImportance global = global_importance(ex);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < x.rows(); ++i) ids.push_back(std::to_string(i));
  const ExtremeValueReport extremes = extreme_value_report(global, x, ids, std::min(a.top_k, x.rows() / 2));

  const fs::path out = prepare_out(common);
  fs::create_directories(out / "shap");
  for (const auto& e : ex)
    write_file_atomic(out / "shap" / ("explanation_" + std::to_string(e.instance_index) + ".csv"),
                      [&](std::ostream& o) { write_explanation_csv(o, e); });
  write_file_atomic(out / "shap" / "global.csv", [&](std::ostream& o) { write_global_importance_csv(o, global); });
  write_file_atomic(out / "shap" / "extremes.csv", [&](std::ostream& o) { write_extreme_value_csv(o, extremes); });
  std::cout << "explained " << ex.size() << " rows, top feature " << global.top_feature << '\n';
}

struct GridArgs {
  std::optional<std::size_t> workers;
};

void run_grid_command(const Common& common, const GridArgs& a) {
  ExperimentConfig cfg = load_config(common);
  if (a.workers) cfg.workers = *a.workers;
  const auto start = std::chrono::steady_clock::now();
  const GridReport report = run_grid(cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_grid_outputs(prepare_out(common), cfg, report);
  std::cout << grid_summary(cfg, report);
  std::fprintf(stderr, "grid finished in %.1f s\n", seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vitsel: token pooling, feature selection and ANN classification pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::vector<Common> commons(10);
  std::function<void()> action;
  auto sub = [&](const char* name, const char* help, std::size_t slot) {
    CLI::App* s = app.add_subcommand(name, help);
    add_common(s, commons[slot]);
    return s;
  };

  SynthArgs synth;
  auto* s_synth = sub("synth", "Generate synthetic train/test token tensors and labels", 0);
  s_synth->add_option("--source", synth.source, "gaussian or xor (default: config data.source)")
      ->check(CLI::IsMember({"gaussian", "xor"}));
  s_synth->callback([&] { action = [&] { run_synth(commons[0], synth); }; });

  FineTuneArgs ft;
  auto* s_ft = sub("finetune-toy", "Fine-tune the toy encoder on generated images", 1);
  s_ft->add_flag("--weighted", ft.weighted, "Use class-weighted loss");
  s_ft->callback([&] { action = [&] { run_finetune(commons[1], ft); }; });

  ExtractArgs ex;
  auto* s_ex = sub("extract", "Extract tokens from generated images with a saved encoder", 2);
  s_ex->add_option("--encoder", ex.encoder, "Encoder bundle")->required()->check(CLI::ExistingFile);
  s_ex->add_option("--split", ex.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  s_ex->add_option("--mode", ex.mode, "class, image or all")->check(CLI::IsMember({"class", "image", "all"}));
  s_ex->callback([&] { action = [&] { run_extract(commons[2], ex); }; });

  PoolArgs pool;
  auto* s_pool = sub("pool", "Average tokens into one feature vector per sample", 3);
  s_pool->add_option("--tokens", pool.tokens, "Token tensor")->required()->check(CLI::ExistingFile);
  s_pool->add_option("--mode", pool.mode, "Token subset to pool from an all-tokens tensor")
      ->check(CLI::IsMember({"class", "image", "all"}));
  s_pool->add_option("--name", pool.name, "Output file name");
  s_pool->callback([&] { action = [&] { run_pool(commons[3], pool); }; });

  RankArgs rank;
  auto* s_rank = sub("rank", "Score feature importance and apply the selection rule", 4);
  s_rank->add_option("--features", rank.features, "Pooled features")->required()->check(CLI::ExistingFile);
  s_rank->add_option("--labels", rank.labels, "Label CSV")->required()->check(CLI::ExistingFile);
  s_rank->add_option("--method", rank.method, "Selection method")
      ->required()
      ->check(CLI::IsMember({"logreg", "randforest", "gradboost", "all"}));
  s_rank->callback([&] { action = [&] { run_rank(commons[4], rank); }; });

  SelectArgs sel;
  auto* s_sel = sub("select", "Keep the features marked in a ranking CSV", 5);
  s_sel->add_option("--features", sel.features, "Pooled features")->required()->check(CLI::ExistingFile);
  s_sel->add_option("--ranking", sel.ranking, "Ranking CSV")->required()->check(CLI::ExistingFile);
  s_sel->add_option("--name", sel.name, "Output file name");
  s_sel->callback([&] { action = [&] { run_select(commons[5], sel); }; });

  TrainArgs train;
  auto* s_train = sub("train-ann", "Train the ANN (or the baseline head) with a stratified validation split", 6);
  s_train->add_option("--features", train.features, "Pooled features")->required()->check(CLI::ExistingFile);
  s_train->add_option("--labels", train.labels, "Label CSV")->required()->check(CLI::ExistingFile);
  s_train->add_flag("--weighted", train.weighted, "Use class-weighted loss");
  s_train->add_flag("--baseline", train.baseline, "Train the single affine head instead of the ANN");
  s_train->callback([&] { action = [&] { run_train(commons[6], train); }; });

  EvalArgs ev;
  auto* s_eval = sub("eval", "Predict and score per-class and macro F1", 7);
  s_eval->add_option("--model", ev.model, "Model bundle")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--features", ev.features, "Pooled features")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--labels", ev.labels, "Label CSV")->required()->check(CLI::ExistingFile);
  s_eval->callback([&] { action = [&] { run_eval(commons[7], ev); }; });

  ShapArgs sh;
  auto* s_shap = sub("shap", "Kernel SHAP attributions, global ranking and extreme-value report", 8);
  s_shap->add_option("--model", sh.model, "Model bundle")->required()->check(CLI::ExistingFile);
  s_shap->add_option("--features", sh.features, "Features to explain")->required()->check(CLI::ExistingFile);
  s_shap->add_option("--background", sh.background, "Background features (default: --features)")
      ->check(CLI::ExistingFile);
  s_shap->add_option("--background-size", sh.background_size, "Background rows sampled")->check(CLI::PositiveNumber);
  s_shap->add_option("--rows", sh.rows, "Row indices to explain")->delimiter(',');
  s_shap->add_option("--count", sh.count, "Explain the first N rows when --rows is absent");
  s_shap->add_option("--samples", sh.samples, "Coalition samples (default 2M + 2048)");
  s_shap->add_option("--target", sh.target, "Class output to explain, -1 for the predicted class");
  s_shap->add_option("--top-k", sh.top_k, "Samples per side in the extreme-value report");
  s_shap->add_option("--workers", sh.workers, "Worker threads")->check(CLI::PositiveNumber);
  s_shap->callback([&] { action = [&] { run_shap(commons[8], sh); }; });

  GridArgs grid;
  auto* s_grid = sub("grid", "Run the extraction x selection x weighting grid", 9);
  s_grid->add_option("--workers", grid.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  s_grid->callback([&] { action = [&] { run_grid_command(commons[9], grid); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return 0;
}
