#pragma once

// Extraction x selection x weighting experiment grid, driven by a JSON
// config. Every cell pools, ranks, selects, trains the ANN and scores macro-F1
// on the held-out split; baseline rows train the single affine head on pooled
// image tokens with no selection.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitsel/dataset.hpp"
#include "vitsel/encoder.hpp"
#include "vitsel/labels.hpp"
#include "vitsel/metrics.hpp"
#include "vitsel/mlp.hpp"
#include "vitsel/parallel.hpp"
#include "vitsel/pooling.hpp"
#include "vitsel/rankers.hpp"
#include "vitsel/synthetic.hpp"
#include "vitsel/tnsr.hpp"

namespace vitsel {

enum class Weighting { kUnweighted, kWeighted };

inline std::string_view to_string(Weighting w) { return w == Weighting::kWeighted ? "weighted" : "unweighted"; }

struct DataSpec {
  std::string source = "gaussian";  // gaussian | xor | toy_encoder | tnsr
  ClassCounts train_counts = {100, 60, 20};
  ClassCounts test_counts = {50, 30, 10};
  std::size_t width = 32;
  std::size_t informative = 4;
  std::size_t image_tokens = 16;
  double token_noise = 0.5;
  // toy_encoder
  EncoderConfig encoder;
  FineTuneConfig finetune = {.epochs = 3, .batch_size = 16, .learning_rate = 1e-3};
  double pixel_noise = 0.1;
  // tnsr
  std::filesystem::path train_tokens, train_labels, test_tokens, test_labels;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataSpec data;
  std::vector<ExtractionMode> modes = {ExtractionMode::kClassToken, ExtractionMode::kImageTokens,
                                       ExtractionMode::kAllTokens};
  std::vector<SelectionMethod> methods = {SelectionMethod::kLogReg, SelectionMethod::kRandForest,
                                          SelectionMethod::kGradBoost, SelectionMethod::kAllSelection};
  std::vector<Weighting> weightings = {Weighting::kUnweighted, Weighting::kWeighted};
  bool baseline = true;
  double validation_fraction = 0.1;
  MLPTrainConfig ann = {.batch_size = 64, .learning_rate = 1e-2};
  RankerConfig rankers;
  std::size_t workers = 1;
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::kConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    require(known, ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

inline ClassCounts read_counts(const json& j, const char* key, ClassCounts fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<std::size_t>>();
  require(v.size() == kNumClasses, ErrorCode::kConfig, std::string(key) + " needs exactly 3 counts");
  return {v[0], v[1], v[2]};
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

// FNV-1a, so per-cell seeds depend on the cell's name rather than its
// position in the grid.
inline std::uint64_t name_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Paths in the data section are resolved against `base_dir`.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::read;
  ExperimentConfig c;
  try {
    detail::check_keys(j, {"seed", "data", "modes", "methods", "weighting", "baseline", "validation_fraction", "ann",
                           "rankers", "workers"},
                       "config");
    read(j, "seed", c.seed);
    read(j, "baseline", c.baseline);
    read(j, "validation_fraction", c.validation_fraction);
    read(j, "workers", c.workers);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      detail::check_keys(d, {"source", "train_counts", "test_counts", "width", "informative", "image_tokens",
                             "token_noise", "pixel_noise", "encoder", "finetune", "train_tokens", "train_labels",
                             "test_tokens", "test_labels"},
                         "data");
      read(d, "source", c.data.source);
      c.data.train_counts = detail::read_counts(d, "train_counts", c.data.train_counts);
      c.data.test_counts = detail::read_counts(d, "test_counts", c.data.test_counts);
      read(d, "width", c.data.width);
      read(d, "informative", c.data.informative);
      read(d, "image_tokens", c.data.image_tokens);
      read(d, "token_noise", c.data.token_noise);
      read(d, "pixel_noise", c.data.pixel_noise);
      if (d.contains("encoder")) {
        const auto& e = d.at("encoder");
        detail::check_keys(e, {"image_size", "patch_size", "channels", "embed_dim", "depth", "heads", "mlp_ratio"},
                           "data.encoder");
        read(e, "image_size", c.data.encoder.image_size);
        read(e, "patch_size", c.data.encoder.patch_size);
        read(e, "channels", c.data.encoder.channels);
        read(e, "embed_dim", c.data.encoder.embed_dim);
        read(e, "depth", c.data.encoder.depth);
        read(e, "heads", c.data.encoder.heads);
        read(e, "mlp_ratio", c.data.encoder.mlp_ratio);
      }
      if (d.contains("finetune")) {
        const auto& f = d.at("finetune");
        detail::check_keys(f, {"epochs", "batch_size", "learning_rate", "weight_decay", "patience", "factor"},
                           "data.finetune");
        read(f, "epochs", c.data.finetune.epochs);
        read(f, "batch_size", c.data.finetune.batch_size);
        read(f, "learning_rate", c.data.finetune.learning_rate);
        read(f, "weight_decay", c.data.finetune.weight_decay);
        read(f, "patience", c.data.finetune.plateau_patience);
        read(f, "factor", c.data.finetune.plateau_factor);
      }
      for (auto [key, target] : {std::pair{"train_tokens", &c.data.train_tokens},
                                 std::pair{"train_labels", &c.data.train_labels},
                                 std::pair{"test_tokens", &c.data.test_tokens},
                                 std::pair{"test_labels", &c.data.test_labels}})
        if (d.contains(key)) *target = detail::resolve(base_dir, d.at(key).get<std::string>());
    }
    if (j.contains("modes")) {
      c.modes.clear();
      for (const auto& m : j.at("modes")) c.modes.push_back(parse_extraction_mode(m.get<std::string>()));
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_selection_method(m.get<std::string>()));
    }
    if (j.contains("weighting")) {
      const auto w = j.at("weighting").get<std::string>();
      if (w == "both") c.weightings = {Weighting::kUnweighted, Weighting::kWeighted};
      else if (w == "weighted") c.weightings = {Weighting::kWeighted};
      else if (w == "unweighted") c.weightings = {Weighting::kUnweighted};
      else fail(ErrorCode::kConfig, "weighting must be both, weighted or unweighted, got '" + w + "'");
    }
    if (j.contains("ann")) {
      const auto& a = j.at("ann");
      detail::check_keys(a, {"hidden", "epochs", "batch_size", "learning_rate"}, "ann");
      read(a, "hidden", c.ann.hidden);
      read(a, "epochs", c.ann.epochs);
      read(a, "batch_size", c.ann.batch_size);
      read(a, "learning_rate", c.ann.learning_rate);
    }
    if (j.contains("rankers")) {
      const auto& r = j.at("rankers");
      detail::check_keys(r, {"logreg_threshold", "forest_threshold", "logreg_l2", "logreg_max_iterations",
                             "forest_trees", "forest_depth", "boost_rounds", "boost_depth", "boost_learning_rate"},
                         "rankers");
      read(r, "logreg_threshold", c.rankers.logreg_threshold);
      read(r, "forest_threshold", c.rankers.forest_threshold);
      read(r, "logreg_l2", c.rankers.logreg.l2);
      read(r, "logreg_max_iterations", c.rankers.logreg.max_iterations);
      read(r, "forest_trees", c.rankers.forest.trees);
      read(r, "forest_depth", c.rankers.forest.max_depth);
      read(r, "boost_rounds", c.rankers.boosting.rounds);
      read(r, "boost_depth", c.rankers.boosting.max_depth);
      read(r, "boost_learning_rate", c.rankers.boosting.learning_rate);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed config value: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    fail(ErrorCode::kConfig, e.what());
  }
  require(!c.modes.empty() && !c.methods.empty(), ErrorCode::kConfig, "modes and methods must be non-empty");
  require(c.workers >= 1, ErrorCode::kConfig, "workers must be >= 1");
  const auto& s = c.data.source;
  require(s == "gaussian" || s == "xor" || s == "toy_encoder" || s == "tnsr", ErrorCode::kConfig,
          "data.source must be gaussian, xor, toy_encoder or tnsr, got '" + s + "'");
  if (s == "tnsr")
    require(!c.data.train_tokens.empty() && !c.data.train_labels.empty() && !c.data.test_tokens.empty() &&
                !c.data.test_labels.empty(),
            ErrorCode::kConfig, "tnsr data needs train_tokens, train_labels, test_tokens and test_labels");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Data

struct TokenSplits {
  TokenDataset train;
  TokenDataset test;
};

inline TokenSplits load_grid_tokens(const ExperimentConfig& c) {
  const auto& d = c.data;
  if (d.source == "gaussian" || d.source == "xor") {
    auto base = [&](const ClassCounts& counts, std::uint64_t stream) {
      const std::uint64_t seed = Rng::derive(c.seed, stream);
      return d.source == "xor" ? generate_xor(counts, d.width, seed)
                               : generate_synthetic(counts, d.width, d.informative, seed);
    };
    return {tokens_around(base(d.train_counts, 10), d.image_tokens, d.token_noise, Rng::derive(c.seed, 12)),
            tokens_around(base(d.test_counts, 11), d.image_tokens, d.token_noise, Rng::derive(c.seed, 13))};
  }
  if (d.source == "toy_encoder") {
    const ImageSet train = generate_toy_images(d.train_counts, d.encoder.image_size, d.encoder.channels,
                                               d.pixel_noise, Rng::derive(c.seed, 10));
    const ImageSet test = generate_toy_images(d.test_counts, d.encoder.image_size, d.encoder.channels,
                                              d.pixel_noise, Rng::derive(c.seed, 11));
    FineTuneConfig ft = d.finetune;
    ft.seed = Rng::derive(c.seed, 15);
    const EncoderState encoder = fine_tune(init_encoder(d.encoder, Rng::derive(c.seed, 14)), train, ft).best_state;
    return {TokenDataset(extract_tokens(encoder, train, ExtractionMode::kAllTokens), train.labels),
            TokenDataset(extract_tokens(encoder, test, ExtractionMode::kAllTokens), test.labels)};
  }
  auto load = [](const std::filesystem::path& tokens, const std::filesystem::path& labels) {
    TokenTensor t = load_tensor(tokens);
    LabelVector y = read_labels_csv(labels);
    require(t.shape().n == y.size(), ErrorCode::kShapeMismatch,
            tokens.string() + " holds " + std::to_string(t.shape().n) + " samples but " + labels.string() + " has " +
                std::to_string(y.size()) + " labels");
    return TokenDataset(std::move(t), std::move(y));
  };
  return {load(d.train_tokens, d.train_labels), load(d.test_tokens, d.test_labels)};
}

// The requested view of an all-tokens tensor, or the tensor itself when it
// already holds exactly that mode.
inline TokenTensor token_view(const TokenTensor& t, ExtractionMode mode) {
  if (t.mode() == mode) return t;
  require(t.mode() == ExtractionMode::kAllTokens && t.shape().l >= 2, ErrorCode::kConfig,
          "a " + std::string(to_string(t.mode())) + "-token tensor cannot provide " + std::string(to_string(mode)) +
              " tokens");
  if (mode == ExtractionMode::kClassToken) return t.slice_tokens(0, 1, mode);
  return t.slice_tokens(1, t.shape().l, mode);
}

struct ModeData {
  Dataset train;  // fit part
  Dataset val;
  Dataset test;
};

inline ModeData pool_mode(const TokenSplits& tokens, ExtractionMode mode, double validation_fraction,
                          std::uint64_t seed) {
  const Dataset full(pool_tokens(token_view(tokens.train.tokens, mode)), tokens.train.labels, SplitTag::kTrain);
  auto [train, val] = stratified_split(full, validation_fraction, seed);
  Dataset test(pool_tokens(token_view(tokens.test.tokens, mode)), tokens.test.labels, SplitTag::kTest);
  return {std::move(train), std::move(val), std::move(test)};
}

// ---------------------------------------------------------------------------
// Grid

inline constexpr std::string_view kBaselineMethod = "baseline";

struct GridRow {
  std::string mode;
  std::string method;
  std::string weighting;
  bool ok = false;
  std::string error;
  F1Report f1;
  std::size_t kept_features = 0;
  double filtered_fraction = 0.0;
  std::size_t best_epoch = 0;
};

struct RankingOutcome {
  ExtractionMode mode = ExtractionMode::kClassToken;
  SelectionMethod method = SelectionMethod::kAllSelection;
  std::optional<ImportanceRanking> ranking;
  std::string error;
};

struct GridReport {
  std::vector<GridRow> rows;
  std::vector<RankingOutcome> rankings;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  std::size_t test_rows = 0;
  std::size_t token_width = 0;
};

namespace detail {

inline void score_row(GridRow& row, const MLPParams& params, const Dataset& test, std::size_t best_epoch) {
  row.f1 = macro_f1(test.labels, predict(params, test.features.matrix()).classes);
  row.best_epoch = best_epoch;
  row.ok = true;
}

inline std::optional<ClassWeights> weights_for(Weighting w, const Dataset& train) {
  if (w == Weighting::kUnweighted) return std::nullopt;
  return compute_class_weights(train.labels.counts());
}

}  // namespace detail

inline GridReport run_grid(const ExperimentConfig& c) {
  const TokenSplits tokens = load_grid_tokens(c);
  std::vector<ExtractionMode> pooled_modes = c.modes;
  if (c.baseline && std::find(pooled_modes.begin(), pooled_modes.end(), ExtractionMode::kImageTokens) == pooled_modes.end())
    pooled_modes.push_back(ExtractionMode::kImageTokens);
  std::map<ExtractionMode, ModeData> data;
  for (ExtractionMode m : pooled_modes)
    data.emplace(m, pool_mode(tokens, m, c.validation_fraction, Rng::derive(c.seed, 16)));

  GridReport report;
  const ModeData& first = data.at(c.modes.front());
  report.train_rows = first.train.size();
  report.val_rows = first.val.size();
  report.test_rows = first.test.size();
  report.token_width = first.train.width();

  for (ExtractionMode m : c.modes)
    for (SelectionMethod s : c.methods) report.rankings.push_back({m, s, std::nullopt, {}});
  parallel_for(report.rankings.size(), c.workers, [&](std::size_t i) {
    RankingOutcome& r = report.rankings[i];
    const std::string key = std::string(to_string(r.mode)) + "/" + std::string(to_string(r.method));
    try {
      r.ranking = rank_features(r.method, data.at(r.mode).train, c.rankers,
                                Rng::derive(c.seed, detail::name_hash("rank/" + key)));
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  });

  struct CellSpec {
    ExtractionMode mode;
    std::optional<SelectionMethod> method;  // empty = baseline head
    Weighting weighting;
    std::size_t ranking_index = 0;
  };
  std::vector<CellSpec> cells;
  for (std::size_t mi = 0; mi < c.modes.size(); ++mi)
    for (std::size_t si = 0; si < c.methods.size(); ++si)
      for (Weighting w : c.weightings) cells.push_back({c.modes[mi], c.methods[si], w, mi * c.methods.size() + si});
  if (c.baseline)
    for (Weighting w : c.weightings) cells.push_back({ExtractionMode::kImageTokens, std::nullopt, w});

  report.rows.resize(cells.size());
  parallel_for(cells.size(), c.workers, [&](std::size_t i) {
    const CellSpec& cell = cells[i];
    GridRow& row = report.rows[i];
    row.mode = to_string(cell.mode);
    row.method = cell.method ? std::string(to_string(*cell.method)) : std::string(kBaselineMethod);
    row.weighting = to_string(cell.weighting);
    MLPTrainConfig ann = c.ann;
    ann.seed = Rng::derive(c.seed, detail::name_hash("cell/" + row.mode + "/" + row.method + "/" + row.weighting));
    const ModeData& d = data.at(cell.mode);
    try {
      const auto weights = detail::weights_for(cell.weighting, d.train);
      if (!cell.method) {
        const TrainReport tr = baseline_head(d.train, d.val, ann, weights);
        row.kept_features = d.train.width();
        detail::score_row(row, tr.best_params, d.test, tr.best_epoch);
        return;
      }
      const RankingOutcome& r = report.rankings[cell.ranking_index];
      require(r.ranking.has_value(), ErrorCode::kNumericalFailure, "ranking failed: " + r.error);
      const auto& mask = r.ranking->keep_mask;
      const Dataset train(project_features(d.train.features, mask), d.train.labels, SplitTag::kTrain);
      const Dataset val(project_features(d.val.features, mask), d.val.labels, SplitTag::kValidation);
      const Dataset test(project_features(d.test.features, mask), d.test.labels, SplitTag::kTest);
      row.kept_features = r.ranking->kept();
      row.filtered_fraction = r.ranking->filtered_fraction;
      const TrainReport tr = train_mlp(train, val, ann, weights);
      detail::score_row(row, tr.best_params, test, tr.best_epoch);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  return report;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

inline std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, const GridReport& report) {
  out << "extraction_mode,selection_method,weighting,f1_rubbish,f1_healthy,f1_unhealthy,macro_f1,"
         "kept_features,filtered_fraction,best_epoch,status,error\n";
  for (const auto& r : report.rows) {
    out << r.mode << ',' << r.method << ',' << r.weighting << ',';
    if (r.ok) {
      for (double f : r.f1.per_class) out << detail::fixed(f, 6) << ',';
      out << detail::fixed(r.f1.macro, 6) << ',' << r.kept_features << ',' << detail::fixed(r.filtered_fraction, 4)
          << ',' << r.best_epoch << ",ok,\n";
    } else {
      out << ",,,,,,,failed," << detail::csv_quote(r.error) << '\n';
    }
  }
}

inline std::string grid_summary(const ExperimentConfig& c, const GridReport& report) {
  std::ostringstream out;
  out << "data: " << c.data.source << ", seed " << c.seed << ", E=" << report.token_width << ", train/val/test rows "
      << report.train_rows << '/' << report.val_rows << '/' << report.test_rows << '\n';
  out << "ann: hidden [";
  for (std::size_t i = 0; i < c.ann.hidden.size(); ++i) out << (i ? "," : "") << c.ann.hidden[i];
  out << "], " << c.ann.epochs << " epochs, batch " << c.ann.batch_size << ", lr " << c.ann.learning_rate << "\n\n";

  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-11s %-11s %9s %9s %9s %9s %6s %9s\n", "mode", "selection", "weighting",
                "rubbish", "healthy", "unhealthy", "macro", "kept", "filtered");
  out << line;
  const GridRow* best = nullptr;
  std::size_t failures = 0;
  for (const auto& r : report.rows) {
    if (!r.ok) {
      ++failures;
      std::snprintf(line, sizeof line, "%-6s %-11s %-11s  FAILED: ", r.mode.c_str(), r.method.c_str(),
                    r.weighting.c_str());
      out << line << r.error << '\n';
      continue;
    }
    std::snprintf(line, sizeof line, "%-6s %-11s %-11s %9.4f %9.4f %9.4f %9.4f %6zu %8.2f%%\n", r.mode.c_str(),
                  r.method.c_str(), r.weighting.c_str(), r.f1.per_class[0], r.f1.per_class[1], r.f1.per_class[2],
                  r.f1.macro, r.kept_features, 100.0 * r.filtered_fraction);
    out << line;
    if (r.method != kBaselineMethod && (!best || r.f1.macro > best->f1.macro)) best = &r;
  }
  out << '\n';
  if (best)
    out << "best pipeline cell: " << best->mode << '/' << best->method << '/' << best->weighting << " macro-F1 "
        << detail::fixed(best->f1.macro, 4) << '\n';
  for (const auto& r : report.rows)
    if (r.ok && r.method == kBaselineMethod)
      out << "baseline (" << r.weighting << "): macro-F1 " << detail::fixed(r.f1.macro, 4) << '\n';
  out << "failed cells: " << failures << " of " << report.rows.size() << '\n';
  for (const auto& r : report.rankings)
    if (!r.ranking) out << "ranking " << to_string(r.mode) << '/' << to_string(r.method) << " failed: " << r.error << '\n';
  return out.str();
}

// metrics.csv, summary.txt and one ranking CSV per (mode, method) under `dir`.
inline void write_grid_outputs(const std::filesystem::path& dir, const ExperimentConfig& c, const GridReport& report) {
  std::filesystem::create_directories(dir / "rankings");
  for (const auto& r : report.rankings) {
    if (!r.ranking) continue;
    const auto name = std::string(to_string(r.mode)) + "_" + std::string(to_string(r.method)) + ".csv";
    write_file_atomic(dir / "rankings" / name, [&](std::ostream& out) { write_ranking_csv(out, *r.ranking); });
  }
  write_file_atomic(dir / "metrics.csv", [&](std::ostream& out) { write_metrics_csv(out, report); });
  write_file_atomic(dir / "summary.txt", [&](std::ostream& out) { out << grid_summary(c, report); });
}

}  // namespace vitsel
