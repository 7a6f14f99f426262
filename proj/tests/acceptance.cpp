// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "vitsel/encoder.hpp"
#include "vitsel/grid.hpp"
#include "vitsel/metrics.hpp"
#include "vitsel/mlp.hpp"
#include "vitsel/pooling.hpp"
#include "vitsel/rankers.hpp"
#include "vitsel/shap.hpp"
#include "vitsel/synthetic.hpp"
#include "vitsel/tnsr.hpp"

using namespace vitsel;

namespace {

using Clock = std::chrono::steady_clock;

class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& text) { notes_ += (notes_.empty() ? "" : "; ") + text; }
  bool ok() const { return failed_ == 0; }
  std::string detail() const {
    if (ok()) return notes_;
    std::string out = std::to_string(failed_) + " check(s) failed:";
    for (const auto& f : failures_) out += " [" + f + "]";
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
  std::string notes_;
};

std::string num(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal(0.0, sd);
  return m;
}

std::size_t code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<std::size_t>(e.code());
  }
  return std::numeric_limits<std::size_t>::max();
}

// ---------------------------------------------------------------------------

void class_weights(Checks& c) {
  const auto t = Clock::now();
  const ClassWeights w = compute_class_weights({50371, 28895, 5814});
  const double elapsed = seconds_since(t);
  const std::array<double, 3> expect = {1.000, 1.743, 8.664};
  for (std::size_t i = 0; i < 3; ++i)
    c.expect(std::round(w.weights[i] * 1000.0) / 1000.0 == expect[i],
             "weight " + std::to_string(i) + " = " + num(w.weights[i], 8));
  c.expect(elapsed < 1e-3, "took " + num(elapsed) + " s");
  c.note("(" + num(w.weights[0], 4) + ", " + num(w.weights[1], 4) + ", " + num(w.weights[2], 4) + ")");
}

void weighted_loss(Checks& c) {
  const ClassWeights w = compute_class_weights({50371, 28895, 5814});
  // softmax(ln 0.1, ln 0.2, ln 0.7) = (0.1, 0.2, 0.7)
  const std::vector<double> z = {std::log(0.1), std::log(0.2), std::log(0.7)};
  const double loss = weighted_cross_entropy(z, 2, w);
  const double hand = -8.664 * std::log(0.7);
  c.expect(std::abs(hand - 3.0902) < 1e-4, "hand value " + num(hand, 8));
  c.expect(std::abs(loss - w.weights[2] * -std::log(0.7)) < 1e-12, "loss " + num(loss, 10));
  c.expect(std::abs(loss - 3.0902) < 1e-3, "loss vs 3.0902: " + num(loss, 8));
  const ClassWeights equal = compute_class_weights({40, 40, 40});
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> logits = {rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3)};
    const int label = static_cast<int>(rng.index(3));
    c.expect(weighted_cross_entropy(logits, label, equal) == weighted_cross_entropy(logits, label),
             "equal-count weights changed the loss");
  }
  c.note("-8.664 ln 0.7 = " + num(hand, 6) + ", table weight gives " + num(loss, 6));
}

void gradients(Checks& c) {
  const auto t = Clock::now();
  double worst = 0.0;
  std::size_t mlp_probes = 0;
  const ClassWeights table = compute_class_weights({50371, 28895, 5814});
  for (std::uint64_t seed : {1u, 2u}) {
    MLPParams p = init_mlp({5, 7, 6, 3}, seed);
    Rng rng(seed + 50);
    for (auto& b : p.biases)
      for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, 0) = rng.normal(0.0, 0.3);
    const Eigen::MatrixXd x = random_matrix(9, 5, rng);
    std::vector<int> y(9);
    for (int& v : y) v = static_cast<int>(rng.index(3));
    MLPCache cache;
    mlp_logits(p, x, &cache);
    for (std::size_t k = 0; k + 1 < cache.pre.size(); ++k)
      c.expect(cache.pre[k].cwiseAbs().minCoeff() > 1e-3, "probe point near a ReLU kink");
    const auto analytic = mlp_loss_and_gradient(p, x, y, table);
    auto tensors = p.mutable_tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      Eigen::MatrixXd& m = *tensors[k];
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          const double numeric = testing::central_difference(m, i, j, [&] { return mlp_loss(p, x, y, table); });
          const double err = testing::relative_error(analytic.grads[k](i, j), numeric);
          worst = std::max(worst, err);
          c.expect(err < 1e-4, "mlp tensor " + std::to_string(k) + " error " + num(err));
          ++mlp_probes;
        }
    }
  }

  EncoderConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.channels = 2;
  cfg.embed_dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  EncoderState s = init_encoder(cfg, 6);
  Rng jitter(106);
  EncoderState::visit(s, [&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) += jitter.normal(0.0, 0.2);
  });
  ImageSet images;
  std::vector<int> labels;
  for (int i = 0; i < 3; ++i) {
    Image img{8, 8, 2, std::vector<double>(128)};
    for (double& px : img.pixels) px = jitter.normal();
    images.images.push_back(img);
    labels.push_back(i);
  }
  images.labels = LabelVector(labels);
  const std::vector<std::size_t> rows = {0, 1, 2};
  EncoderState grads;
  encoder_loss_and_gradient(s, images, rows, table, grads);
  const std::vector<Eigen::MatrixXd> analytic = grads.tensors();
  std::vector<Eigen::MatrixXd*> params = s.mutable_tensors();
  Rng pick(6);
  std::size_t encoder_probes = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::MatrixXd& m = *params[k];
    const Eigen::Index count = std::min<Eigen::Index>(m.size(), 12);
    for (Eigen::Index q = 0; q < count; ++q) {
      const auto flat = q == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(pick.index(static_cast<std::size_t>(m.size())));
      const double numeric =
          testing::central_difference(m, flat % m.rows(), flat / m.rows(), [&] { return encoder_loss(s, images, table); });
      const double err = testing::relative_error(analytic[k](flat % m.rows(), flat / m.rows()), numeric);
      worst = std::max(worst, err);
      c.expect(err < 1e-4, "encoder tensor " + std::to_string(k) + " error " + num(err));
      ++encoder_probes;
    }
  }
  const double elapsed = seconds_since(t);
  c.expect(mlp_probes >= 100, "mlp probes " + std::to_string(mlp_probes));
  c.expect(encoder_probes >= 100, "encoder probes " + std::to_string(encoder_probes));
  c.expect(elapsed < 30.0, "took " + num(elapsed) + " s");
  c.note(std::to_string(mlp_probes) + " mlp + " + std::to_string(encoder_probes) + " encoder probes, worst " + num(worst));
}

void shap_oracle(Checks& c) {
  const auto t = Clock::now();
  double worst_oracle = 0.0;
  double worst_additivity = 0.0;
  std::size_t explanations = 0;
  auto additivity = [&](const ShapExplanation& e) {
    double total = e.base_value;
    for (double v : e.phi) total += v;
    const double gap = std::abs(total - e.model_output);
    worst_additivity = std::max(worst_additivity, gap);
    c.expect(gap < 1e-6, "additivity gap " + num(gap));
    ++explanations;
  };
  for (std::size_t m = 2; m <= 8; ++m) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(100 * m + seed);
      const MLPParams p = init_mlp({m, 16, 3}, rng.next_u64());
      const PredictFn f = [&](const Eigen::MatrixXd& x) { return softmax_rows(mlp_logits(p, x)); };
      const Eigen::MatrixXd bg = random_matrix(6, static_cast<Eigen::Index>(m), rng);
      const Eigen::RowVectorXd inst = random_matrix(1, static_cast<Eigen::Index>(m), rng);
      for (int target = 0; target < 3; ++target) {
        const ShapExplanation e = kernel_shap(f, bg, inst, target, std::max((std::size_t{1} << m) - 2, m + 2), seed);
        c.expect(e.exhaustive, "M=" + std::to_string(m) + " not exhaustive");
        const std::vector<double> exact = exact_shapley(f, bg, inst, target);
        for (std::size_t j = 0; j < m; ++j) {
          worst_oracle = std::max(worst_oracle, std::abs(e.phi[j] - exact[j]));
          c.expect(std::abs(e.phi[j] - exact[j]) < 1e-6, "M=" + std::to_string(m) + " feature " + std::to_string(j));
        }
        additivity(e);
      }
    }
  }
  // Sampled explanations of a trained network over wider inputs.
  const Dataset d = generate_synthetic({40, 30, 20}, 24, 4, 3);
  MLPTrainConfig cfg{.hidden = {32}, .epochs = 10, .batch_size = 32, .learning_rate = 1e-2, .seed = 3};
  auto [train, val] = stratified_split(d, 0.1, 3);
  const MLPParams net = train_mlp(train, val, cfg).best_params;
  const PredictFn g = [&](const Eigen::MatrixXd& x) { return softmax_rows(mlp_logits(net, x)); };
  const Eigen::MatrixXd bg = sample_background(d.features.matrix(), 20, 3);
  const std::vector<std::size_t> rows = {0, 5, 10, 15, 20, 25, 30, 35};
  const LabelVector predicted = predict(net, d.features.matrix()).classes;
  std::vector<int> targets;
  for (std::size_t r : rows) targets.push_back(predicted[r]);
  for (const auto& e : explain_rows(g, bg, d.features.matrix(), rows, targets, default_shap_samples(24), 3))
    additivity(e);

  const PredictFn linear = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(x.col(0) + 2.0 * x.col(1)); };
  const ShapExplanation e = kernel_shap(linear, Eigen::MatrixXd::Zero(1, 2), Eigen::RowVectorXd::Ones(2), 0, 4, 0);
  c.expect(std::abs(e.phi[0] - 1.0) < 1e-6 && std::abs(e.phi[1] - 2.0) < 1e-6,
           "linear phi (" + num(e.phi[0], 10) + ", " + num(e.phi[1], 10) + ")");
  additivity(e);
  const double elapsed = seconds_since(t);
  c.expect(elapsed < 60.0, "took " + num(elapsed) + " s");
  c.note("oracle max diff " + num(worst_oracle) + ", additivity max gap " + num(worst_additivity) + " over " +
         std::to_string(explanations) + " explanations, linear phi (" + num(e.phi[0], 8) + ", " + num(e.phi[1], 8) +
         ")");
}

void selection_rules(Checks& c) {
  Rng rng(22);
  std::size_t checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> scores(1 + rng.index(30));
    for (double& s : scores) s = rng.uniform() < 0.4 ? 0.0 : std::pow(10.0, rng.uniform(-20.0, 0.0));
    scores[rng.index(scores.size())] = 0.5;
    const auto gb = apply_selection(scores, default_rule(SelectionMethod::kGradBoost));
    for (std::size_t j = 0; j < scores.size(); ++j) c.expect(gb.keep_mask[j] == (scores[j] != 0.0), "gradboost rule");
    ++checked;
  }
  const SelectionRule rf = default_rule(SelectionMethod::kRandForest);
  const SelectionRule lr = default_rule(SelectionMethod::kLogReg);
  c.expect(rf.threshold == 3e-6, "forest threshold " + num(rf.threshold));
  c.expect(lr.threshold == 1e-16, "logreg threshold " + num(lr.threshold));
  const auto rf_mask = apply_selection({3e-6, std::nextafter(3e-6, 1.0), 1.0}, rf).keep_mask;
  c.expect(rf_mask == std::vector<bool>{false, true, true}, "forest comparison is not strict >");
  const auto lr_mask = apply_selection({1e-16, std::nextafter(1e-16, 1.0), 1.0}, lr).keep_mask;
  c.expect(lr_mask == std::vector<bool>{false, true, true}, "logreg comparison is not strict >");

  std::size_t vectors = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores(1 + rng.index(40));
    for (double& s : scores) s = rng.uniform() < 0.2 ? 0.0 : std::pow(10.0, rng.uniform(-20.0, 0.0));
    scores[0] = 1.0;
    const double low = std::pow(10.0, rng.uniform(-21.0, -1.0));
    const double high = std::min(low * std::pow(10.0, rng.uniform(0.0, 5.0)), 0.5);
    const auto method = rng.uniform() < 0.5 ? SelectionMethod::kRandForest : SelectionMethod::kLogReg;
    const auto a = apply_selection(scores, SelectionRule{method, low});
    const auto b = apply_selection(scores, SelectionRule{method, high});
    for (std::size_t j = 0; j < scores.size(); ++j) c.expect(a.keep_mask[j] || !b.keep_mask[j], "monotonicity");
    ++vectors;
  }
  c.note(std::to_string(checked) + " gradboost vectors, strict thresholds 3e-6 / 1e-16, monotone over " +
         std::to_string(vectors) + " random vectors");
}

void ranker_recovery(Checks& c) {
  const std::size_t informative = 4;
  const Dataset d = generate_synthetic({300, 300, 300}, 32, informative, 2024);
  std::string margins;
  for (SelectionMethod m : {SelectionMethod::kLogReg, SelectionMethod::kRandForest, SelectionMethod::kGradBoost}) {
    const std::vector<double> s = importance_scores(m, d, RankerConfig{}, 2024);
    std::vector<double> noise(s.begin() + informative, s.end());
    std::nth_element(noise.begin(), noise.begin() + static_cast<std::ptrdiff_t>(noise.size() / 2), noise.end());
    const double median = noise[noise.size() / 2];
    double weakest = s[0];
    for (std::size_t j = 0; j < informative; ++j) {
      weakest = std::min(weakest, s[j]);
      c.expect(s[j] > median, std::string(to_string(m)) + " feature " + std::to_string(j));
    }
    c.expect(s == importance_scores(m, d, RankerConfig{}, 2024), std::string(to_string(m)) + " not deterministic");
    margins += std::string(margins.empty() ? "" : ", ") + std::string(to_string(m)) + " weakest/median " +
               num(median > 0 ? weakest / median : std::numeric_limits<double>::infinity(), 3);
  }
  c.note(margins);
}

void desk_grid(Checks& c) {
  const auto t = Clock::now();
  ExperimentConfig cfg;
  cfg.seed = 0;
  const GridReport report = run_grid(cfg);
  const double elapsed = seconds_since(t);
  std::size_t pipeline = 0;
  std::size_t baselines = 0;
  double lowest = 1.0;
  for (const auto& row : report.rows) {
    c.expect(row.ok, row.mode + "/" + row.method + "/" + row.weighting + " failed: " + row.error);
    if (row.method == kBaselineMethod) {
      ++baselines;
      continue;
    }
    ++pipeline;
    lowest = std::min(lowest, row.f1.macro);
    c.expect(row.f1.macro >= 0.90, row.mode + "/" + row.method + "/" + row.weighting + " macro-F1 " + num(row.f1.macro));
  }
  c.expect(pipeline == 24 && baselines == 2, "layout " + std::to_string(pipeline) + " + " + std::to_string(baselines));
  c.expect(elapsed < 300.0, "grid took " + num(elapsed) + " s");

  ExperimentConfig xor_cfg;
  xor_cfg.seed = 0;
  xor_cfg.data.source = "xor";
  xor_cfg.data.width = 8;
  xor_cfg.modes = {ExtractionMode::kImageTokens};
  xor_cfg.methods = {SelectionMethod::kAllSelection};
  const GridReport xr = run_grid(xor_cfg);
  std::string gaps;
  for (const char* w : {"unweighted", "weighted"}) {
    double ann = -1.0;
    double base = -1.0;
    for (const auto& row : xr.rows) {
      if (row.weighting != w || !row.ok) continue;
      (row.method == kBaselineMethod ? base : ann) = row.f1.macro;
    }
    c.expect(ann >= 0.0 && base >= 0.0, std::string("xor ") + w + " rows missing");
    c.expect(ann - base >= 0.1, std::string("xor ") + w + " ANN " + num(ann) + " vs baseline " + num(base));
    gaps += std::string(gaps.empty() ? "" : ", ") + w + " " + num(ann, 3) + " vs " + num(base, 3);
  }
  c.note("26 rows in " + num(elapsed, 3) + " s, lowest pipeline macro-F1 " + num(lowest) + "; xor ANN vs baseline: " +
         gaps);
}

void pooling(Checks& c) {
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(5);
    const std::size_t p = 1 + rng.index(12);
    const std::size_t e = 1 + rng.index(9);
    std::vector<float> data(n * (p + 1) * e);
    for (float& v : data) v = static_cast<float>(rng.normal(0.0, 10.0));
    const TokenTensor all({n, p + 1, e}, ExtractionMode::kAllTokens, data);
    const TokenTensor cls = all.slice_tokens(0, 1, ExtractionMode::kClassToken);
    const TokenTensor img = all.slice_tokens(1, p + 1, ExtractionMode::kImageTokens);
    const Eigen::MatrixXd pooled_all = pool_tokens(all).matrix();
    const Eigen::MatrixXd pooled_cls = pool_tokens(cls).matrix();
    const Eigen::MatrixXd combo = (pooled_cls + static_cast<double>(p) * pool_tokens(img).matrix()) / static_cast<double>(p + 1);
    const double diff = (pooled_all - combo).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    c.expect(diff < 1e-12, "all-token combination off by " + num(diff));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < e; ++j)
        c.expect(pooled_cls(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == cls.at(i, 0, j),
                 "L=1 pooling is not the identity");
    std::vector<std::size_t> order(p + 1);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<float> permuted(data.size());
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t l = 0; l < p + 1; ++l)
        for (std::size_t j = 0; j < e; ++j) permuted[(a * (p + 1) + l) * e + j] = all.at(a, order[l], j);
    const Eigen::MatrixXd pooled_perm = pool_tokens(TokenTensor({n, p + 1, e}, ExtractionMode::kAllTokens, permuted)).matrix();
    c.expect((pooled_perm - pooled_all).cwiseAbs().maxCoeff() < 1e-12, "token permutation changed the pool");
  }
  c.note("50 random tensors, worst all-token combination gap " + num(worst));
}

void serialization(Checks& c) {
  Rng rng(41);
  int trials = 0;
  for (; trials < 300; ++trials) {
    const TensorShape shape{1 + rng.index(8), 1 + rng.index(17), 1 + rng.index(24)};
    const auto mode =
        shape.l == 1 ? static_cast<ExtractionMode>(rng.index(3)) : static_cast<ExtractionMode>(1 + rng.index(2));
    std::vector<float> data(shape.size());
    for (float& v : data) v = static_cast<float>(rng.normal(0.0, 1e3));
    const TokenTensor t(shape, mode, data);
    std::stringstream io;
    write_tensor(t, io);
    c.expect(read_tensor(io) == t, "round trip differs");
  }
  std::ostringstream good;
  write_tensor(TokenTensor({2, 1, 3}, ExtractionMode::kClassToken), good);
  const std::string bytes = good.str();
  auto read = [](std::string s) {
    return code_of([&] {
      std::istringstream in(s);
      read_tensor(in);
    });
  };
  auto as = [](ErrorCode e) { return static_cast<std::size_t>(e); };
  std::string magic = bytes;
  magic[0] = 'X';
  c.expect(read(magic) == as(ErrorCode::kBadMagic), "bad magic accepted");
  std::string version = bytes;
  version[4] = 2;
  c.expect(read(version) == as(ErrorCode::kUnsupportedVersion), "unknown version accepted");
  std::string mode = bytes;
  mode[8] = 9;
  c.expect(read(mode) == as(ErrorCode::kCorruptHeader), "bad mode byte accepted");
  std::string reserved = bytes;
  reserved[10] = 1;
  c.expect(read(reserved) == as(ErrorCode::kCorruptHeader), "nonzero reserved byte accepted");
  c.expect(read(bytes.substr(0, 20)) == as(ErrorCode::kTruncated), "short header accepted");
  c.expect(read(bytes.substr(0, bytes.size() - 1)) == as(ErrorCode::kTruncated), "short payload accepted");
  c.expect(read("") == as(ErrorCode::kTruncated), "empty stream accepted");
  std::string cls_many = bytes;
  cls_many[20] = 2;
  std::string padded = cls_many + std::string(4 * 6, '\0');
  c.expect(read(padded) == as(ErrorCode::kShapeMismatch), "class mode with L=2 accepted");
  c.note(std::to_string(trials) + " random round trips, 8 malformed inputs rejected");
}

void macro_f1_metric(Checks& c) {
  const LabelVector truth(std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2});
  const LabelVector pred(std::vector<int>{0, 0, 1, 1, 1, 0, 2, 2});
  const F1Report r = macro_f1(truth, pred);
  c.expect(std::abs(r.per_class[0] - 2.0 / 3.0) < 1e-4 && std::abs(r.per_class[1] - 2.0 / 3.0) < 1e-4 &&
               r.per_class[2] == 1.0,
           "per-class (" + num(r.per_class[0]) + ", " + num(r.per_class[1]) + ", " + num(r.per_class[2]) + ")");
  c.expect(std::abs(r.macro - 0.7778) < 1e-4, "macro " + num(r.macro, 8));
  const F1Report perfect = macro_f1(truth, truth);
  c.expect(perfect.macro == 1.0, "perfect prediction gives " + num(perfect.macro, 17));
  c.note("hand case macro " + num(r.macro, 6) + ", perfect " + num(perfect.macro, 17));
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    void (*run)(Checks&);
  };
  const Criterion criteria[] = {
      {"class-weight reproduction", class_weights},
      {"weighted-loss formula", weighted_loss},
      {"gradient correctness", gradients},
      {"kernel SHAP oracle equivalence", shap_oracle},
      {"selection-rule fidelity", selection_rules},
      {"ranker signal recovery", ranker_recovery},
      {"desk-scale grid", desk_grid},
      {"pooling identities", pooling},
      {"serialization", serialization},
      {"macro-F1", macro_f1_metric},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Checks checks;
    const auto t = Clock::now();
    try {
      cr.run(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double elapsed = seconds_since(t);
    std::printf("%s  %-32s %7.2fs  %s\n", checks.ok() ? "PASS" : "FAIL", cr.name, elapsed, checks.detail().c_str());
    std::fflush(stdout);
    if (!checks.ok()) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
