#pragma once

// Miniature ViT: patch tokens plus a learned class token, pre-norm
// transformer blocks (multi-head softmax attention, GELU feed-forward),
// learned positional embeddings, and a single affine head fed by the mean of
// the output image tokens. The class token attends in every block but never
// reaches the head directly.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vitsel/error.hpp"
#include "vitsel/labels.hpp"
#include "vitsel/mlp.hpp"
#include "vitsel/optim.hpp"
#include "vitsel/rng.hpp"
#include "vitsel/synthetic.hpp"
#include "vitsel/tensor.hpp"
#include "vitsel/tnsr.hpp"

namespace vitsel {

struct EncoderConfig {
  std::size_t image_size = 28;
  std::size_t patch_size = 7;
  std::size_t channels = 1;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = kNumClasses;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t patches() const { return grid() * grid(); }
  std::size_t tokens() const { return patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t hidden_dim() const { return embed_dim * mlp_ratio; }

  void validate() const {
    require(image_size > 0 && patch_size > 0 && channels > 0 && embed_dim > 0 && depth > 0 && heads > 0 &&
                mlp_ratio > 0,
            ErrorCode::kInvalidArgument, "encoder dimensions must all be positive");
    require(image_size % patch_size == 0, ErrorCode::kInvalidArgument,
            "image size " + std::to_string(image_size) + " is not divisible by patch size " + std::to_string(patch_size));
    require(embed_dim % heads == 0, ErrorCode::kInvalidArgument,
            "embed dim " + std::to_string(embed_dim) + " is not divisible by head count " + std::to_string(heads));
    require(num_classes == kNumClasses, ErrorCode::kInvalidArgument, "the encoder head has exactly 3 outputs");
  }
};

struct EncoderBlock {
  // Row-vector parameters (1 x n) broadcast over tokens; weights are (out, in).
  Eigen::MatrixXd ln1_gain, ln1_bias;
  Eigen::MatrixXd wq, bq, wk, bk, wv, bv, wo, bo;
  Eigen::MatrixXd ln2_gain, ln2_bias;
  Eigen::MatrixXd w1, b1, w2, b2;
};

struct EncoderState {
  EncoderConfig config;
  Eigen::MatrixXd patch_w;    // (E, patch_dim)
  Eigen::MatrixXd patch_b;    // (1, E)
  Eigen::MatrixXd cls_token;  // (1, E)
  Eigen::MatrixXd pos_embed;  // (P + 1, E)
  std::vector<EncoderBlock> blocks;
  Eigen::MatrixXd head_w;     // (3, E)
  Eigen::MatrixXd head_b;     // (1, 3)

  // Visits every parameter tensor with a stable name, in a fixed order.
  template <typename Self, typename Fn>
  static void visit(Self& s, Fn&& fn) {
    fn("patch_w", s.patch_w);
    fn("patch_b", s.patch_b);
    fn("cls_token", s.cls_token);
    fn("pos_embed", s.pos_embed);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      auto& b = s.blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      fn(p + "ln1_gain", b.ln1_gain);
      fn(p + "ln1_bias", b.ln1_bias);
      fn(p + "wq", b.wq);
      fn(p + "bq", b.bq);
      fn(p + "wk", b.wk);
      fn(p + "bk", b.bk);
      fn(p + "wv", b.wv);
      fn(p + "bv", b.bv);
      fn(p + "wo", b.wo);
      fn(p + "bo", b.bo);
      fn(p + "ln2_gain", b.ln2_gain);
      fn(p + "ln2_bias", b.ln2_bias);
      fn(p + "w1", b.w1);
      fn(p + "b1", b.b1);
      fn(p + "w2", b.w2);
      fn(p + "b2", b.b2);
    }
    fn("head_w", s.head_w);
    fn("head_b", s.head_b);
  }

  std::vector<Eigen::MatrixXd*> mutable_tensors() {
    std::vector<Eigen::MatrixXd*> out;
    visit(*this, [&](const std::string&, Eigen::MatrixXd& m) { out.push_back(&m); });
    return out;
  }

  std::vector<Eigen::MatrixXd> tensors() const {
    std::vector<Eigen::MatrixXd> out;
    visit(*this, [&](const std::string&, const Eigen::MatrixXd& m) { out.push_back(m); });
    return out;
  }
};

// Same shapes as `state`, every entry zero.
inline EncoderState zeros_like(const EncoderState& state) {
  EncoderState z = state;
  EncoderState::visit(z, [](const std::string&, Eigen::MatrixXd& m) { m.setZero(); });
  return z;
}

inline EncoderState init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto e = static_cast<Eigen::Index>(config.embed_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden_dim());
  auto normal = [&](Eigen::Index rows, Eigen::Index cols, double sd) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, sd);
    return m;
  };
  auto linear = [&](Eigen::Index out, Eigen::Index in) { return normal(out, in, 1.0 / std::sqrt(static_cast<double>(in))); };

  EncoderState s;
  s.config = config;
  s.patch_w = linear(e, static_cast<Eigen::Index>(config.patch_dim()));
  s.patch_b = Eigen::MatrixXd::Zero(1, e);
  s.cls_token = normal(1, e, 0.02);
  s.pos_embed = normal(static_cast<Eigen::Index>(config.tokens()), e, 0.02);
  for (std::size_t i = 0; i < config.depth; ++i) {
    EncoderBlock b;
    b.ln1_gain = Eigen::MatrixXd::Ones(1, e);
    b.ln1_bias = Eigen::MatrixXd::Zero(1, e);
    b.wq = linear(e, e);
    b.bq = Eigen::MatrixXd::Zero(1, e);
    b.wk = linear(e, e);
    b.bk = Eigen::MatrixXd::Zero(1, e);
    b.wv = linear(e, e);
    b.bv = Eigen::MatrixXd::Zero(1, e);
    b.wo = linear(e, e);
    b.bo = Eigen::MatrixXd::Zero(1, e);
    b.ln2_gain = Eigen::MatrixXd::Ones(1, e);
    b.ln2_bias = Eigen::MatrixXd::Zero(1, e);
    b.w1 = linear(h, e);
    b.b1 = Eigen::MatrixXd::Zero(1, h);
    b.w2 = linear(e, h);
    b.b2 = Eigen::MatrixXd::Zero(1, e);
    s.blocks.push_back(std::move(b));
  }
  s.head_w = linear(static_cast<Eigen::Index>(kNumClasses), e);
  s.head_b = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(kNumClasses));
  return s;
}

namespace detail {

inline constexpr double kLayerNormEps = 1e-6;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (std::numbers::sqrt2 / 2.0))); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * (std::numbers::sqrt2 / 2.0)));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

struct LayerNormCache {
  Eigen::MatrixXd normalized;  // xhat
  Eigen::VectorXd inv_std;     // per row
};

inline Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gain, const Eigen::MatrixXd& bias,
                                  LayerNormCache& cache) {
  const auto cols = static_cast<double>(x.cols());
  cache.normalized.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const Eigen::RowVectorXd centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / cols;
    cache.inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.normalized.row(r) = centered * cache.inv_std(r);
  }
  Eigen::MatrixXd y = cache.normalized.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

inline Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& gain,
                                           const LayerNormCache& cache, Eigen::MatrixXd& dgain, Eigen::MatrixXd& dbias) {
  dgain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Eigen::MatrixXd dxhat = dy.array().rowwise() * gain.row(0).array();
  Eigen::MatrixXd dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / static_cast<double>(dy.cols());
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

struct BlockCache {
  Eigen::MatrixXd input;
  LayerNormCache ln1;
  Eigen::MatrixXd u1, q, k, v;
  std::vector<Eigen::MatrixXd> attention;  // one (T, T) per head
  Eigen::MatrixXd mixed;                   // concatenated head outputs
  Eigen::MatrixXd after_attention;
  LayerNormCache ln2;
  Eigen::MatrixXd u2, hidden_pre, hidden;
};

}  // namespace detail

struct EncoderForwardCache {
  Eigen::MatrixXd patches;  // (P, patch_dim)
  std::vector<detail::BlockCache> blocks;
  Eigen::MatrixXd tokens;   // (P + 1, E) after the final block
  Eigen::RowVectorXd pooled;
};

struct EncoderOutput {
  Eigen::RowVectorXd class_token;  // extraction point (1)
  Eigen::MatrixXd image_tokens;    // extraction point (2), (P, E)
  Eigen::RowVectorXd logits;       // head(mean of image tokens)
};

// Patches in row-major grid order, each flattened in (dy, dx, channel) order.
inline Eigen::MatrixXd patchify(const EncoderConfig& config, const Image& image) {
  require(image.height == config.image_size && image.width == config.image_size && image.channels == config.channels,
          ErrorCode::kShapeMismatch,
          "image is " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
              std::to_string(image.channels) + ", encoder expects " + std::to_string(config.image_size) + "x" +
              std::to_string(config.image_size) + "x" + std::to_string(config.channels));
  require(image.pixels.size() == image.height * image.width * image.channels, ErrorCode::kShapeMismatch,
          "image pixel buffer has the wrong length");
  const std::size_t g = config.grid();
  const std::size_t p = config.patch_size;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(config.patches()), static_cast<Eigen::Index>(config.patch_dim()));
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      Eigen::Index col = 0;
      const auto row = static_cast<Eigen::Index>(gy * g + gx);
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t c = 0; c < config.channels; ++c) out(row, col++) = image.at(gy * p + dy, gx * p + dx, c);
    }
  return out;
}

inline EncoderOutput encoder_forward(const EncoderState& s, const Image& image, EncoderForwardCache* cache = nullptr) {
  const auto& cfg = s.config;
  EncoderForwardCache local;
  EncoderForwardCache& c = cache ? *cache : local;
  c.blocks.clear();
  c.patches = patchify(cfg, image);
  const auto t = static_cast<Eigen::Index>(cfg.tokens());
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Eigen::MatrixXd x(t, static_cast<Eigen::Index>(cfg.embed_dim));
  x.row(0) = s.cls_token.row(0);
  x.bottomRows(t - 1) = detail::affine(c.patches, s.patch_w, s.patch_b);
  x += s.pos_embed;

  for (const auto& b : s.blocks) {
    detail::BlockCache bc;
    bc.input = x;
    bc.u1 = detail::layer_norm(x, b.ln1_gain, b.ln1_bias, bc.ln1);
    bc.q = detail::affine(bc.u1, b.wq, b.bq);
    bc.k = detail::affine(bc.u1, b.wk, b.bk);
    bc.v = detail::affine(bc.u1, b.wv, b.bv);
    bc.mixed.resize(t, x.cols());
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
      Eigen::MatrixXd scores = bc.q.middleCols(off, dh) * bc.k.middleCols(off, dh).transpose() * scale;
      bc.attention.push_back(softmax_rows(scores));
      bc.mixed.middleCols(off, dh) = bc.attention.back() * bc.v.middleCols(off, dh);
    }
    bc.after_attention = x + detail::affine(bc.mixed, b.wo, b.bo);
    bc.u2 = detail::layer_norm(bc.after_attention, b.ln2_gain, b.ln2_bias, bc.ln2);
    bc.hidden_pre = detail::affine(bc.u2, b.w1, b.b1);
    bc.hidden = bc.hidden_pre.unaryExpr([](double v) { return detail::gelu(v); });
    x = bc.after_attention + detail::affine(bc.hidden, b.w2, b.b2);
    c.blocks.push_back(std::move(bc));
  }

  c.tokens = x;
  c.pooled = x.bottomRows(t - 1).colwise().mean();
  EncoderOutput out;
  out.class_token = x.row(0);
  out.image_tokens = x.bottomRows(t - 1);
  out.logits = c.pooled * s.head_w.transpose() + s.head_b.row(0);
  return out;
}

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
inline void encoder_backward(const EncoderState& s, const EncoderForwardCache& c, const Eigen::RowVectorXd& dlogits,
                             EncoderState& grads) {
  const auto& cfg = s.config;
  const auto t = static_cast<Eigen::Index>(cfg.tokens());
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  grads.head_w += dlogits.transpose() * c.pooled;
  grads.head_b += dlogits;
  const Eigen::RowVectorXd dpooled = dlogits * s.head_w;
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(t, static_cast<Eigen::Index>(cfg.embed_dim));
  dx.bottomRows(t - 1).rowwise() = dpooled / static_cast<double>(t - 1);

  for (std::size_t i = s.blocks.size(); i-- > 0;) {
    const auto& b = s.blocks[i];
    const auto& bc = c.blocks[i];
    auto& g = grads.blocks[i];

    // Feed-forward residual branch.
    g.b2 += dx.colwise().sum();
    g.w2 += dx.transpose() * bc.hidden;
    Eigen::MatrixXd dhidden = dx * b.w2;
    dhidden.array() *= bc.hidden_pre.unaryExpr([](double v) { return detail::gelu_grad(v); }).array();
    g.b1 += dhidden.colwise().sum();
    g.w1 += dhidden.transpose() * bc.u2;
    Eigen::MatrixXd dmid = dx + detail::layer_norm_backward(dhidden * b.w1, b.ln2_gain, bc.ln2, g.ln2_gain, g.ln2_bias);

    // Attention residual branch.
    g.bo += dmid.colwise().sum();
    g.wo += dmid.transpose() * bc.mixed;
    const Eigen::MatrixXd dmixed = dmid * b.wo;
    Eigen::MatrixXd dq(t, dmid.cols());
    Eigen::MatrixXd dk(t, dmid.cols());
    Eigen::MatrixXd dv(t, dmid.cols());
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
      const Eigen::MatrixXd& a = bc.attention[h];
      const Eigen::MatrixXd dout = dmixed.middleCols(off, dh);
      const Eigen::MatrixXd da = dout * bc.v.middleCols(off, dh).transpose();
      dv.middleCols(off, dh) = a.transpose() * dout;
      const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
      const Eigen::MatrixXd dscores = (a.array() * (da.colwise() - row_dot).array()).matrix() * scale;
      dq.middleCols(off, dh) = dscores * bc.k.middleCols(off, dh);
      dk.middleCols(off, dh) = dscores.transpose() * bc.q.middleCols(off, dh);
    }
    g.bq += dq.colwise().sum();
    g.wq += dq.transpose() * bc.u1;
    g.bk += dk.colwise().sum();
    g.wk += dk.transpose() * bc.u1;
    g.bv += dv.colwise().sum();
    g.wv += dv.transpose() * bc.u1;
    const Eigen::MatrixXd du1 = dq * b.wq + dk * b.wk + dv * b.wv;
    dx = dmid + detail::layer_norm_backward(du1, b.ln1_gain, bc.ln1, g.ln1_gain, g.ln1_bias);
  }

  grads.pos_embed += dx;
  grads.cls_token += dx.row(0);
  const Eigen::MatrixXd dpatch = dx.bottomRows(t - 1);
  grads.patch_b += dpatch.colwise().sum();
  grads.patch_w += dpatch.transpose() * c.patches;
}

// Mean weighted cross-entropy over `rows` of `data` and its gradient.
inline double encoder_loss_and_gradient(const EncoderState& s, const ImageSet& data, std::span<const std::size_t> rows,
                                        const std::optional<ClassWeights>& weights, EncoderState& grads) {
  grads = zeros_like(s);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(rows.size());
  EncoderForwardCache cache;
  for (std::size_t r : rows) {
    const EncoderOutput out = encoder_forward(s, data.images[r], &cache);
    const int label = data.labels[r];
    loss += weighted_cross_entropy(std::span<const double>(out.logits.data(), static_cast<std::size_t>(out.logits.size())),
                                   label, weights) * inv;
    Eigen::RowVectorXd d = softmax_rows(out.logits);
    d(label) -= 1.0;
    d *= class_weight(weights, label) * inv;
    encoder_backward(s, cache, d, grads);
  }
  return loss;
}

inline double encoder_loss(const EncoderState& s, const ImageSet& data, const std::optional<ClassWeights>& weights) {
  double loss = 0.0;
  for (std::size_t r = 0; r < data.images.size(); ++r) {
    const EncoderOutput out = encoder_forward(s, data.images[r]);
    loss += weighted_cross_entropy(std::span<const double>(out.logits.data(), static_cast<std::size_t>(out.logits.size())),
                                   data.labels[r], weights);
  }
  return loss / static_cast<double>(data.images.size());
}

struct FineTuneConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-5;
  double weight_decay = 0.05;
  int plateau_patience = 2;
  double plateau_factor = 0.5;
  std::uint64_t seed = 0;
};

struct FineTuneResult {
  EncoderState best_state;
  std::vector<double> loss_history;           // selection metric per epoch
  std::vector<double> learning_rate_history;  // rate used during each epoch
  std::size_t best_epoch = 0;
};

// AdamW + plateau scheduling. The per-epoch metric is the mean training batch
// loss, or the validation loss when a validation set is given; the returned
// state is the end-of-epoch snapshot with the lowest metric.
inline FineTuneResult fine_tune(const EncoderState& initial, const ImageSet& data, const FineTuneConfig& config,
                                const std::optional<ClassWeights>& weights = std::nullopt,
                                const ImageSet* validation = nullptr) {
  FineTuneResult result;
  result.best_state = initial;
  if (config.epochs == 0) return result;
  require(!data.images.empty(), ErrorCode::kInvalidArgument, "fine-tuning needs images");
  require(data.images.size() == data.labels.size(), ErrorCode::kShapeMismatch, "image and label counts differ");
  require(config.batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");

  EncoderState state = initial;
  Adam optimizer(AdamConfig{.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  ReduceLrOnPlateau scheduler(config.plateau_patience, config.plateau_factor);
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best = std::numeric_limits<double>::infinity();
  EncoderState grads;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = encoder_loss_and_gradient(state, data, batch, weights, grads);
      require(std::isfinite(loss), ErrorCode::kNumericalFailure,
              "non-finite fine-tuning loss at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());
      optimizer.step(state.mutable_tensors(), grads.tensors());
    }
    double metric = epoch_loss / static_cast<double>(order.size());
    if (validation) metric = encoder_loss(state, *validation, weights);
    require(std::isfinite(metric), ErrorCode::kNumericalFailure,
            "non-finite fine-tuning loss at epoch " + std::to_string(epoch));
    result.loss_history.push_back(metric);
    result.learning_rate_history.push_back(optimizer.learning_rate());
    if (metric < best) {
      best = metric;
      result.best_epoch = epoch;
      result.best_state = state;
    }
    optimizer.set_learning_rate(scheduler.observe(metric, optimizer.learning_rate()));
  }
  return result;
}

// Class token -> (N, 1, E); image tokens -> (N, P, E); all tokens ->
// (N, P + 1, E) with the class token at index 0.
inline TokenTensor extract_tokens(const EncoderState& s, const ImageSet& data, ExtractionMode mode) {
  require(!data.images.empty(), ErrorCode::kInvalidArgument, "token extraction needs at least one image");
  const std::size_t p = s.config.patches();
  const std::size_t e = s.config.embed_dim;
  const std::size_t l = mode == ExtractionMode::kClassToken ? 1 : mode == ExtractionMode::kImageTokens ? p : p + 1;
  std::vector<float> out;
  out.reserve(data.images.size() * l * e);
  for (const auto& image : data.images) {
    EncoderForwardCache cache;
    encoder_forward(s, image, &cache);
    const Eigen::Index first = mode == ExtractionMode::kImageTokens ? 1 : 0;
    const Eigen::Index last = mode == ExtractionMode::kClassToken ? 1 : static_cast<Eigen::Index>(p + 1);
    for (Eigen::Index row = first; row < last; ++row)
      for (Eigen::Index col = 0; col < static_cast<Eigen::Index>(e); ++col)
        out.push_back(static_cast<float>(cache.tokens(row, col)));
  }
  return TokenTensor({data.images.size(), l, e}, mode, std::move(out));
}

inline std::vector<NamedMatrix> encoder_to_bundle(const EncoderState& s) {
  std::vector<NamedMatrix> items;
  const auto& c = s.config;
  Eigen::MatrixXd geometry(1, 7);
  geometry << static_cast<double>(c.image_size), static_cast<double>(c.patch_size), static_cast<double>(c.channels),
      static_cast<double>(c.embed_dim), static_cast<double>(c.depth), static_cast<double>(c.heads),
      static_cast<double>(c.mlp_ratio);
  items.push_back({"config", geometry});
  EncoderState::visit(s, [&](const std::string& name, const Eigen::MatrixXd& m) { items.push_back({name, m}); });
  return items;
}

inline EncoderState encoder_from_bundle(const std::vector<NamedMatrix>& items) {
  require(!items.empty() && items[0].name == "config" && items[0].value.size() == 7, ErrorCode::kShapeMismatch,
          "encoder bundle must start with a 7-value config entry");
  const auto& g = items[0].value;
  EncoderConfig cfg;
  cfg.image_size = static_cast<std::size_t>(g(0, 0));
  cfg.patch_size = static_cast<std::size_t>(g(0, 1));
  cfg.channels = static_cast<std::size_t>(g(0, 2));
  cfg.embed_dim = static_cast<std::size_t>(g(0, 3));
  cfg.depth = static_cast<std::size_t>(g(0, 4));
  cfg.heads = static_cast<std::size_t>(g(0, 5));
  cfg.mlp_ratio = static_cast<std::size_t>(g(0, 6));
  EncoderState s = init_encoder(cfg, 0);
  std::size_t next = 1;
  EncoderState::visit(s, [&](const std::string& name, Eigen::MatrixXd& m) {
    require(next < items.size() && items[next].name == name, ErrorCode::kShapeMismatch,
            "encoder bundle is missing '" + name + "'");
    require(items[next].value.rows() == m.rows() && items[next].value.cols() == m.cols(), ErrorCode::kShapeMismatch,
            "encoder bundle entry '" + name + "' has the wrong shape");
    m = items[next++].value;
  });
  return s;
}

}  // namespace vitsel
