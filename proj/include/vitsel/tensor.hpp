#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vitsel/error.hpp"

namespace vitsel {

// Which encoder outputs a token tensor holds. Codes match the TNSR mode byte.
enum class ExtractionMode : std::uint8_t {
  kClassToken = 0,
  kImageTokens = 1,
  kAllTokens = 2,
};

inline std::string_view to_string(ExtractionMode mode) {
  switch (mode) {
    case ExtractionMode::kClassToken: return "class";
    case ExtractionMode::kImageTokens: return "image";
    case ExtractionMode::kAllTokens: return "all";
  }
  return "unknown";
}

inline ExtractionMode parse_extraction_mode(std::string_view text) {
  if (text == "class") return ExtractionMode::kClassToken;
  if (text == "image") return ExtractionMode::kImageTokens;
  if (text == "all") return ExtractionMode::kAllTokens;
  fail(ErrorCode::kInvalidArgument,
       "unknown extraction mode '" + std::string(text) + "' (expected class, image or all)");
}

struct TensorShape {
  std::size_t n = 0;  // samples
  std::size_t l = 0;  // tokens per sample
  std::size_t e = 0;  // embedding width

  std::size_t size() const { return n * l * e; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// Rank-3 (N, L, E) feature array, row-major in (n, l, e) order, stored as f32
// because that is the on-disk scalar.
class TokenTensor {
 public:
  TokenTensor(TensorShape shape, ExtractionMode mode, std::vector<float> data)
      : shape_(shape), mode_(mode), data_(std::move(data)) {
    validate();
  }

  TokenTensor(TensorShape shape, ExtractionMode mode)
      : TokenTensor(shape, mode, std::vector<float>(shape.size(), 0.0f)) {}

  const TensorShape& shape() const { return shape_; }
  ExtractionMode mode() const { return mode_; }
  std::span<const float> data() const { return data_; }

  float at(std::size_t n, std::size_t l, std::size_t e) const {
    return data_[(n * shape_.l + l) * shape_.e + e];
  }

  // Mutation goes through set() so the finiteness invariant holds.
  void set(std::size_t n, std::size_t l, std::size_t e, float value) {
    require(std::isfinite(value), ErrorCode::kNonFinite, "token value must be finite");
    data_[(n * shape_.l + l) * shape_.e + e] = value;
  }

  std::span<const float> token(std::size_t n, std::size_t l) const {
    return std::span<const float>(data_).subspan((n * shape_.l + l) * shape_.e, shape_.e);
  }

  // Copies tokens [begin, end) of every sample into a new tensor.
  TokenTensor slice_tokens(std::size_t begin, std::size_t end, ExtractionMode mode) const {
    require(begin < end && end <= shape_.l, ErrorCode::kInvalidArgument,
            "token slice out of range");
    TensorShape out_shape{shape_.n, end - begin, shape_.e};
    std::vector<float> out;
    out.reserve(out_shape.size());
    for (std::size_t n = 0; n < shape_.n; ++n) {
      const auto first = data_.begin() + static_cast<std::ptrdiff_t>((n * shape_.l + begin) * shape_.e);
      out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(out_shape.l * shape_.e));
    }
    return TokenTensor(out_shape, mode, std::move(out));
  }

  friend bool operator==(const TokenTensor&, const TokenTensor&) = default;

 private:
  void validate() const {
    require(shape_.n >= 1 && shape_.l >= 1 && shape_.e >= 1, ErrorCode::kShapeMismatch,
            "token tensor dimensions must all be >= 1");
    require(data_.size() == shape_.size(), ErrorCode::kShapeMismatch,
            "token tensor payload length " + std::to_string(data_.size()) + " != N*L*E = " +
                std::to_string(shape_.size()));
    require(mode_ != ExtractionMode::kClassToken || shape_.l == 1, ErrorCode::kShapeMismatch,
            "class-token tensors must have L = 1");
    for (std::size_t i = 0; i < data_.size(); ++i) {
      require(std::isfinite(data_[i]), ErrorCode::kNonFinite,
              "non-finite token value at flat index " + std::to_string(i));
    }
  }

  TensorShape shape_;
  ExtractionMode mode_;
  std::vector<float> data_;
};

// Concatenates two tensors with equal N and E along the token axis.
inline TokenTensor concat_tokens(const TokenTensor& a, const TokenTensor& b, ExtractionMode mode) {
  require(a.shape().n == b.shape().n && a.shape().e == b.shape().e, ErrorCode::kShapeMismatch,
          "concat_tokens needs matching N and E");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  TensorShape out_shape{sa.n, sa.l + sb.l, sa.e};
  std::vector<float> out;
  out.reserve(out_shape.size());
  for (std::size_t n = 0; n < sa.n; ++n) {
    auto ra = a.data().subspan(n * sa.l * sa.e, sa.l * sa.e);
    auto rb = b.data().subspan(n * sb.l * sb.e, sb.l * sb.e);
    out.insert(out.end(), ra.begin(), ra.end());
    out.insert(out.end(), rb.begin(), rb.end());
  }
  return TokenTensor(out_shape, mode, std::move(out));
}

// (N, E) features after token pooling. Computation is f64 throughout.
class PooledFeatures {
 public:
  PooledFeatures() = default;

  explicit PooledFeatures(Eigen::MatrixXd values) : values_(std::move(values)) {
    require(values_.cols() >= 1, ErrorCode::kShapeMismatch, "pooled features need E >= 1");
    require(values_.allFinite(), ErrorCode::kNonFinite, "pooled features must be finite");
  }

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
  const Eigen::MatrixXd& matrix() const { return values_; }

  // Stores pooled features as an (N, 1, E) tensor for persistence.
  TokenTensor to_tensor() const {
    std::vector<float> data(rows() * cols());
    for (std::size_t n = 0; n < rows(); ++n)
      for (std::size_t e = 0; e < cols(); ++e)
        data[n * cols() + e] = static_cast<float>(values_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e)));
    return TokenTensor({rows(), 1, cols()}, ExtractionMode::kClassToken, std::move(data));
  }

  friend bool operator==(const PooledFeatures& a, const PooledFeatures& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Eigen::MatrixXd values_;
};

}  // namespace vitsel
