#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "vitsel/dataset.hpp"
#include "vitsel/error.hpp"
#include "vitsel/labels.hpp"
#include "vitsel/rng.hpp"
#include "vitsel/tensor.hpp"

namespace vitsel {

using ClassCounts = std::array<std::size_t, kNumClasses>;

// A single-channel-or-more image in HWC order.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

struct ImageSet {
  std::vector<Image> images;
  LabelVector labels;
};

namespace detail {

// Labels for the given counts in a seeded random order.
inline std::vector<int> shuffled_labels(const ClassCounts& counts, Rng& rng) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < kNumClasses; ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c));
  rng.shuffle(std::span<int>(labels));
  return labels;
}

// Class mean on informative dimension j: adjacent classes sit 3 sigma apart,
// with the direction alternating across dimensions.
inline double informative_mean(int label, std::size_t j) {
  const double sign = (j % 2 == 0) ? 1.0 : -1.0;
  return 3.0 * static_cast<double>(label - 1) * sign;
}

}  // namespace detail

// Gaussian class clusters: dimensions [0, informative) carry class-dependent
// means (unit variance), the rest are N(0, 1) noise shared by every class.
inline Dataset generate_synthetic(const ClassCounts& counts, std::size_t width, std::size_t informative,
                                  std::uint64_t seed) {
  require(width >= 1, ErrorCode::kInvalidArgument, "feature width must be >= 1");
  require(informative <= width, ErrorCode::kInvalidArgument,
          "informative count " + std::to_string(informative) + " exceeds width " + std::to_string(width));
  Rng rng(seed);
  const std::vector<int> labels = detail::shuffled_labels(counts, rng);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(width));
  for (std::size_t n = 0; n < labels.size(); ++n) {
    for (std::size_t j = 0; j < width; ++j) {
      const double mean = j < informative ? detail::informative_mean(labels[n], j) : 0.0;
      x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) = rng.normal(mean, 1.0);
    }
  }
  return Dataset(PooledFeatures(std::move(x)), LabelVector(labels));
}

// XOR-style data in dimensions 0 and 1 (sd 0.5 around each centre):
// Rubbish at (+2,+2) or (-2,-2), Healthy at (+2,-2) or (-2,+2), Unhealthy at
// the origin. Each class is symmetric under x -> -x, so every linear logit has
// the same mean in all three classes. Remaining dimensions are N(0, 1) noise.
inline Dataset generate_xor(const ClassCounts& counts, std::size_t width, std::uint64_t seed) {
  require(width >= 2, ErrorCode::kInvalidArgument, "XOR data needs width >= 2");
  Rng rng(seed);
  const std::vector<int> labels = detail::shuffled_labels(counts, rng);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(width));
  std::array<std::size_t, kNumClasses> seen{};
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto c = static_cast<std::size_t>(labels[n]);
    const double flip = (seen[c]++ % 2 == 0) ? 1.0 : -1.0;
    double c0 = 0.0;
    double c1 = 0.0;
    if (c == 0) {
      c0 = c1 = 2.0 * flip;
    } else if (c == 1) {
      c0 = 2.0 * flip;
      c1 = -c0;
    }
    const auto row = static_cast<Eigen::Index>(n);
    x(row, 0) = rng.normal(c0, 0.5);
    x(row, 1) = rng.normal(c1, 0.5);
    for (std::size_t j = 2; j < width; ++j) x(row, static_cast<Eigen::Index>(j)) = rng.normal();
  }
  return Dataset(PooledFeatures(std::move(x)), LabelVector(labels));
}

// All-tokens tensor (N, image_tokens + 1, E) built around the rows of `base`:
// every token is the sample's row plus N(0, token_noise^2) jitter, the class
// token at index 0. Class and image views are slices.
inline TokenDataset tokens_around(const Dataset& base, std::size_t image_tokens, double token_noise,
                                  std::uint64_t seed) {
  require(image_tokens >= 1, ErrorCode::kInvalidArgument, "need at least one image token");
  require(base.size() >= 1, ErrorCode::kInvalidArgument, "token data needs at least one sample");
  require(token_noise >= 0.0, ErrorCode::kInvalidArgument, "token noise must be >= 0");
  Rng rng(seed);
  const std::size_t width = base.width();
  const std::size_t tokens = image_tokens + 1;
  std::vector<float> data(base.size() * tokens * width);
  for (std::size_t n = 0; n < base.size(); ++n)
    for (std::size_t l = 0; l < tokens; ++l)
      for (std::size_t e = 0; e < width; ++e)
        data[(n * tokens + l) * width + e] = static_cast<float>(
            base.features.matrix()(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e)) +
            rng.normal(0.0, token_noise));
  return TokenDataset(TokenTensor({base.size(), tokens, width}, ExtractionMode::kAllTokens, std::move(data)),
                      base.labels);
}

inline TokenDataset generate_synthetic_tokens(const ClassCounts& counts, std::size_t width,
                                              std::size_t informative, std::size_t image_tokens,
                                              double token_noise, std::uint64_t seed) {
  return tokens_around(generate_synthetic(counts, width, informative, seed), image_tokens, token_noise,
                       Rng::derive(seed, 1));
}

// Toy images: each class has its own solid intensity level (0.2, 0.5, 0.8 in
// every channel) with per-pixel N(0, noise^2) jitter.
inline ImageSet generate_toy_images(const ClassCounts& counts, std::size_t image_size, std::size_t channels,
                                    double noise, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<int> labels = detail::shuffled_labels(counts, rng);
  constexpr std::array<double, kNumClasses> kLevel = {0.2, 0.5, 0.8};
  ImageSet set;
  set.images.reserve(labels.size());
  for (int label : labels) {
    Image img{image_size, image_size, channels, std::vector<double>(image_size * image_size * channels)};
    for (double& p : img.pixels) p = kLevel[static_cast<std::size_t>(label)] + rng.normal(0.0, noise);
    set.images.push_back(std::move(img));
  }
  set.labels = LabelVector(labels);
  return set;
}

}  // namespace vitsel
