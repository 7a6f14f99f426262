#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vitsel/error.hpp"

namespace vitsel {

inline constexpr std::size_t kNumClasses = 3;

// Canonical class order everywhere: Rubbish=0, Healthy=1, Unhealthy=2.
enum class ClassId : std::uint8_t { kRubbish = 0, kHealthy = 1, kUnhealthy = 2 };

// Four-way category alphabet of raw annotations. "Both cells" exists only in
// training annotations and is folded into Unhealthy on ingestion.
enum class RawCategory : std::uint8_t { kRubbish = 0, kHealthy = 1, kUnhealthy = 2, kBothCells = 3 };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"rubbish", "healthy",
                                                                          "unhealthy"};

class LabelVector {
 public:
  LabelVector() = default;

  explicit LabelVector(std::vector<int> values) : values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      require(values_[i] >= 0 && values_[i] < static_cast<int>(kNumClasses),
              ErrorCode::kInvalidArgument,
              "label " + std::to_string(values_[i]) + " at index " + std::to_string(i) +
                  " is outside {0,1,2}");
    }
  }

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  int operator[](std::size_t i) const { return values_[i]; }
  std::span<const int> values() const { return values_; }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  std::array<std::size_t, kNumClasses> counts() const {
    std::array<std::size_t, kNumClasses> c{};
    for (int v : values_) ++c[static_cast<std::size_t>(v)];
    return c;
  }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<int> values_;
};

// Maps raw integer codes (0..3) to the three training classes.
inline LabelVector merge_labels(std::span<const int> raw) {
  std::vector<int> merged(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    switch (raw[i]) {
      case static_cast<int>(RawCategory::kRubbish): merged[i] = 0; break;
      case static_cast<int>(RawCategory::kHealthy): merged[i] = 1; break;
      case static_cast<int>(RawCategory::kUnhealthy):
      case static_cast<int>(RawCategory::kBothCells): merged[i] = 2; break;
      default:
        fail(ErrorCode::kInvalidArgument, "unknown category code " + std::to_string(raw[i]) +
                                              " at index " + std::to_string(i));
    }
  }
  return LabelVector(std::move(merged));
}

inline LabelVector merge_labels(std::span<const RawCategory> raw) {
  std::vector<int> codes(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) codes[i] = static_cast<int>(raw[i]);
  return merge_labels(std::span<const int>(codes));
}

inline RawCategory parse_raw_category(std::string_view name) {
  if (name == "rubbish") return RawCategory::kRubbish;
  if (name == "healthy") return RawCategory::kHealthy;
  if (name == "unhealthy") return RawCategory::kUnhealthy;
  if (name == "both") return RawCategory::kBothCells;
  fail(ErrorCode::kInvalidArgument, "unknown label name '" + std::string(name) + "'");
}

// Label CSV: header `index,label`, one row per sample, rows in index order.
inline LabelVector read_labels_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kTruncated, "label CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "index,label", ErrorCode::kBadMagic, "label CSV header must be 'index,label'");
  std::vector<int> raw;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::kInvalidArgument,
            "label CSV row " + std::to_string(row) + " has no comma");
    std::size_t index = 0;
    try {
      index = std::stoul(line.substr(0, comma));
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "label CSV row " + std::to_string(row) + " has a bad index");
    }
    require(index == row, ErrorCode::kInvalidArgument,
            "label CSV rows must be in index order (row " + std::to_string(row) + ")");
    raw.push_back(static_cast<int>(parse_raw_category(std::string_view(line).substr(comma + 1))));
    ++row;
  }
  return merge_labels(std::span<const int>(raw));
}

inline LabelVector read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open label file " + path);
  return read_labels_csv(in);
}

inline void write_labels_csv(std::ostream& out, const LabelVector& labels) {
  out << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << i << ',' << kClassNames[static_cast<std::size_t>(labels[i])] << '\n';
}

}  // namespace vitsel
