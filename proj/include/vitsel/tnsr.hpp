#pragma once

// TNSR container, all integers little-endian:
//
//   offset  size  field
//   0       4     magic "TNSR"
//   4       4     version (u32) = 1
//   8       1     mode (0 = class, 1 = image, 2 = all)
//   9       3     reserved, zero
//   12      8     N (u64)
//   20      8     L (u64)
//   28      8     E (u64)
//   36      4*NLE payload, f32, index order (n, l, e)

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vitsel/error.hpp"
#include "vitsel/tensor.hpp"

namespace vitsel {

inline constexpr std::array<char, 4> kTnsrMagic = {'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTnsrVersion = 1;
inline constexpr std::size_t kTnsrHeaderBytes = 36;

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(value >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* bytes) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return value;
}

}  // namespace detail

// Returns the number of bytes written (header + payload).
inline std::size_t write_tensor(const TokenTensor& t, std::ostream& out) {
  std::vector<unsigned char> bytes;
  bytes.reserve(kTnsrHeaderBytes + 4 * t.data().size());
  bytes.insert(bytes.end(), kTnsrMagic.begin(), kTnsrMagic.end());
  detail::put_le<std::uint32_t>(bytes, kTnsrVersion);
  bytes.push_back(static_cast<unsigned char>(t.mode()));
  bytes.insert(bytes.end(), 3, 0);
  detail::put_le<std::uint64_t>(bytes, t.shape().n);
  detail::put_le<std::uint64_t>(bytes, t.shape().l);
  detail::put_le<std::uint64_t>(bytes, t.shape().e);
  for (float v : t.data()) detail::put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo,
          "failed writing TNSR record of " + std::to_string(bytes.size()) + " bytes");
  return bytes.size();
}

inline TokenTensor read_tensor(std::istream& in) {
  std::array<unsigned char, kTnsrHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got >= 4) {
    require(std::memcmp(header.data(), kTnsrMagic.data(), 4) == 0, ErrorCode::kBadMagic,
            "stream does not start with TNSR magic");
  }
  require(got == header.size(), ErrorCode::kTruncated,
          "TNSR header truncated (" + std::to_string(got) + " of 36 bytes)");
  const auto version = detail::get_le<std::uint32_t>(header.data() + 4);
  require(version == kTnsrVersion, ErrorCode::kUnsupportedVersion,
          "TNSR version " + std::to_string(version) + " is not supported");
  const unsigned char mode_byte = header[8];
  require(mode_byte <= 2, ErrorCode::kCorruptHeader, "TNSR mode byte " + std::to_string(mode_byte) + " is invalid");
  require(header[9] == 0 && header[10] == 0 && header[11] == 0, ErrorCode::kCorruptHeader,
          "TNSR reserved bytes must be zero");
  const TensorShape shape{detail::get_le<std::uint64_t>(header.data() + 12),
                          detail::get_le<std::uint64_t>(header.data() + 20),
                          detail::get_le<std::uint64_t>(header.data() + 28)};
  require(shape.n >= 1 && shape.l >= 1 && shape.e >= 1, ErrorCode::kCorruptHeader,
          "TNSR dimensions must all be >= 1");
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max() / 4;
  require(shape.n <= kMax / shape.l && shape.n * shape.l <= kMax / shape.e, ErrorCode::kCorruptHeader,
          "TNSR dimensions overflow");

  // Read in bounded chunks so a corrupt N*L*E cannot force a huge allocation
  // before truncation is detected.
  const std::uint64_t count = shape.size();
  std::vector<float> data;
  std::vector<unsigned char> chunk;
  constexpr std::uint64_t kChunkValues = 1u << 18;
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t take = std::min(kChunkValues, count - done);
    chunk.resize(static_cast<std::size_t>(take * 4));
    in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(chunk.size()));
    require(static_cast<std::uint64_t>(in.gcount()) == take * 4, ErrorCode::kTruncated,
            "TNSR payload truncated: expected " + std::to_string(count * 4) + " bytes, got " +
                std::to_string(done * 4 + static_cast<std::uint64_t>(in.gcount())));
    for (std::uint64_t i = 0; i < take; ++i) {
      const float v = std::bit_cast<float>(detail::get_le<std::uint32_t>(chunk.data() + 4 * i));
      require(std::isfinite(v), ErrorCode::kNonFinite,
              "TNSR payload value at flat index " + std::to_string(done + i) + " is not finite");
      data.push_back(v);
    }
    done += take;
  }
  return TokenTensor(shape, static_cast<ExtractionMode>(mode_byte), std::move(data));
}

// Writes to a sibling temporary file and renames it into place, so a failed
// run never leaves a partial artifact at `path`.
template <typename WriteFn>
void write_file_atomic(const std::filesystem::path& path, WriteFn&& write, bool binary = false) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    try {
      write(out);
      out.flush();
      require(static_cast<bool>(out), ErrorCode::kIo, "write to " + tmp.string() + " failed");
    } catch (...) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
  }
  std::filesystem::rename(tmp, path);
}

inline void save_tensor(const std::filesystem::path& path, const TokenTensor& t) {
  write_file_atomic(path, [&](std::ostream& out) { write_tensor(t, out); }, true);
}

inline TokenTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open tensor file " + path.string());
  return read_tensor(in);
}

inline PooledFeatures tensor_to_pooled_rows(const TokenTensor& t) {
  require(t.shape().l == 1, ErrorCode::kShapeMismatch,
          "expected an (N, 1, E) tensor of pooled features; pool the tokens first");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t.shape().n), static_cast<Eigen::Index>(t.shape().e));
  for (std::size_t n = 0; n < t.shape().n; ++n)
    for (std::size_t e = 0; e < t.shape().e; ++e)
      x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e)) = t.at(n, 0, e);
  return PooledFeatures(std::move(x));
}

// ---------------------------------------------------------------------------
// Named parameter bundles. A bundle file is a sequence of TNSR records, one
// per matrix stored as (1, rows, cols) with the image-token mode byte; the
// sidecar `<path>.manifest` lists `name rows cols` per line in file order.

struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd value;
};

inline void save_bundle(const std::filesystem::path& path, const std::vector<NamedMatrix>& items) {
  write_file_atomic(
      path,
      [&](std::ostream& out) {
        for (const auto& item : items) {
          const auto rows = static_cast<std::size_t>(item.value.rows());
          const auto cols = static_cast<std::size_t>(item.value.cols());
          std::vector<float> data(rows * cols);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              data[r * cols + c] = static_cast<float>(item.value(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
          write_tensor(TokenTensor({1, rows, cols}, ExtractionMode::kImageTokens, std::move(data)), out);
        }
      },
      true);
  auto manifest = path;
  manifest += ".manifest";
  write_file_atomic(manifest, [&](std::ostream& out) {
    for (const auto& item : items) out << item.name << ' ' << item.value.rows() << ' ' << item.value.cols() << '\n';
  });
}

inline std::vector<NamedMatrix> load_bundle(const std::filesystem::path& path) {
  auto manifest_path = path;
  manifest_path += ".manifest";
  std::ifstream manifest(manifest_path);
  require(static_cast<bool>(manifest), ErrorCode::kIo, "cannot open manifest " + manifest_path.string());
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open bundle " + path.string());
  std::vector<NamedMatrix> items;
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  while (manifest >> name >> rows >> cols) {
    const TokenTensor t = read_tensor(in);
    require(t.shape() == TensorShape{1, rows, cols}, ErrorCode::kShapeMismatch,
            "bundle entry '" + name + "' does not match its manifest shape");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(0, r, c);
    items.push_back({name, std::move(m)});
  }
  return items;
}

}  // namespace vitsel
