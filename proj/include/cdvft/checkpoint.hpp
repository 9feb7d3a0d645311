#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cdvft/chain.hpp"
#include "cdvft/config.hpp"
#include "cdvft/error.hpp"
#include "cdvft/types.hpp"

// Binary formats, all little-endian.
//
// Checkpoint:
//   "CDVF" | u32 version | u32 method | u32 d_in | u32 d_out | u32 p | u32 m |
//   u32 seed | f64 alpha | f64 x parameter_count (a_1, c_1 blocks row-major, a_2, ...)
//
// Dense matrix:
//   u32 rows | u32 cols | f64 x rows*cols, row-major

namespace cdvft {

inline constexpr std::array<char, 4> kCheckpointMagic{'C', 'D', 'V', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 4 + 7 * 4 + 8;

using Bytes = std::vector<std::uint8_t>;

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(Bytes& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return std::bit_cast<double>(bits);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail(ErrorKind::kPayloadLength, "unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t narrow_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) fail(ErrorKind::kConfig, std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace detail

inline Bytes encode_checkpoint(const FactorChain& ch) {
  const ChainShape& s = ch.shape();
  Bytes out;
  out.reserve(kCheckpointHeaderBytes + 8 * ch.parameter_count());
  for (char c : kCheckpointMagic) out.push_back(static_cast<std::uint8_t>(c));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(Method::kCdvft));
  detail::put_u32(out, detail::narrow_u32(s.d_in, "d_in"));
  detail::put_u32(out, detail::narrow_u32(s.d_out, "d_out"));
  detail::put_u32(out, detail::narrow_u32(s.p, "p"));
  detail::put_u32(out, detail::narrow_u32(s.m, "m"));
  detail::put_u32(out, ch.seed());
  detail::put_f64(out, ch.alpha());
  for (std::span<const double> block : ch.parameters()) {
    for (double v : block) detail::put_f64(out, v);
  }
  return out;
}

inline FactorChain decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    detail::fail(ErrorKind::kBadMagic, "not a checkpoint (magic bytes mismatch)");
  }
  detail::Reader r(bytes.subspan(kCheckpointMagic.size()));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    detail::fail(ErrorKind::kUnsupportedVersion, "checkpoint version " + std::to_string(version) +
                                                     " is not supported (expected " +
                                                     std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t method = r.u32();
  if (method != static_cast<std::uint32_t>(Method::kCdvft)) {
    detail::fail(ErrorKind::kConfig, "checkpoint method tag " + std::to_string(method) + " is not cdvft");
  }
  ChainShape shape;
  shape.d_in = r.u32();
  shape.d_out = r.u32();
  shape.p = r.u32();
  shape.m = r.u32();
  const std::uint32_t seed = r.u32();
  const double alpha = r.f64();
  shape.validate();
  if (!std::isfinite(alpha)) detail::fail(ErrorKind::kNonFiniteParameter, "alpha is not finite");

  const std::size_t expected = shape.parameter_count();
  if (r.remaining() != 8 * expected) {
    detail::fail(ErrorKind::kPayloadLength, "payload holds " + std::to_string(r.remaining()) +
                                                " bytes, header implies " + std::to_string(8 * expected));
  }
  std::vector<RealVector> params;
  std::size_t index = 0;
  for (std::size_t size : shape.parameter_sizes()) {
    RealVector v(size);
    for (double& e : v) {
      e = r.f64();
      if (!std::isfinite(e)) {
        detail::fail(ErrorKind::kNonFiniteParameter, "parameter " + std::to_string(index) + " is not finite");
      }
      ++index;
    }
    params.push_back(std::move(v));
  }
  return FactorChain(shape, alpha, std::move(params), seed);
}

inline void save_checkpoint(const FactorChain& ch, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(ch));
}

inline FactorChain load_checkpoint(const std::filesystem::path& path) {
  const Bytes bytes = detail::read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

inline Bytes encode_dense(const DenseMatrix& m) {
  Bytes out;
  out.reserve(8 + 8 * m.rows() * m.cols());
  detail::put_u32(out, detail::narrow_u32(m.rows(), "rows"));
  detail::put_u32(out, detail::narrow_u32(m.cols(), "cols"));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) detail::put_f64(out, m(i, j));
  return out;
}

inline DenseMatrix decode_dense(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  if (r.remaining() != 8 * rows * cols) {
    detail::fail(ErrorKind::kPayloadLength, "dense payload holds " + std::to_string(r.remaining()) +
                                                " bytes, header implies " + std::to_string(8 * rows * cols));
  }
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(i, j) = r.f64();
      if (!std::isfinite(m(i, j))) detail::fail(ErrorKind::kNonFiniteParameter, "dense entry is not finite");
    }
  }
  return m;
}

inline void save_dense(const DenseMatrix& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_dense(m));
}

inline DenseMatrix load_dense(const std::filesystem::path& path) {
  const Bytes bytes = detail::read_file(path);
  try {
    return decode_dense(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace cdvft
