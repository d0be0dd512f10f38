#pragma once

#include <bit>
#include <cstdint>
#include <string>

#include "ae2i/errors.hpp"
#include "ae2i/matrix.hpp"

namespace ae2i {

/// Little-endian byte encoder for the checkpoint and dataset formats.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const std::string& s) { out_ += s; }
  /// u32 length prefix, then the bytes.
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  /// u32 rows, u32 cols, row-major f64 values.
  void matrix(const MatrixD& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }

  const std::string& bytes() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  std::string out_;
};

/// Bounds-checked decoder; every short read throws FormatError.
class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return raw(u32()); }
  MatrixD matrix() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    need(static_cast<std::uint64_t>(rows) * cols * 8);
    MatrixD m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }

  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw FormatError("unexpected end of data at byte " + std::to_string(pos_));
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    }
    return v;
  }

  const std::string& in_;
  std::size_t pos_ = 0;
};

/// Whole-file helpers. Throw DataError when the file cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace ae2i
