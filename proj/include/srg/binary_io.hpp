#pragma once

// Little-endian byte buffers and atomic file replacement shared by the
// feature, checkpoint and score-map formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srg/errors.hpp"

namespace srg::io {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  const std::string& buffer() const noexcept { return buf_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

/// Bounds-checked reader; every failure reports the byte offset it happened at.
class ByteReader {
 public:
  ByteReader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  void expect_magic(std::string_view magic) {
    const std::size_t at = pos_;
    need(magic.size(), "magic");
    if (std::string_view(data_).substr(pos_, magic.size()) != magic) {
      throw ParseError(source_ + ": bad magic at byte " + std::to_string(at) + " (expected \"" +
                           std::string(magic) + "\")",
                       at);
    }
    pos_ += magic.size();
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get_le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get_le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get_le(4, what)); }
  float f32(const char* what) { return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(4, what))); }
  std::vector<float> f32s(std::size_t n, const char* what) {
    need(n * 4, what);
    std::vector<float> out(n);
    for (auto& v : out) v = f32(what);
    return out;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_end() const {
    if (pos_ != data_.size()) {
      throw ParseError(source_ + ": " + std::to_string(data_.size() - pos_) + " trailing bytes at byte " +
                           std::to_string(pos_),
                       pos_);
    }
  }
  std::size_t offset() const noexcept { return pos_; }
  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw ParseError(source_ + ": " + what + " at byte " + std::to_string(at), at);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw ParseError(source_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_), pos_);
    }
  }
  std::uint64_t get_le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames it over `path`, so readers never
/// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace srg::io
