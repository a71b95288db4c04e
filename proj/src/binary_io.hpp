#pragma once

// Little-endian buffer encoding shared by the checkpoint and dataset containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lenslearn/errors.hpp"

namespace lenslearn::detail {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& buf, std::string source)
      : buf_(buf), source_(std::move(source)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError(source_, pos_, std::string("truncated ") + what + " (need " +
                                          std::to_string(n) + " bytes, have " +
                                          std::to_string(remaining()) + ")");
    }
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint16_t u16(const char* what) {
    std::uint16_t v;
    bytes(&v, 2, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::uint32_t u32_be(const char* what) {
    std::uint8_t b[4];
    bytes(b, 4, what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }
  std::string text(std::size_t n, const char* what) {
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, pos_, what); }
  [[noreturn]] void fail_at(std::size_t offset, const std::string& what) const {
    throw ParseError(source_, offset, what);
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace lenslearn::detail
