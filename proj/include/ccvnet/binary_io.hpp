#pragma once

// Little-endian encode/decode helpers for the on-disk formats. Values are
// assembled byte by byte so files are identical on any host.

#include "ccvnet/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace ccvnet::binio {

class Writer {
public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  const std::vector<char> &buffer() const noexcept { return buf_; }

private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

/// Cursor over an in-memory file image. Every read is bounds-checked and
/// failures report the offset where the missing field starts.
class Reader {
public:
  Reader(std::string path, std::vector<char> data)
      : path_(std::move(path)), data_(std::move(data)) {}

  std::string bytes(std::size_t n, const char *what) {
    need(n, what);
    std::string out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint16_t u16(const char *what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(const char *what) { return static_cast<std::uint32_t>(get(4, what)); }
  float f32(const char *what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char *what) { return std::bit_cast<double>(get(8, what)); }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string &path() const noexcept { return path_; }

  [[noreturn]] void fail(const std::string &what) const { throw ParseError(path_, pos_, what); }
  [[noreturn]] void fail_at(std::size_t offset, const std::string &what) const {
    throw ParseError(path_, offset, what);
  }

private:
  void need(std::size_t n, const char *what) const {
    if (remaining() < n)
      fail(std::string("truncated while reading ") + what + " (need " + std::to_string(n) +
           " bytes, " + std::to_string(remaining()) + " left)");
  }
  std::uint64_t get(int n, const char *what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string path_;
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string &path);
void write_file(const std::string &path, const std::vector<char> &data);

} // namespace ccvnet::binio
