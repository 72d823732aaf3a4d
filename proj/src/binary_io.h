// SPDX-License-Identifier: Apache-2.0
//
// Little-endian encoders shared by the dataset and checkpoint formats.

#ifndef MTRL_SRC_BINARY_IO_H_
#define MTRL_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>

namespace mtrl::io {

template <typename U>
void put_le(std::string &out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b)
    out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void put_f64(std::string &out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}

/// Sequential reader over a byte buffer; throws on overrun.
class Reader {
 public:
  Reader(std::string_view bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + b]))
           << (8 * b);
    pos_ += sizeof(U);
    return v;
  }

  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::string_view get_bytes(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw std::runtime_error(what_ + ": truncated (need " + std::to_string(n) +
                               " more bytes at offset " + std::to_string(pos_) +
                               ", have " + std::to_string(bytes_.size() - pos_) +
                               ")");
  }

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string &path);
void write_file(const std::string &path, std::string_view bytes);

}  // namespace mtrl::io

#endif  // MTRL_SRC_BINARY_IO_H_
