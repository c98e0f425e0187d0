#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sgmc/error.hpp"

namespace sgmc::binio {

// All on-disk integers and floats are little-endian. The helpers track the
// byte offset so format errors can report where parsing stopped.

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open file: " + path, 0);
  }

  std::uint32_t read_u32() {
    unsigned char b[4];
    read_raw(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t read_u64() {
    std::uint64_t lo = read_u32();
    std::uint64_t hi = read_u32();
    return lo | (hi << 32);
  }

  float read_f32() {
    std::uint32_t u = read_u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }

  void read_f32_array(float* dst, std::size_t count) {
    // Bulk read; byte order fix-up only needed on big-endian hosts.
    read_raw(reinterpret_cast<unsigned char*>(dst), count * 4);
  }

  std::string read_bytes(std::size_t count) {
    std::string s(count, '\0');
    read_raw(reinterpret_cast<unsigned char*>(s.data()), count);
    return s;
  }

  void expect_magic(const std::string& magic) {
    std::size_t at = offset_;
    std::string got = read_bytes(magic.size());
    if (got != magic)
      throw FormatError("bad magic in " + path_ + ": expected \"" + magic + "\"", at);
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  std::size_t offset() const { return offset_; }

 private:
  void read_raw(unsigned char* dst, std::size_t count) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in_.gcount()) != count)
      throw FormatError("truncated file: " + path_, offset_);
    offset_ += count;
  }

  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open file for writing: " + path);
  }

  void write_u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out_.write(reinterpret_cast<char*>(b), 4);
  }

  void write_u64(std::uint64_t v) {
    write_u32(static_cast<std::uint32_t>(v));
    write_u32(static_cast<std::uint32_t>(v >> 32));
  }

  void write_f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    write_u32(u);
  }

  void write_f32_array(const float* src, std::size_t count) {
    out_.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * 4));
  }

  void write_bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void close() {
    out_.close();
    if (!out_) throw Error("write failed while closing file");
  }

 private:
  std::ofstream out_;
};

}  // namespace sgmc::binio
