#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "errors.hpp"

namespace negprompt {

// Little-endian binary writer. Byte order is explicit so files are portable
// regardless of host endianness.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path);

  void u8(uint8_t v);
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f32_from(double v) { f32(static_cast<float>(v)); }
  void f64(double v);
  void magic(const char m[4]);
  void str(const std::string& s);  // u32 length prefix + UTF-8 bytes

  uint64_t offset() const { return offset_; }
  void close();

 private:
  void bytes(const unsigned char* p, std::size_t n);

  std::ofstream out_;
  std::string path_;
  uint64_t offset_ = 0;
};

// Little-endian binary reader. Every failure throws ParseError carrying the
// byte offset where the read started.
class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path);

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  uint64_t f64_bits();
  double f64();
  void magic(const char expect[4], const char* format_name);
  std::string str(uint32_t max_len = (1u << 20));

  uint64_t offset() const { return offset_; }
  void expect_eof();

 private:
  void bytes(unsigned char* p, std::size_t n);

  std::ifstream in_;
  uint64_t offset_ = 0;
};

}  // namespace negprompt
