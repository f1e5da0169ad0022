#include "io_util.hpp"

#include <bit>
#include <cstring>

namespace negprompt {

BinaryWriter::BinaryWriter(const std::string& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot open for writing: " + path);
}

void BinaryWriter::bytes(const unsigned char* p, std::size_t n) {
  out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out_) throw IoError("write failed: " + path_);
  offset_ += n;
}

void BinaryWriter::u8(uint8_t v) { bytes(&v, 1); }

void BinaryWriter::u16(uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  bytes(b, 2);
}

void BinaryWriter::u32(uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  bytes(b, 4);
}

void BinaryWriter::u64(uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  bytes(b, 8);
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }

void BinaryWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

void BinaryWriter::magic(const char m[4]) {
  bytes(reinterpret_cast<const unsigned char*>(m), 4);
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<uint32_t>(s.size()));
  if (!s.empty()) bytes(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw IoError("flush failed: " + path_);
  out_.close();
}

BinaryReader::BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open for reading: " + path);
}

void BinaryReader::bytes(unsigned char* p, std::size_t n) {
  const uint64_t at = offset_;
  in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw ParseError("unexpected end of file", at);
  }
  offset_ += n;
}

uint8_t BinaryReader::u8() {
  unsigned char b;
  bytes(&b, 1);
  return b;
}

uint16_t BinaryReader::u16() {
  unsigned char b[2];
  bytes(b, 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t BinaryReader::u32() {
  unsigned char b[4];
  bytes(b, 4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t BinaryReader::u64() {
  unsigned char b[8];
  bytes(b, 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }

uint64_t BinaryReader::f64_bits() { return u64(); }

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

void BinaryReader::magic(const char expect[4], const char* format_name) {
  const uint64_t at = offset_;
  unsigned char got[4];
  bytes(got, 4);
  if (std::memcmp(got, expect, 4) != 0) {
    throw ParseError(std::string("bad magic, not a ") + format_name + " file", at);
  }
}

std::string BinaryReader::str(uint32_t max_len) {
  const uint64_t at = offset_;
  const uint32_t len = u32();
  if (len > max_len) throw ParseError("string length out of range", at);
  std::string s(len, '\0');
  if (len > 0) bytes(reinterpret_cast<unsigned char*>(s.data()), len);
  return s;
}

void BinaryReader::expect_eof() {
  const uint64_t at = offset_;
  char c;
  in_.read(&c, 1);
  if (in_.gcount() != 0) throw ParseError("trailing bytes after end of record data", at);
}

}  // namespace negprompt
