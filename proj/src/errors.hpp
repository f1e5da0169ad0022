#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace negprompt {

// Bad shapes, degenerate values, out-of-range arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened/written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents. Carries the byte offset at which parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  uint64_t offset() const { return offset_; }

 private:
  uint64_t offset_;
};

// Checkpoint or artifact refers to a different frozen encoder.
class FingerprintMismatch : public std::runtime_error {
 public:
  FingerprintMismatch(uint64_t expected, uint64_t got)
      : std::runtime_error("fingerprint mismatch: artifact was produced with encoder 0x" +
                           to_hex(got) + ", loaded against encoder 0x" + to_hex(expected)),
        expected_(expected),
        got_(got) {}

  uint64_t expected() const { return expected_; }
  uint64_t got() const { return got_; }

 private:
  static std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
      s[static_cast<size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return s;
  }

  uint64_t expected_;
  uint64_t got_;
};

}  // namespace negprompt
