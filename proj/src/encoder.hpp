#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core_math.hpp"

namespace negprompt {

enum class EncoderKind : uint8_t {
  LinearMean = 0,
  TanhMlp = 1,
};

const char* encoder_kind_name(EncoderKind kind);

struct EncoderDims {
  std::size_t token_dim = 24;
  std::size_t feature_dim = 16;
  std::size_t hidden_dim = 32;  // TanhMlp only
  std::size_t seq_len = 17;     // context tokens + class token

  bool operator==(const EncoderDims&) const = default;
};

// Frozen stand-in for a text encoder: pools a fixed-length token sequence
// with per-position scales and maps it to a unit-norm feature. Weights are
// drawn once from a seed, quantized to f32 so the fingerprint survives a
// save/load round trip, and never change afterwards.
//
// Forward, with pooled = (1/seq_len) * sum_s scale[s] * token[s]:
//   LinearMean:  f = normalize(W1 pooled + b1)
//   TanhMlp:     f = normalize(W2 tanh(W1 pooled + b1) + b2)
class FrozenEncoder {
 public:
  FrozenEncoder() = default;  // empty placeholder; assign before use

  static FrozenEncoder create(EncoderKind kind, const EncoderDims& dims, uint64_t seed);

  Vec encode(const std::vector<Vec>& tokens) const;

  // Exact gradient of (upstream . encode(tokens)) with respect to every
  // input token, including the (I - f f^T)/|z| normalization Jacobian.
  std::vector<Vec> encode_vjp(const std::vector<Vec>& tokens, const Vec& upstream) const;

  EncoderKind kind() const { return kind_; }
  const EncoderDims& dims() const { return dims_; }
  std::size_t context_len() const { return dims_.seq_len - 1; }
  uint64_t fingerprint() const { return fingerprint_; }

  void save(const std::string& path) const;
  static FrozenEncoder load(const std::string& path);

 private:
  void check_tokens(const std::vector<Vec>& tokens) const;
  Vec pool(const std::vector<Vec>& tokens) const;
  void compute_fingerprint();

  EncoderKind kind_ = EncoderKind::LinearMean;
  EncoderDims dims_;
  Matrix w1_;  // LinearMean: feature_dim x token_dim; TanhMlp: hidden x token_dim
  Vec b1_;
  Matrix w2_;  // TanhMlp only: feature_dim x hidden
  Vec b2_;
  Vec position_scales_;  // seq_len entries
  uint64_t fingerprint_ = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int probes = 0;
  bool pass = false;
};

// Compares encode_vjp against central finite differences (h = 1e-6) on
// `probes` random token sets. Failures are reported, never thrown.
GradCheckReport gradcheck(const FrozenEncoder& enc, uint64_t seed, int probes = 10);

}  // namespace negprompt
