#include "encoder.hpp"

#include <bit>
#include <cmath>

#include "io_util.hpp"
#include "rng.hpp"

namespace negprompt {

namespace {

constexpr char kMagic[4] = {'N', 'E', 'G', 'E'};
constexpr uint16_t kVersion = 1;

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void fill_uniform_f32(Rng& rng, double half_width, std::vector<double>& out) {
  for (auto& x : out) x = quantize_f32(rng.uniform(-half_width, half_width));
}

// FNV-1a over the f32 little-endian image of the value.
void hash_f32(uint64_t& h, double v) {
  const uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) {
    h ^= (bits >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

void hash_u32(uint64_t& h, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

const char* encoder_kind_name(EncoderKind kind) {
  return kind == EncoderKind::LinearMean ? "linear_mean" : "tanh_mlp";
}

FrozenEncoder FrozenEncoder::create(EncoderKind kind, const EncoderDims& dims, uint64_t seed) {
  if (dims.token_dim == 0 || dims.feature_dim == 0 || dims.seq_len == 0) {
    throw InvalidArgument("encoder dims must be positive");
  }
  if (kind == EncoderKind::TanhMlp && dims.hidden_dim == 0) {
    throw InvalidArgument("tanh_mlp encoder needs hidden_dim > 0");
  }
  FrozenEncoder enc;
  enc.kind_ = kind;
  enc.dims_ = dims;
  if (kind == EncoderKind::LinearMean) enc.dims_.hidden_dim = 0;

  Rng rng(seed, RngStream::EncoderWeights);
  const double w1_width = 1.0 / std::sqrt(static_cast<double>(dims.token_dim));
  if (kind == EncoderKind::LinearMean) {
    enc.w1_ = Matrix(dims.feature_dim, dims.token_dim);
    enc.b1_.assign(dims.feature_dim, 0.0);
    fill_uniform_f32(rng, w1_width, enc.w1_.data);
    fill_uniform_f32(rng, w1_width, enc.b1_);
  } else {
    enc.w1_ = Matrix(dims.hidden_dim, dims.token_dim);
    enc.b1_.assign(dims.hidden_dim, 0.0);
    fill_uniform_f32(rng, w1_width, enc.w1_.data);
    fill_uniform_f32(rng, w1_width, enc.b1_);
    const double w2_width = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
    enc.w2_ = Matrix(dims.feature_dim, dims.hidden_dim);
    enc.b2_.assign(dims.feature_dim, 0.0);
    fill_uniform_f32(rng, w2_width, enc.w2_.data);
    fill_uniform_f32(rng, w2_width, enc.b2_);
  }
  // Per-position scales make the sequence slots non-interchangeable. The
  // class slot (last position) is pinned to 1 so class tokens map directly
  // into pooled space; context slots carry a fixed gain so a trained
  // context can outweigh the class slot within a few full-batch steps.
  constexpr double kContextSlotGain = 5.0;
  enc.position_scales_.assign(dims.seq_len, 0.0);
  for (std::size_t s = 0; s + 1 < dims.seq_len; ++s) {
    enc.position_scales_[s] = quantize_f32(kContextSlotGain * rng.uniform(0.5, 1.5));
  }
  enc.position_scales_[dims.seq_len - 1] = 1.0;

  enc.compute_fingerprint();
  return enc;
}

void FrozenEncoder::check_tokens(const std::vector<Vec>& tokens) const {
  if (tokens.size() != dims_.seq_len) {
    throw InvalidArgument("encode: expected " + std::to_string(dims_.seq_len) + " tokens, got " +
                          std::to_string(tokens.size()));
  }
  for (const auto& t : tokens) {
    if (t.size() != dims_.token_dim) {
      throw InvalidArgument("encode: token dimension mismatch (expected " +
                            std::to_string(dims_.token_dim) + ", got " +
                            std::to_string(t.size()) + ")");
    }
  }
}

Vec FrozenEncoder::pool(const std::vector<Vec>& tokens) const {
  Vec pooled(dims_.token_dim, 0.0);
  const double inv = 1.0 / static_cast<double>(dims_.seq_len);
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    axpy(position_scales_[s] * inv, tokens[s], pooled);
  }
  return pooled;
}

Vec FrozenEncoder::encode(const std::vector<Vec>& tokens) const {
  check_tokens(tokens);
  const Vec pooled = pool(tokens);
  Vec z;
  if (kind_ == EncoderKind::LinearMean) {
    z = matvec(w1_, pooled);
    axpy(1.0, b1_, z);
  } else {
    Vec h = matvec(w1_, pooled);
    axpy(1.0, b1_, h);
    for (auto& x : h) x = std::tanh(x);
    z = matvec(w2_, h);
    axpy(1.0, b2_, z);
  }
  const double n = norm2(z);
  if (!(n > 0.0)) throw InvalidArgument("degenerate encoding: zero pre-normalization output");
  for (auto& x : z) x /= n;
  return z;
}

std::vector<Vec> FrozenEncoder::encode_vjp(const std::vector<Vec>& tokens,
                                           const Vec& upstream) const {
  check_tokens(tokens);
  if (upstream.size() != dims_.feature_dim) {
    throw InvalidArgument("encode_vjp: upstream dimension mismatch");
  }
  const Vec pooled = pool(tokens);

  Vec z;
  Vec h;  // post-tanh activations, TanhMlp only
  if (kind_ == EncoderKind::LinearMean) {
    z = matvec(w1_, pooled);
    axpy(1.0, b1_, z);
  } else {
    h = matvec(w1_, pooled);
    axpy(1.0, b1_, h);
    for (auto& x : h) x = std::tanh(x);
    z = matvec(w2_, h);
    axpy(1.0, b2_, z);
  }
  const double n = norm2(z);
  if (!(n > 0.0)) throw InvalidArgument("degenerate encoding: zero pre-normalization output");
  Vec f(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) f[i] = z[i] / n;

  // d(u . f)/dz = (u - f (f . u)) / |z|
  const double fu = dot(f, upstream);
  Vec g_z(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) g_z[i] = (upstream[i] - f[i] * fu) / n;

  Vec g_pool;
  if (kind_ == EncoderKind::LinearMean) {
    g_pool = matvec_t(w1_, g_z);
  } else {
    Vec g_h = matvec_t(w2_, g_z);
    for (std::size_t i = 0; i < g_h.size(); ++i) g_h[i] *= 1.0 - h[i] * h[i];
    g_pool = matvec_t(w1_, g_h);
  }

  const double inv = 1.0 / static_cast<double>(dims_.seq_len);
  std::vector<Vec> grads(dims_.seq_len);
  for (std::size_t s = 0; s < dims_.seq_len; ++s) {
    grads[s].resize(dims_.token_dim);
    const double c = position_scales_[s] * inv;
    for (std::size_t i = 0; i < dims_.token_dim; ++i) grads[s][i] = c * g_pool[i];
  }
  return grads;
}

void FrozenEncoder::compute_fingerprint() {
  uint64_t h = 0xcbf29ce484222325ULL;
  h ^= static_cast<uint8_t>(kind_);
  h *= 0x100000001b3ULL;
  hash_u32(h, static_cast<uint32_t>(dims_.token_dim));
  hash_u32(h, static_cast<uint32_t>(dims_.feature_dim));
  hash_u32(h, static_cast<uint32_t>(dims_.hidden_dim));
  hash_u32(h, static_cast<uint32_t>(dims_.seq_len));
  for (double v : w1_.data) hash_f32(h, v);
  for (double v : b1_) hash_f32(h, v);
  for (double v : w2_.data) hash_f32(h, v);
  for (double v : b2_) hash_f32(h, v);
  for (double v : position_scales_) hash_f32(h, v);
  fingerprint_ = h;
}

void FrozenEncoder::save(const std::string& path) const {
  BinaryWriter w(path);
  w.magic(kMagic);
  w.u16(kVersion);
  w.u8(static_cast<uint8_t>(kind_));
  w.u32(static_cast<uint32_t>(dims_.token_dim));
  w.u32(static_cast<uint32_t>(dims_.feature_dim));
  w.u32(static_cast<uint32_t>(dims_.hidden_dim));
  w.u32(static_cast<uint32_t>(dims_.seq_len));
  for (double v : w1_.data) w.f32_from(v);
  for (double v : b1_) w.f32_from(v);
  for (double v : w2_.data) w.f32_from(v);
  for (double v : b2_) w.f32_from(v);
  for (double v : position_scales_) w.f32_from(v);
  w.u64(fingerprint_);
  w.close();
}

FrozenEncoder FrozenEncoder::load(const std::string& path) {
  BinaryReader r(path);
  r.magic(kMagic, "encoder (.nfe)");
  const uint64_t version_at = r.offset();
  const uint16_t version = r.u16();
  if (version != kVersion) throw ParseError("unsupported encoder version", version_at);
  const uint64_t kind_at = r.offset();
  const uint8_t kind_byte = r.u8();
  if (kind_byte > 1) throw ParseError("unknown encoder kind", kind_at);

  FrozenEncoder enc;
  enc.kind_ = static_cast<EncoderKind>(kind_byte);
  enc.dims_.token_dim = r.u32();
  enc.dims_.feature_dim = r.u32();
  enc.dims_.hidden_dim = r.u32();
  enc.dims_.seq_len = r.u32();
  if (enc.dims_.token_dim == 0 || enc.dims_.feature_dim == 0 || enc.dims_.seq_len == 0) {
    throw ParseError("encoder dims must be positive", 7);
  }
  if (enc.kind_ == EncoderKind::TanhMlp && enc.dims_.hidden_dim == 0) {
    throw ParseError("tanh_mlp encoder needs hidden_dim > 0", 7);
  }

  auto read_vec = [&r](std::size_t count, std::vector<double>& out) {
    out.resize(count);
    for (auto& v : out) v = static_cast<double>(r.f32());
  };

  if (enc.kind_ == EncoderKind::LinearMean) {
    enc.w1_ = Matrix(enc.dims_.feature_dim, enc.dims_.token_dim);
    read_vec(enc.w1_.data.size(), enc.w1_.data);
    read_vec(enc.dims_.feature_dim, enc.b1_);
  } else {
    enc.w1_ = Matrix(enc.dims_.hidden_dim, enc.dims_.token_dim);
    read_vec(enc.w1_.data.size(), enc.w1_.data);
    read_vec(enc.dims_.hidden_dim, enc.b1_);
    enc.w2_ = Matrix(enc.dims_.feature_dim, enc.dims_.hidden_dim);
    read_vec(enc.w2_.data.size(), enc.w2_.data);
    read_vec(enc.dims_.feature_dim, enc.b2_);
  }
  read_vec(enc.dims_.seq_len, enc.position_scales_);

  const uint64_t fp_at = r.offset();
  const uint64_t stored_fp = r.u64();
  r.expect_eof();
  enc.compute_fingerprint();
  if (stored_fp != enc.fingerprint_) {
    throw ParseError("encoder fingerprint does not match parameters", fp_at);
  }
  return enc;
}

GradCheckReport gradcheck(const FrozenEncoder& enc, uint64_t seed, int probes) {
  GradCheckReport report;
  report.probes = probes;
  const double h = 1e-6;
  for (int probe = 0; probe < probes; ++probe) {
    Rng rng(seed, RngStream::GradCheck, static_cast<uint64_t>(probe));
    std::vector<Vec> tokens(enc.dims().seq_len);
    for (auto& t : tokens) t = rng.gaussian_vec(enc.dims().token_dim);
    const Vec upstream = rng.gaussian_vec(enc.dims().feature_dim);

    const std::vector<Vec> analytic = enc.encode_vjp(tokens, upstream);
    for (std::size_t s = 0; s < tokens.size(); ++s) {
      for (std::size_t i = 0; i < enc.dims().token_dim; ++i) {
        auto perturbed = tokens;
        perturbed[s][i] += h;
        const double plus = dot(upstream, enc.encode(perturbed));
        perturbed[s][i] -= 2.0 * h;
        const double minus = dot(upstream, enc.encode(perturbed));
        const double fd = (plus - minus) / (2.0 * h);
        const double denom = std::max({1e-8, std::abs(fd), std::abs(analytic[s][i])});
        const double rel = std::abs(analytic[s][i] - fd) / denom;
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
    }
  }
  report.pass = report.max_rel_error < 1e-5;
  return report;
}

}  // namespace negprompt
