#include "prompts.hpp"

#include "io_util.hpp"
#include "rng.hpp"

namespace negprompt {

namespace {

constexpr char kMagic[4] = {'N', 'E', 'G', 'P'};
constexpr uint16_t kVersion = 1;

}  // namespace

PositivePrompt init_positive(uint64_t seed, std::size_t n, std::size_t token_dim) {
  if (n == 0 || token_dim == 0) throw InvalidArgument("prompt shape must be positive");
  PositivePrompt pos;
  Rng rng(seed, RngStream::PositiveInit);
  pos.context.tokens.resize(n);
  for (auto& t : pos.context.tokens) t = rng.gaussian_vec(token_dim, 0.02);
  pos.frozen = false;
  return pos;
}

std::vector<PromptContext> jitter_contexts(const PromptContext& base, std::size_t p,
                                           double jitter_sigma, uint64_t seed) {
  if (p == 0) throw InvalidArgument("need at least one negative prompt");
  if (jitter_sigma < 0.0) throw InvalidArgument("jitter_sigma must be >= 0");
  if (p > 1 && jitter_sigma == 0.0) {
    throw InvalidArgument("symmetric initialization forbidden: jitter_sigma must be > 0 for p > 1");
  }
  std::vector<PromptContext> contexts(p, base);
  if (jitter_sigma > 0.0) {
    for (std::size_t l = 0; l < p; ++l) {
      Rng rng(seed, RngStream::NegativeJitter, l);
      for (auto& token : contexts[l].tokens) {
        for (auto& v : token) v += jitter_sigma * rng.gaussian();
      }
    }
  }
  return contexts;
}

NegativePromptSet init_negative_from_positive(const PositivePrompt& pos, std::size_t p,
                                              double jitter_sigma, uint64_t seed) {
  if (!pos.frozen) throw InvalidArgument("positive prompt must be frozen before negative init");
  NegativePromptSet set;
  set.contexts = jitter_contexts(pos.context, p, jitter_sigma, seed);
  return set;
}

std::vector<Vec> compute_class_features(const FrozenEncoder& enc, const PromptContext& context,
                                        const ClassVocabulary& vocab,
                                        const std::vector<std::size_t>& class_subset) {
  if (class_subset.empty()) throw InvalidArgument("class subset is empty");
  if (context.n() + 1 != enc.dims().seq_len) {
    throw InvalidArgument("prompt context length does not match encoder sequence length");
  }
  std::vector<Vec> features;
  features.reserve(class_subset.size());
  std::vector<Vec> tokens = context.tokens;
  tokens.emplace_back();
  for (std::size_t idx : class_subset) {
    if (idx >= vocab.entries.size()) throw InvalidArgument("class index out of range");
    tokens.back() = vocab.entries[idx].token;
    features.push_back(enc.encode(tokens));
  }
  return features;
}

void Checkpoint::save(const std::string& path) const {
  const std::size_t n = positive.context.n();
  const std::size_t d_t = positive.context.token_dim();
  for (const auto& ctx : negatives.contexts) {
    if (ctx.n() != n || ctx.token_dim() != d_t) {
      throw InvalidArgument("negative context shape differs from positive context");
    }
  }
  BinaryWriter w(path);
  w.magic(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<uint32_t>(d_t));
  w.u32(static_cast<uint32_t>(n));
  w.u32(static_cast<uint32_t>(negatives.count()));
  w.f64(tau);
  w.u64(encoder_fingerprint);
  for (const auto& token : positive.context.tokens) {
    for (double v : token) w.f32_from(v);
  }
  for (const auto& ctx : negatives.contexts) {
    for (const auto& token : ctx.tokens) {
      for (double v : token) w.f32_from(v);
    }
  }
  w.u32(static_cast<uint32_t>(trained_classes.size()));
  for (const auto& name : trained_classes) w.str(name);
  w.close();
}

Checkpoint Checkpoint::load(const std::string& path, uint64_t expected_fingerprint) {
  BinaryReader r(path);
  r.magic(kMagic, "checkpoint (.npk)");
  const uint64_t version_at = r.offset();
  if (r.u16() != kVersion) throw ParseError("unsupported checkpoint version", version_at);
  Checkpoint ckpt;
  const uint64_t dims_at = r.offset();
  const uint32_t d_t = r.u32();
  const uint32_t n = r.u32();
  const uint32_t p = r.u32();
  if (d_t == 0 || n == 0) throw ParseError("checkpoint prompt shape must be positive", dims_at);
  ckpt.tau = r.f64();
  if (!(ckpt.tau > 0.0)) throw ParseError("checkpoint tau must be positive", dims_at + 12);
  ckpt.encoder_fingerprint = r.u64();
  if (ckpt.encoder_fingerprint != expected_fingerprint) {
    throw FingerprintMismatch(expected_fingerprint, ckpt.encoder_fingerprint);
  }
  auto read_context = [&r, d_t, n]() {
    PromptContext ctx;
    ctx.tokens.resize(n);
    for (auto& token : ctx.tokens) {
      token.resize(d_t);
      for (auto& v : token) v = static_cast<double>(r.f32());
    }
    return ctx;
  };
  ckpt.positive.context = read_context();
  ckpt.positive.frozen = true;
  ckpt.negatives.contexts.reserve(p);
  for (uint32_t l = 0; l < p; ++l) ckpt.negatives.contexts.push_back(read_context());
  const uint32_t name_count = r.u32();
  ckpt.trained_classes.reserve(name_count);
  for (uint32_t i = 0; i < name_count; ++i) ckpt.trained_classes.push_back(r.str());
  r.expect_eof();
  return ckpt;
}

}  // namespace negprompt
