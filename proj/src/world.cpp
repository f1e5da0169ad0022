#include "world.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>

#include "io_util.hpp"
#include "rng.hpp"

namespace negprompt {

namespace {

constexpr char kBundleMagic[4] = {'N', 'E', 'G', 'B'};
constexpr char kVocabMagic[4] = {'N', 'E', 'G', 'V'};
constexpr uint16_t kVersion = 1;

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string class_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, i);
  return buf;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::IdTrain:
      return "id_train";
    case Split::IdTest:
      return "id_test";
    case Split::OodTest:
      return "ood_test";
  }
  return "unknown";
}

std::vector<std::size_t> ClassVocabulary::id_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].is_id) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> ClassVocabulary::ood_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].is_id) out.push_back(i);
  }
  return out;
}

std::ptrdiff_t ClassVocabulary::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

void ClassVocabulary::validate() const {
  if (entries.empty()) throw InvalidArgument("vocabulary is empty");
  std::set<std::string> seen;
  bool any_id = false;
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) {
      throw InvalidArgument("duplicate class name: " + e.name);
    }
    if (e.token.size() != token_dim) {
      throw InvalidArgument("class token dimension mismatch for " + e.name);
    }
    any_id = any_id || e.is_id;
  }
  if (!any_id) throw InvalidArgument("vocabulary has no ID classes");
}

void ClassVocabulary::save(const std::string& path) const {
  validate();
  BinaryWriter w(path);
  w.magic(kVocabMagic);
  w.u16(kVersion);
  w.u32(static_cast<uint32_t>(token_dim));
  w.u32(static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u8(e.is_id ? 1 : 0);
    for (double v : e.token) w.f32_from(v);
  }
  w.close();
}

ClassVocabulary ClassVocabulary::load(const std::string& path) {
  BinaryReader r(path);
  r.magic(kVocabMagic, "vocabulary (.nvc)");
  const uint64_t version_at = r.offset();
  if (r.u16() != kVersion) throw ParseError("unsupported vocabulary version", version_at);
  ClassVocabulary vocab;
  vocab.token_dim = r.u32();
  const uint64_t count_at = r.offset();
  const uint32_t count = r.u32();
  if (count == 0) throw ParseError("empty vocabulary", count_at);
  vocab.entries.reserve(count);
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    VocabEntry e;
    const uint64_t name_at = r.offset();
    e.name = r.str();
    if (!seen.insert(e.name).second) {
      throw ParseError("duplicate class name: " + e.name, name_at);
    }
    const uint64_t mask_at = r.offset();
    const uint8_t mask = r.u8();
    if (mask > 1) throw ParseError("id_mask must be 0 or 1", mask_at);
    e.is_id = mask == 1;
    e.token.resize(vocab.token_dim);
    for (auto& v : e.token) v = static_cast<double>(r.f32());
    vocab.entries.push_back(std::move(e));
  }
  r.expect_eof();
  vocab.validate();
  return vocab;
}

void LabeledFeatureSet::save(const std::string& path) const {
  BinaryWriter w(path);
  w.magic(kBundleMagic);
  w.u16(kVersion);
  w.u8(static_cast<uint8_t>(split));
  w.u32(static_cast<uint32_t>(feature_dim));
  w.u64(static_cast<uint64_t>(features.size()));
  w.u32(static_cast<uint32_t>(label_names.size()));
  for (const auto& name : label_names) w.str(name);
  for (std::size_t i = 0; i < features.size(); ++i) {
    w.u32(labels[i]);
    for (double v : features[i]) w.f32_from(v);
  }
  w.close();
}

LabeledFeatureSet LabeledFeatureSet::load(const std::string& path) {
  BinaryReader r(path);
  r.magic(kBundleMagic, "feature bundle (.neb)");
  const uint64_t version_at = r.offset();
  if (r.u16() != kVersion) throw ParseError("unsupported bundle version", version_at);
  LabeledFeatureSet set;
  const uint64_t split_at = r.offset();
  const uint8_t split_byte = r.u8();
  if (split_byte > 2) throw ParseError("unknown split tag", split_at);
  set.split = static_cast<Split>(split_byte);
  set.feature_dim = r.u32();
  if (set.feature_dim == 0) throw ParseError("feature_dim must be positive", split_at + 1);
  const uint64_t record_count = r.u64();
  const uint32_t name_count = r.u32();
  set.label_names.reserve(name_count);
  for (uint32_t i = 0; i < name_count; ++i) set.label_names.push_back(r.str());
  set.labels.reserve(record_count);
  set.features.reserve(record_count);
  for (uint64_t i = 0; i < record_count; ++i) {
    const uint64_t label_at = r.offset();
    const uint32_t label = r.u32();
    if (label >= name_count) throw ParseError("label index out of range", label_at);
    Vec f(set.feature_dim);
    const uint64_t feat_at = r.offset();
    for (auto& v : f) v = static_cast<double>(r.f32());
    const double n = norm2(f);
    if (std::abs(n - 1.0) > 1e-3) {
      throw ParseError("feature norm out of tolerance", feat_at);
    }
    set.labels.push_back(label);
    set.features.push_back(l2_normalize(f));
  }
  r.expect_eof();
  return set;
}

World generate_world(const WorldConfig& cfg) {
  if (cfg.id_classes == 0) throw InvalidArgument("id_classes must be positive");
  if (cfg.ood_classes == 0) throw InvalidArgument("ood_classes must be positive");
  if (cfg.shots_per_class == 0 || cfg.test_per_class == 0) {
    throw InvalidArgument("per-class sample counts must be positive");
  }
  if (cfg.noise_sigma < 0.0) throw InvalidArgument("noise_sigma must be >= 0");
  if (cfg.hardness < 0.0 || cfg.hardness > 1.0) throw InvalidArgument("hardness must be in [0,1]");

  World world;
  world.encoder = FrozenEncoder::create(cfg.encoder_kind, cfg.dims, cfg.seed);
  const auto& enc = world.encoder;
  const std::size_t d_t = cfg.dims.token_dim;
  const std::size_t n_ctx = cfg.dims.seq_len - 1;

  // Class tokens are laid out directly in pooled space (the class slot's
  // position scale is 1): tokens are scaled by seq_len to cancel the mean
  // pooling. ID class tokens are drawn wide so their prototypes spread over
  // the encoder's reachable region; OOD class tokens are drawn tight around
  // the origin, so their prototypes occupy the interior that the ID shell
  // only borders. Entry scales are per-sqrt(dim) so the expected token norm
  // matches the spread constants.
  const double seq_scale = static_cast<double>(cfg.dims.seq_len);
  const double sqrt_d = std::sqrt(static_cast<double>(d_t));
  const double id_spread = 4.0 / sqrt_d;
  const double ood_spread = 0.6 / sqrt_d;

  world.vocab.token_dim = d_t;
  const std::size_t total = cfg.id_classes + cfg.ood_classes;
  world.vocab.entries.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    VocabEntry e;
    const bool is_id = i < cfg.id_classes;
    e.name = is_id ? class_name("id", i) : class_name("ood", i - cfg.id_classes);
    e.is_id = is_id;
    Rng rng(cfg.seed, RngStream::ClassTokens, i);
    e.token.resize(d_t);
    const double spread = is_id ? id_spread : ood_spread;
    for (std::size_t c = 0; c < d_t; ++c) {
      e.token[c] = quantize_f32(seq_scale * spread * rng.gaussian());
    }
    world.vocab.entries.push_back(std::move(e));
  }
  world.vocab.validate();

  const std::vector<Vec> neutral_context(n_ctx, Vec(d_t, 0.0));
  auto prototype = [&](std::size_t class_idx) {
    auto tokens = neutral_context;
    tokens.push_back(world.vocab.entries[class_idx].token);
    return enc.encode(tokens);
  };

  std::vector<Vec> id_protos(cfg.id_classes);
  for (std::size_t i = 0; i < cfg.id_classes; ++i) id_protos[i] = prototype(i);

  std::vector<Vec> ood_protos(cfg.ood_classes);
  for (std::size_t i = 0; i < cfg.ood_classes; ++i) {
    const Vec own = prototype(cfg.id_classes + i);
    std::size_t nearest = 0;
    double best = -2.0;
    for (std::size_t j = 0; j < cfg.id_classes; ++j) {
      const double s = cosine_sim(own, id_protos[j]);
      if (s > best) {
        best = s;
        nearest = j;
      }
    }
    Vec mixed(own.size());
    for (std::size_t k = 0; k < own.size(); ++k) {
      mixed[k] = (1.0 - cfg.hardness) * own[k] + cfg.hardness * id_protos[nearest][k];
    }
    ood_protos[i] = l2_normalize(mixed);
  }

  auto make_split = [&](Split split, std::size_t per_class, RngStream stream,
                        const std::vector<Vec>& protos, std::size_t name_base) {
    LabeledFeatureSet set;
    set.split = split;
    set.feature_dim = cfg.dims.feature_dim;
    for (std::size_t c = 0; c < protos.size(); ++c) {
      set.label_names.push_back(world.vocab.entries[name_base + c].name);
    }
    set.labels.reserve(protos.size() * per_class);
    set.features.reserve(protos.size() * per_class);
    for (std::size_t c = 0; c < protos.size(); ++c) {
      for (std::size_t s = 0; s < per_class; ++s) {
        const uint64_t record = static_cast<uint64_t>(c) * per_class + s;
        Rng rng(cfg.seed, stream, record);
        Vec f = protos[c];
        if (cfg.noise_sigma > 0.0) {
          for (auto& v : f) v += cfg.noise_sigma * rng.gaussian();
          f = l2_normalize(f);
        }
        set.labels.push_back(static_cast<uint32_t>(c));
        set.features.push_back(std::move(f));
      }
    }
    return set;
  };

  world.train = make_split(Split::IdTrain, cfg.shots_per_class, RngStream::IdTrainNoise,
                           id_protos, 0);
  world.id_test = make_split(Split::IdTest, cfg.test_per_class, RngStream::IdTestNoise,
                             id_protos, 0);
  world.ood_test = make_split(Split::OodTest, cfg.test_per_class, RngStream::OodTestNoise,
                              ood_protos, cfg.id_classes);
  return world;
}

}  // namespace negprompt
