#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core_math.hpp"
#include "encoder.hpp"

namespace negprompt {

struct VocabEntry {
  std::string name;
  Vec token;   // token_dim entries
  bool is_id;  // member of the in-distribution label set
};

struct ClassVocabulary {
  std::size_t token_dim = 0;
  std::vector<VocabEntry> entries;

  std::vector<std::size_t> id_indices() const;
  std::vector<std::size_t> ood_indices() const;

  // Index of the named class, or -1.
  std::ptrdiff_t find(const std::string& name) const;

  // Unique names, consistent token dims, at least one ID class.
  void validate() const;

  void save(const std::string& path) const;
  static ClassVocabulary load(const std::string& path);
};

enum class Split : uint8_t {
  IdTrain = 0,
  IdTest = 1,
  OodTest = 2,
};

const char* split_name(Split s);

// Precomputed image features with labels. Labels index the bundle's own
// label-name table; callers resolve names against a vocabulary.
struct LabeledFeatureSet {
  Split split = Split::IdTrain;
  std::size_t feature_dim = 0;
  std::vector<std::string> label_names;
  std::vector<uint32_t> labels;
  std::vector<Vec> features;  // unit norm

  std::size_t size() const { return features.size(); }

  void save(const std::string& path) const;
  // Re-normalizes features on load; rejects records whose stored norm
  // deviates from 1 by more than 1e-3.
  static LabeledFeatureSet load(const std::string& path);
};

struct WorldConfig {
  uint64_t seed = 0;
  std::size_t id_classes = 20;
  std::size_t ood_classes = 20;
  std::size_t shots_per_class = 16;
  std::size_t test_per_class = 100;
  double noise_sigma = 0.15;
  double hardness = 0.5;  // 0 = easy, 1 = OOD prototypes collapse onto nearest ID prototype
  EncoderKind encoder_kind = EncoderKind::TanhMlp;
  EncoderDims dims;
};

struct World {
  FrozenEncoder encoder;
  ClassVocabulary vocab;
  LabeledFeatureSet train;
  LabeledFeatureSet id_test;
  LabeledFeatureSet ood_test;
};

// Fully deterministic synthetic ID/OOD world. Class prototypes are encodings
// of seeded class tokens under a neutral (all-zero) context; image features
// are noisy copies of their prototype; OOD prototypes are pulled toward the
// nearest ID prototype by `hardness`.
World generate_world(const WorldConfig& cfg);

}  // namespace negprompt
