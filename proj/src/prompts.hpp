#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "encoder.hpp"
#include "world.hpp"

namespace negprompt {

// Ordered list of learnable context token vectors, shared across classes.
struct PromptContext {
  std::vector<Vec> tokens;  // n entries of token_dim each

  std::size_t n() const { return tokens.size(); }
  std::size_t token_dim() const { return tokens.empty() ? 0 : tokens[0].size(); }

  bool operator==(const PromptContext&) const = default;
};

struct PositivePrompt {
  PromptContext context;
  bool frozen = false;
};

struct NegativePromptSet {
  std::vector<PromptContext> contexts;  // p entries, all same shape

  std::size_t count() const { return contexts.size(); }
};

// Seeded gaussian(0, 0.02) initialization; returned prompt is unfrozen.
PositivePrompt init_positive(uint64_t seed, std::size_t n, std::size_t token_dim);

// Internal helper shared by two-stage and joint training: p copies of `base`
// with gaussian jitter of the given scale. jitter_sigma must be > 0 when
// p > 1, otherwise the p contexts would receive identical gradients forever.
std::vector<PromptContext> jitter_contexts(const PromptContext& base, std::size_t p,
                                           double jitter_sigma, uint64_t seed);

// Same, but requires a frozen positive prompt (the stage-2 entry point).
NegativePromptSet init_negative_from_positive(const PositivePrompt& pos, std::size_t p,
                                              double jitter_sigma, uint64_t seed);

// feature[i] = encode(context tokens ++ class_token[i]), in subset order.
std::vector<Vec> compute_class_features(const FrozenEncoder& enc, const PromptContext& context,
                                        const ClassVocabulary& vocab,
                                        const std::vector<std::size_t>& class_subset);

struct Checkpoint {
  PositivePrompt positive;
  NegativePromptSet negatives;  // may be empty after stage 1
  double tau = 0.01;
  uint64_t encoder_fingerprint = 0;
  std::vector<std::string> trained_classes;

  std::size_t p() const { return negatives.count(); }

  void save(const std::string& path) const;
  // Rejects files whose stored fingerprint differs from `expected_fingerprint`.
  static Checkpoint load(const std::string& path, uint64_t expected_fingerprint);
};

}  // namespace negprompt
