#pragma once

#include <cstdint>
#include <string>

#include "detection.hpp"
#include "training.hpp"
#include "world.hpp"

namespace negprompt {

// Full experiment configuration, parsed from line-oriented `key = value`
// text. Unknown keys are rejected; missing keys take the defaults below.
struct ExperimentConfig {
  uint64_t seed = 0;

  // world
  EncoderKind encoder_kind = EncoderKind::TanhMlp;
  std::size_t token_dim = 24;
  std::size_t feature_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t context_len = 16;
  std::size_t id_classes = 20;
  std::size_t ood_classes = 20;
  std::size_t shots_per_class = 16;
  std::size_t test_per_class = 100;
  double noise_sigma = 0.15;
  double hardness = 0.5;

  // training
  std::size_t stage1_epochs = 100;
  std::size_t stage2_epochs = 10;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double tau = 0.01;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t num_negative_prompts = 2;
  double jitter_sigma = 1e-3;
  double beta = 0.1;
  double gamma = 0.05;

  // evaluation
  ScorerKind scorer = ScorerKind::NegPrompt;
  double open_vocab_fraction = 0.10;

  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig parse_file(const std::string& path);

  // Applies one key; throws InvalidArgument naming the key on bad values.
  void set(const std::string& key, const std::string& value);

  // Current value of one key, formatted as serialize() would.
  std::string get(const std::string& key) const;

  std::string serialize() const;
  void validate() const;

  WorldConfig world_config() const;
  TrainConfig train_config() const;
  LossWeights loss_weights() const;
  std::size_t open_vocab_class_count() const;  // ceil(fraction * id_classes), >= 1
};

}  // namespace negprompt
