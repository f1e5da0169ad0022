#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "losses.hpp"
#include "prompts.hpp"
#include "world.hpp"

namespace negprompt {

struct LossWeights {
  double beta = 0.1;
  double gamma = 0.05;

  void validate() const;
};

struct TrainConfig {
  std::size_t stage1_epochs = 100;
  std::size_t stage2_epochs = 10;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double tau = 0.01;
  std::size_t batch_size = 0;  // 0 = full batch
  uint64_t seed = 0;
  std::size_t context_len = 16;
  std::size_t num_negative_prompts = 2;
  double jitter_sigma = 1e-3;

  void validate() const;
};

struct TraceRow {
  std::string stage;
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_nis = 0.0;
  double loss_npd = 0.0;
  double loss_nnd = 0.0;
  double loss_positive = 0.0;
};
using LossTrace = std::vector<TraceRow>;

void write_trace_csv(const LossTrace& trace, const std::string& path);

// A feature bundle resolved against a vocabulary and restricted to a class
// subset: labels become positions within `class_indices`, records from other
// classes are dropped.
struct TrainingSet {
  std::vector<std::size_t> class_indices;  // vocabulary indices, subset order
  std::vector<std::string> class_names;
  std::vector<uint32_t> labels;
  std::vector<Vec> features;

  std::size_t size() const { return features.size(); }
  std::size_t num_classes() const { return class_indices.size(); }
};

TrainingSet resolve_training_set(const LabeledFeatureSet& bundle, const ClassVocabulary& vocab,
                                 const std::vector<std::size_t>& class_subset);

// Stage-1 objective: cross-entropy over the positive similarities, with the
// exact gradient pulled back to the shared context tokens.
struct PositiveObjective {
  double loss = 0.0;
  std::vector<Vec> context_grad;  // n x token_dim
};
PositiveObjective positive_objective(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                                     const TrainingSet& ts,
                                     const std::vector<std::size_t>& batch,
                                     const PromptContext& context, double tau);

// Stage-2 objective: nis_weight * L_nis + beta * L_npd + gamma * L_nnd over
// the negative contexts, positives held constant. nis_weight exists so tests
// can isolate single components (e.g. beta=1, others 0 checks L_npd alone).
struct NegativeObjective {
  double total = 0.0;
  double nis = 0.0;
  double npd = 0.0;
  double nnd = 0.0;
  std::vector<std::vector<Vec>> context_grads;  // p x n x token_dim
};
NegativeObjective negative_objective(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                                     const TrainingSet& ts,
                                     const std::vector<std::size_t>& batch,
                                     const std::vector<Vec>& pos_features,
                                     const std::vector<PromptContext>& neg_contexts, double tau,
                                     const LossWeights& weights, double nis_weight = 1.0);

// One-stage objective: cross-entropy with negative-augmented probabilities
// plus the full negative-prompt loss. The positive context is trained by the
// cross-entropy term only; the distance losses keep treating positive
// features as constants, matching their stage-2 contracts.
struct JointObjective {
  double total = 0.0;
  double positive_ce = 0.0;
  double nis = 0.0;
  double npd = 0.0;
  double nnd = 0.0;
  std::vector<Vec> pos_context_grad;
  std::vector<std::vector<Vec>> neg_context_grads;
};
JointObjective joint_objective(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                               const TrainingSet& ts, const std::vector<std::size_t>& batch,
                               const PromptContext& pos_context,
                               const std::vector<PromptContext>& neg_contexts, double tau,
                               const LossWeights& weights);

// velocity <- momentum * velocity - lr * grad;  params <- params + velocity
void sgd_step(std::vector<Vec>& params, const std::vector<Vec>& grads, double lr, double momentum,
              std::vector<Vec>& velocity);

PositivePrompt train_stage1(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                            const TrainingSet& ts, const TrainConfig& cfg,
                            LossTrace* trace = nullptr);

NegativePromptSet train_stage2(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                               const TrainingSet& ts, const PositivePrompt& frozen_pos,
                               const TrainConfig& cfg, const LossWeights& weights,
                               LossTrace* trace = nullptr);

std::pair<PositivePrompt, NegativePromptSet> train_joint(const FrozenEncoder& enc,
                                                         const ClassVocabulary& vocab,
                                                         const TrainingSet& ts,
                                                         const TrainConfig& cfg,
                                                         const LossWeights& weights,
                                                         LossTrace* trace = nullptr);

}  // namespace negprompt
