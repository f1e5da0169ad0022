#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prompts.hpp"
#include "world.hpp"

namespace negprompt {

// Per-image temperature-scaled similarities to every positive and negative
// class feature. s_neg is prompt-major: row l holds the k similarities of
// negative prompt l. p = 0 degenerates to the plain max-softmax baseline.
struct SimilarityBlock {
  Vec s_pos;                // k entries, already divided by tau
  std::vector<Vec> s_neg;   // p rows of k entries
  double tau = 0.01;

  std::size_t k() const { return s_pos.size(); }
  std::size_t p() const { return s_neg.size(); }
};

enum class ScorerKind {
  Mcm,        // max softmax over positive similarities only
  NegPrompt,  // max negative-augmented probability
};

const char* scorer_name(ScorerKind s);
ScorerKind parse_scorer(const std::string& name);

// Negative-augmented class probabilities:
//   P(y=i|x) = exp(s_pos_i) / (sum_j exp(s_pos_j) + sum_{l,j} exp(s_neg_{l,j}))
// computed under a joint log-sum-exp shift. The k returned entries are the
// positive-class portion of a distribution over k + k*p slots; with p = 0
// they form the plain softmax.
Vec predict_with_negatives(const SimilarityBlock& block);

// ID-ness score, higher = more ID-like. The NegPrompt scorer with p = 0
// reduces exactly to the Mcm baseline.
double score(const SimilarityBlock& block, ScorerKind scorer);

// argmax over positive similarities; ties break toward the lowest index.
// Unaffected by negative prompts (shared denominator).
std::size_t classify_id(const SimilarityBlock& block);

// Mann-Whitney AUROC: fraction of (ID, OOD) pairs with the ID score higher,
// ties at half weight. Computed via average ranks.
double auroc(const Vec& id_scores, const Vec& ood_scores);

// False positive rate at the threshold retaining `tpr` of the ID scores:
// the threshold is the ceil((1-tpr)*N)-th smallest ID score (nearest rank)
// and OOD scores >= threshold count as false positives.
double fpr_at_tpr(const Vec& id_scores, const Vec& ood_scores, double tpr = 0.95);

// Trained-context class features recomputed over a class set (the trained
// classes, or every ID class in the vocabulary when expand_to_all_id).
struct ExpandedFeatures {
  std::vector<std::size_t> class_indices;  // vocabulary indices
  std::vector<std::string> class_names;
  std::vector<Vec> positive;               // k features
  std::vector<std::vector<Vec>> negative;  // p x k features
};
ExpandedFeatures open_vocab_expand(const Checkpoint& ckpt, const FrozenEncoder& enc,
                                   const ClassVocabulary& vocab, bool expand_to_all_id);

struct DetectionReport {
  ScorerKind scorer = ScorerKind::NegPrompt;
  bool open_vocab = false;
  std::size_t k_train = 0;
  std::size_t k_eval = 0;
  std::size_t p = 0;
  double beta = 0.0;
  double gamma = 0.0;
  uint64_t seed = 0;

  double auroc_value = 0.0;
  double fpr95 = 0.0;
  double top1_accuracy = 0.0;
  double id_mean_max_pos_sim = 0.0;
  double id_mean_max_neg_sim = 0.0;
  double ood_mean_max_pos_sim = 0.0;
  double ood_mean_max_neg_sim = 0.0;

  Vec id_scores;
  Vec ood_scores;
  std::vector<std::size_t> id_predictions;

  static std::string csv_header();
  std::string csv_row() const;
};

struct EvalOptions {
  ScorerKind scorer = ScorerKind::NegPrompt;
  bool open_vocab = false;
  // provenance echoed into the report row
  double beta = 0.1;
  double gamma = 0.05;
  uint64_t seed = 0;
};

DetectionReport evaluate(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                         const Checkpoint& ckpt, const LabeledFeatureSet& id_test,
                         const LabeledFeatureSet& ood_test, const EvalOptions& options);

// All prompt and image features as CSV, for external plotting.
void dump_features_csv(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                       const Checkpoint& ckpt, const LabeledFeatureSet& id_test,
                       const LabeledFeatureSet& ood_test, bool open_vocab,
                       const std::string& path);

}  // namespace negprompt
