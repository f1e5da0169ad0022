#include "detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "parallel.hpp"

namespace negprompt {

namespace {

constexpr double kNearestRankEps = 1e-9;  // guards ceil() against f64 rounding in (1-tpr)*N

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

const char* scorer_name(ScorerKind s) {
  return s == ScorerKind::Mcm ? "mcm" : "negprompt";
}

ScorerKind parse_scorer(const std::string& name) {
  if (name == "mcm") return ScorerKind::Mcm;
  if (name == "negprompt") return ScorerKind::NegPrompt;
  throw InvalidArgument("unknown scorer '" + name + "' (expected mcm or negprompt)");
}

Vec predict_with_negatives(const SimilarityBlock& block) {
  const std::size_t k = block.k();
  if (k == 0) throw InvalidArgument("similarity block has no classes");
  Vec joint;
  joint.reserve(k + block.p() * k);
  joint.insert(joint.end(), block.s_pos.begin(), block.s_pos.end());
  for (const auto& row : block.s_neg) {
    if (row.size() != k) throw InvalidArgument("negative similarity row length mismatch");
    joint.insert(joint.end(), row.begin(), row.end());
  }
  const Vec q = softmax_stable(joint);
  return Vec(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(k));
}

double score(const SimilarityBlock& block, ScorerKind scorer) {
  if (scorer == ScorerKind::Mcm) {
    const Vec probs = softmax_stable(block.s_pos);
    return *std::max_element(probs.begin(), probs.end());
  }
  const Vec probs = predict_with_negatives(block);
  return *std::max_element(probs.begin(), probs.end());
}

std::size_t classify_id(const SimilarityBlock& block) {
  if (block.k() == 0) throw InvalidArgument("similarity block has no classes");
  std::size_t best = 0;
  for (std::size_t i = 1; i < block.k(); ++i) {
    if (block.s_pos[i] > block.s_pos[best]) best = i;
  }
  return best;
}

double auroc(const Vec& id_scores, const Vec& ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw InvalidArgument("auroc: both score sets must be non-empty");
  }
  struct Entry {
    double score;
    bool is_id;
  };
  std::vector<Entry> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) all.push_back({s, true});
  for (double s : ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // average ranks over tie groups, then the rank-sum statistic
  double id_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_id) id_rank_sum += avg_rank;
    }
    i = j;
  }
  const double n_id = static_cast<double>(id_scores.size());
  const double n_ood = static_cast<double>(ood_scores.size());
  return (id_rank_sum - n_id * (n_id + 1.0) / 2.0) / (n_id * n_ood);
}

double fpr_at_tpr(const Vec& id_scores, const Vec& ood_scores, double tpr) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw InvalidArgument("fpr_at_tpr: both score sets must be non-empty");
  }
  if (!(tpr > 0.0) || tpr > 1.0) throw InvalidArgument("fpr_at_tpr: tpr must be in (0,1]");
  Vec sorted = id_scores;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - tpr) * n - kNearestRankEps));
  if (rank < 1) rank = 1;
  const double threshold = sorted[rank - 1];
  std::size_t fp = 0;
  for (double s : ood_scores) {
    if (s >= threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

ExpandedFeatures open_vocab_expand(const Checkpoint& ckpt, const FrozenEncoder& enc,
                                   const ClassVocabulary& vocab, bool expand_to_all_id) {
  if (ckpt.encoder_fingerprint != enc.fingerprint()) {
    throw FingerprintMismatch(enc.fingerprint(), ckpt.encoder_fingerprint);
  }
  ExpandedFeatures out;
  if (expand_to_all_id) {
    out.class_indices = vocab.id_indices();
  } else {
    for (const auto& name : ckpt.trained_classes) {
      const auto idx = vocab.find(name);
      if (idx < 0) {
        throw InvalidArgument("trained class '" + name + "' is missing from the vocabulary");
      }
      out.class_indices.push_back(static_cast<std::size_t>(idx));
    }
  }
  if (out.class_indices.empty()) throw InvalidArgument("no classes to evaluate");
  for (std::size_t idx : out.class_indices) out.class_names.push_back(vocab.entries[idx].name);

  out.positive = compute_class_features(enc, ckpt.positive.context, vocab, out.class_indices);
  for (const auto& ctx : ckpt.negatives.contexts) {
    out.negative.push_back(compute_class_features(enc, ctx, vocab, out.class_indices));
  }
  return out;
}

std::string DetectionReport::csv_header() {
  return "scorer,open_vocab,k_train,k_eval,p,beta,gamma,seed,auroc,fpr95,top1_acc,"
         "id_mean_max_pos_sim,id_mean_max_neg_sim,ood_mean_max_pos_sim,ood_mean_max_neg_sim";
}

std::string DetectionReport::csv_row() const {
  std::string row;
  row += scorer_name(scorer);
  row += ',';
  row += open_vocab ? "true" : "false";
  row += ',' + std::to_string(k_train);
  row += ',' + std::to_string(k_eval);
  row += ',' + std::to_string(p);
  row += ',' + fmt(beta);
  row += ',' + fmt(gamma);
  row += ',' + std::to_string(seed);
  row += ',' + fmt(auroc_value);
  row += ',' + fmt(fpr95);
  row += ',' + fmt(top1_accuracy);
  row += ',' + fmt(id_mean_max_pos_sim);
  row += ',' + fmt(id_mean_max_neg_sim);
  row += ',' + fmt(ood_mean_max_pos_sim);
  row += ',' + fmt(ood_mean_max_neg_sim);
  return row;
}

namespace {

struct SampleStats {
  double score = 0.0;
  double max_pos_sim = 0.0;
  double max_neg_sim = 0.0;
  std::size_t prediction = 0;
};

// Per-sample scoring over immutable model state; safe to run in parallel.
void eval_samples(const ExpandedFeatures& feats, const LabeledFeatureSet& samples, double tau,
                  ScorerKind scorer, std::vector<SampleStats>& out) {
  const std::size_t k = feats.positive.size();
  const std::size_t p = feats.negative.size();
  out.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t idx) {
    const Vec& img = samples.features[idx];
    SimilarityBlock block;
    block.tau = tau;
    block.s_pos.resize(k);
    double max_pos = -2.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double sim = cosine_sim(feats.positive[i], img);
      max_pos = std::max(max_pos, sim);
      block.s_pos[i] = sim / tau;
    }
    double max_neg = std::numeric_limits<double>::quiet_NaN();
    if (p > 0) {
      max_neg = -2.0;
      block.s_neg.assign(p, Vec(k));
      for (std::size_t l = 0; l < p; ++l) {
        for (std::size_t i = 0; i < k; ++i) {
          const double sim = cosine_sim(feats.negative[l][i], img);
          max_neg = std::max(max_neg, sim);
          block.s_neg[l][i] = sim / tau;
        }
      }
    }
    SampleStats s;
    s.score = score(block, scorer);
    s.max_pos_sim = max_pos;
    s.max_neg_sim = max_neg;
    s.prediction = classify_id(block);
    out[idx] = s;
  });
}

double mean_of(const std::vector<SampleStats>& stats, double SampleStats::* field) {
  double sum = 0.0;
  for (const auto& s : stats) sum += s.*field;
  return stats.empty() ? 0.0 : sum / static_cast<double>(stats.size());
}

}  // namespace

DetectionReport evaluate(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                         const Checkpoint& ckpt, const LabeledFeatureSet& id_test,
                         const LabeledFeatureSet& ood_test, const EvalOptions& options) {
  if (id_test.feature_dim != enc.dims().feature_dim ||
      ood_test.feature_dim != enc.dims().feature_dim) {
    throw InvalidArgument("test bundle feature dimension does not match the encoder");
  }
  const ExpandedFeatures feats = open_vocab_expand(ckpt, enc, vocab, options.open_vocab);

  std::vector<SampleStats> id_stats;
  std::vector<SampleStats> ood_stats;
  eval_samples(feats, id_test, ckpt.tau, options.scorer, id_stats);
  eval_samples(feats, ood_test, ckpt.tau, options.scorer, ood_stats);

  DetectionReport report;
  report.scorer = options.scorer;
  report.open_vocab = options.open_vocab;
  report.k_train = ckpt.trained_classes.size();
  report.k_eval = feats.class_indices.size();
  report.p = ckpt.p();
  report.beta = options.beta;
  report.gamma = options.gamma;
  report.seed = options.seed;

  report.id_scores.reserve(id_stats.size());
  for (const auto& s : id_stats) report.id_scores.push_back(s.score);
  report.ood_scores.reserve(ood_stats.size());
  for (const auto& s : ood_stats) report.ood_scores.push_back(s.score);

  // top-1 accuracy over the ID test set; records whose true class is not in
  // the evaluated class set count as misses
  std::unordered_map<std::string, std::size_t> slot_of;
  for (std::size_t i = 0; i < feats.class_names.size(); ++i) slot_of[feats.class_names[i]] = i;
  std::size_t hits = 0;
  report.id_predictions.reserve(id_stats.size());
  for (std::size_t idx = 0; idx < id_stats.size(); ++idx) {
    report.id_predictions.push_back(id_stats[idx].prediction);
    const std::string& truth = id_test.label_names[id_test.labels[idx]];
    const auto it = slot_of.find(truth);
    if (it != slot_of.end() && it->second == id_stats[idx].prediction) ++hits;
  }
  report.top1_accuracy =
      id_stats.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(id_stats.size());

  report.auroc_value = auroc(report.id_scores, report.ood_scores);
  report.fpr95 = fpr_at_tpr(report.id_scores, report.ood_scores, 0.95);
  report.id_mean_max_pos_sim = mean_of(id_stats, &SampleStats::max_pos_sim);
  report.id_mean_max_neg_sim = mean_of(id_stats, &SampleStats::max_neg_sim);
  report.ood_mean_max_pos_sim = mean_of(ood_stats, &SampleStats::max_pos_sim);
  report.ood_mean_max_neg_sim = mean_of(ood_stats, &SampleStats::max_neg_sim);
  return report;
}

void dump_features_csv(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                       const Checkpoint& ckpt, const LabeledFeatureSet& id_test,
                       const LabeledFeatureSet& ood_test, bool open_vocab,
                       const std::string& path) {
  const ExpandedFeatures feats = open_vocab_expand(ckpt, enc, vocab, open_vocab);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "kind,label,prompt";
  for (std::size_t d = 0; d < enc.dims().feature_dim; ++d) out << ",f" << d;
  out << '\n';
  auto write_row = [&out](const char* kind, const std::string& label, const std::string& prompt,
                          const Vec& f) {
    out << kind << ',' << label << ',' << prompt;
    for (double v : f) out << ',' << fmt(v);
    out << '\n';
  };
  for (std::size_t i = 0; i < feats.positive.size(); ++i) {
    write_row("pos_prompt", feats.class_names[i], "", feats.positive[i]);
  }
  for (std::size_t l = 0; l < feats.negative.size(); ++l) {
    for (std::size_t i = 0; i < feats.negative[l].size(); ++i) {
      write_row("neg_prompt", feats.class_names[i], std::to_string(l), feats.negative[l][i]);
    }
  }
  for (std::size_t r = 0; r < id_test.size(); ++r) {
    write_row("image_id", id_test.label_names[id_test.labels[r]], "", id_test.features[r]);
  }
  for (std::size_t r = 0; r < ood_test.size(); ++r) {
    write_row("image_ood", ood_test.label_names[ood_test.labels[r]], "", ood_test.features[r]);
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace negprompt
