#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "detection.hpp"
#include "rng.hpp"
#include "training.hpp"

using namespace negprompt;

namespace {

// brute-force pairwise AUROC oracle, ties at half weight
double auroc_oracle(const Vec& id_scores, const Vec& ood_scores) {
  double wins = 0.0;
  for (double i : id_scores) {
    for (double o : ood_scores) {
      if (i > o) {
        wins += 1.0;
      } else if (i == o) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size()));
}

SimilarityBlock random_block(Rng& rng, std::size_t k, std::size_t p, double spread = 2.0) {
  SimilarityBlock block;
  block.s_pos = rng.gaussian_vec(k, spread);
  block.s_neg.resize(p);
  for (auto& row : block.s_neg) row = rng.gaussian_vec(k, spread);
  return block;
}

}  // namespace

TEST_CASE("predict_with_negatives symmetry cases") {
  // k=1, p=1, equal similarities: 0.5
  SimilarityBlock half{{2.0}, {{2.0}}, 0.01};
  CHECK(predict_with_negatives(half)[0] == doctest::Approx(0.5).epsilon(1e-12));

  // k=2, p=2, all six equal: each positive probability 1/6
  SimilarityBlock six{{1.0, 1.0}, {{1.0, 1.0}, {1.0, 1.0}}, 0.01};
  const Vec q = predict_with_negatives(six);
  CHECK(q[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("p = 0 reduces exactly to the plain softmax") {
  Rng rng(1, RngStream::Scratch);
  for (int it = 0; it < 1000; ++it) {
    SimilarityBlock block = random_block(rng, 1 + it % 5, 0);
    const Vec reduced = predict_with_negatives(block);
    const Vec plain = softmax_stable(block.s_pos);
    for (std::size_t i = 0; i < plain.size(); ++i) {
      CHECK(std::abs(reduced[i] - plain[i]) < 1e-12);
    }
    CHECK(score(block, ScorerKind::NegPrompt) == score(block, ScorerKind::Mcm));
  }
}

TEST_CASE("full negative-augmented distribution sums to one") {
  Rng rng(2, RngStream::Scratch);
  for (int it = 0; it < 200; ++it) {
    const std::size_t k = 1 + it % 4;
    const std::size_t p = it % 3;
    SimilarityBlock block = random_block(rng, k, p);
    const Vec q_pos = predict_with_negatives(block);
    double total = 0.0;
    for (double v : q_pos) total += v;
    // add the implied negative mass
    Vec joint = block.s_pos;
    for (const auto& row : block.s_neg) joint.insert(joint.end(), row.begin(), row.end());
    const Vec q_all = softmax_stable(joint);
    for (std::size_t j = k; j < q_all.size(); ++j) total += q_all[j];
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("closed-form score: k=1, p=1, s_pos=2, s_neg=0") {
  SimilarityBlock block{{2.0}, {{0.0}}, 1.0};
  // e^2 / (e^2 + 1), frozen from a high-precision evaluation
  CHECK(score(block, ScorerKind::NegPrompt) ==
        doctest::Approx(0.8807970779778823).epsilon(1e-14));
}

TEST_CASE("raising any negative similarity lowers the NegPrompt score") {
  Rng rng(3, RngStream::Scratch);
  for (int it = 0; it < 50; ++it) {
    SimilarityBlock block = random_block(rng, 3, 2);
    const double base = score(block, ScorerKind::NegPrompt);
    SimilarityBlock bumped = block;
    for (auto& row : bumped.s_neg) {
      for (auto& v : row) v += 0.5;
    }
    CHECK(score(bumped, ScorerKind::NegPrompt) < base);
    CHECK(score(bumped, ScorerKind::Mcm) == score(block, ScorerKind::Mcm));

    // raising the maximal positive similarity raises the score
    SimilarityBlock up = block;
    const auto best =
        std::max_element(up.s_pos.begin(), up.s_pos.end()) - up.s_pos.begin();
    up.s_pos[static_cast<std::size_t>(best)] += 0.5;
    CHECK(score(up, ScorerKind::NegPrompt) > base);
  }
}

TEST_CASE("mcm on equal positive sims is 1/k") {
  SimilarityBlock block{{0.7, 0.7}, {}, 0.01};
  CHECK(score(block, ScorerKind::Mcm) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("classify_id argmax with documented tie break") {
  CHECK(classify_id({{0.1, 0.9}, {}, 1.0}) == 1);
  CHECK(classify_id({{0.5, 0.5}, {}, 1.0}) == 0);

  // prediction ignores negatives entirely
  Rng rng(4, RngStream::Scratch);
  for (int it = 0; it < 1000; ++it) {
    SimilarityBlock block = random_block(rng, 4, 2);
    SimilarityBlock no_neg = block;
    no_neg.s_neg.clear();
    CHECK(classify_id(block) == classify_id(no_neg));
  }
}

TEST_CASE("auroc matches hand values and the pairwise oracle") {
  CHECK(auroc({1.0, 0.9}, {0.1, 0.2}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(auroc({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(auroc({0.9, 0.4}, {0.5, 0.1}) == doctest::Approx(0.75).epsilon(1e-15));

  Rng rng(5, RngStream::Scratch);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n_id = 1 + static_cast<std::size_t>(rng.next_u64() % 200);
    const std::size_t n_ood = 1 + static_cast<std::size_t>(rng.next_u64() % 200);
    Vec id(n_id);
    Vec ood(n_ood);
    // quantized scores force plenty of ties
    for (auto& v : id) v = std::floor(rng.uniform() * 20.0) / 20.0;
    for (auto& v : ood) v = std::floor(rng.uniform() * 20.0) / 20.0;
    CHECK(std::abs(auroc(id, ood) - auroc_oracle(id, ood)) < 1e-9);
  }

  CHECK_THROWS_AS(auroc({}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(auroc({1.0}, {}), InvalidArgument);
}

TEST_CASE("auroc and fpr95 are invariant to positive scaling") {
  Rng rng(6, RngStream::Scratch);
  Vec id(50);
  Vec ood(70);
  for (auto& v : id) v = rng.uniform() + 0.2;
  for (auto& v : ood) v = rng.uniform();
  const double a = auroc(id, ood);
  const double f = fpr_at_tpr(id, ood);
  Vec id3 = id;
  Vec ood3 = ood;
  for (auto& v : id3) v *= 3.0;
  for (auto& v : ood3) v *= 3.0;
  CHECK(auroc(id3, ood3) == doctest::Approx(a).epsilon(1e-12));
  CHECK(fpr_at_tpr(id3, ood3) == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("fpr_at_tpr nearest-rank rule") {
  // perfect separation
  CHECK(fpr_at_tpr({0.9, 0.8, 0.7}, {0.1, 0.2}) == 0.0);

  // hand evaluation: 100 ID copies of 1.0, OOD {1.0, 0.0} -> threshold 1.0
  Vec id(100, 1.0);
  CHECK(fpr_at_tpr(id, {1.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(fpr_at_tpr({}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(fpr_at_tpr({1.0}, {1.0}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(fpr_at_tpr({1.0}, {1.0}, 1.5), InvalidArgument);
}

TEST_CASE("fpr_at_tpr on same-distribution scores sits near 0.95") {
  for (uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull}) {
    Rng rng(seed, RngStream::Scratch);
    Vec id(10000);
    Vec ood(10000);
    for (auto& v : id) v = rng.uniform();
    for (auto& v : ood) v = rng.uniform();
    const double f = fpr_at_tpr(id, ood);
    CHECK(f > 0.93);
    CHECK(f < 0.97);
  }
}

namespace {

struct TrainedWorld {
  World world;
  Checkpoint ckpt;
};

TrainedWorld trained_fixture(uint64_t seed) {
  WorldConfig wc;
  wc.seed = seed;
  wc.id_classes = 6;
  wc.ood_classes = 4;
  wc.shots_per_class = 4;
  wc.test_per_class = 10;
  wc.dims = {8, 6, 10, 5};
  TrainedWorld tw{generate_world(wc), {}};
  TrainConfig tc;
  tc.seed = seed;
  tc.context_len = 4;
  tc.stage1_epochs = 30;
  tc.stage2_epochs = 10;
  tc.tau = 0.05;
  tc.learning_rate = 0.05;
  const TrainingSet ts =
      resolve_training_set(tw.world.train, tw.world.vocab, tw.world.vocab.id_indices());
  tw.ckpt.positive = train_stage1(tw.world.encoder, tw.world.vocab, ts, tc);
  tw.ckpt.negatives =
      train_stage2(tw.world.encoder, tw.world.vocab, ts, tw.ckpt.positive, tc, {0.1, 0.05});
  tw.ckpt.tau = tc.tau;
  tw.ckpt.encoder_fingerprint = tw.world.encoder.fingerprint();
  tw.ckpt.trained_classes = ts.class_names;
  return tw;
}

}  // namespace

TEST_CASE("open_vocab_expand: identity on trained classes, growth on expansion") {
  const TrainedWorld tw = trained_fixture(0);

  const ExpandedFeatures trained =
      open_vocab_expand(tw.ckpt, tw.world.encoder, tw.world.vocab, false);
  CHECK(trained.positive.size() == 6);
  CHECK(trained.negative.size() == 2);

  // expanding over the same class set reproduces features bit-for-bit
  const ExpandedFeatures again =
      open_vocab_expand(tw.ckpt, tw.world.encoder, tw.world.vocab, false);
  CHECK(again.positive == trained.positive);
  CHECK(again.negative == trained.negative);

  // a checkpoint trained on fewer classes expands to the full ID set
  Checkpoint subset = tw.ckpt;
  subset.trained_classes.resize(2);
  const ExpandedFeatures narrow =
      open_vocab_expand(subset, tw.world.encoder, tw.world.vocab, false);
  const ExpandedFeatures wide = open_vocab_expand(subset, tw.world.encoder, tw.world.vocab, true);
  CHECK(narrow.positive.size() == 2);
  CHECK(wide.positive.size() == 6);
  for (std::size_t i = 0; i < 2; ++i) CHECK(wide.positive[i] == narrow.positive[i]);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(wide.negative[l].size() == 6);
    for (std::size_t i = 0; i < 2; ++i) CHECK(wide.negative[l][i] == narrow.negative[l][i]);
  }

  // wrong encoder is rejected
  Checkpoint bad = tw.ckpt;
  bad.encoder_fingerprint ^= 1;
  CHECK_THROWS_AS(open_vocab_expand(bad, tw.world.encoder, tw.world.vocab, false),
                  FingerprintMismatch);
}

TEST_CASE("evaluate produces a fully populated in-range report") {
  const TrainedWorld tw = trained_fixture(1);
  EvalOptions opts;
  opts.scorer = ScorerKind::NegPrompt;
  opts.beta = 0.1;
  opts.gamma = 0.05;
  opts.seed = 1;
  const DetectionReport report = evaluate(tw.world.encoder, tw.world.vocab, tw.ckpt,
                                          tw.world.id_test, tw.world.ood_test, opts);
  CHECK(report.auroc_value >= 0.0);
  CHECK(report.auroc_value <= 1.0);
  CHECK(report.fpr95 >= 0.0);
  CHECK(report.fpr95 <= 1.0);
  CHECK(report.top1_accuracy >= 0.0);
  CHECK(report.top1_accuracy <= 1.0);
  CHECK(report.k_train == 6);
  CHECK(report.k_eval == 6);
  CHECK(report.p == 2);
  CHECK(report.id_scores.size() == tw.world.id_test.size());
  CHECK(report.ood_scores.size() == tw.world.ood_test.size());
  CHECK(std::isfinite(report.id_mean_max_pos_sim));
  CHECK(std::isfinite(report.ood_mean_max_neg_sim));

  const std::string header = DetectionReport::csv_header();
  CHECK(header.substr(0, 7) == "scorer,");
  const std::string row = report.csv_row();
  CHECK(row.substr(0, 10) == "negprompt,");
  CHECK(std::count(row.begin(), row.end(), ',') ==
        std::count(header.begin(), header.end(), ','));
}

TEST_CASE("mcm report equals the p=0 NegPrompt path") {
  const TrainedWorld tw = trained_fixture(2);
  Checkpoint no_negs = tw.ckpt;
  no_negs.negatives.contexts.clear();

  EvalOptions mcm_opts;
  mcm_opts.scorer = ScorerKind::Mcm;
  EvalOptions neg_opts;
  neg_opts.scorer = ScorerKind::NegPrompt;

  const DetectionReport mcm = evaluate(tw.world.encoder, tw.world.vocab, tw.ckpt,
                                       tw.world.id_test, tw.world.ood_test, mcm_opts);
  const DetectionReport reduced = evaluate(tw.world.encoder, tw.world.vocab, no_negs,
                                           tw.world.id_test, tw.world.ood_test, neg_opts);
  CHECK(mcm.id_scores == reduced.id_scores);
  CHECK(mcm.ood_scores == reduced.ood_scores);
  CHECK(mcm.auroc_value == reduced.auroc_value);
  CHECK(mcm.fpr95 == reduced.fpr95);
  CHECK(mcm.top1_accuracy == reduced.top1_accuracy);
}

TEST_CASE("predictions are identical with and without negative prompts") {
  const TrainedWorld tw = trained_fixture(3);
  Checkpoint no_negs = tw.ckpt;
  no_negs.negatives.contexts.clear();

  EvalOptions opts;
  opts.scorer = ScorerKind::NegPrompt;
  const DetectionReport with = evaluate(tw.world.encoder, tw.world.vocab, tw.ckpt,
                                        tw.world.id_test, tw.world.ood_test, opts);
  opts.scorer = ScorerKind::Mcm;
  const DetectionReport without = evaluate(tw.world.encoder, tw.world.vocab, no_negs,
                                           tw.world.id_test, tw.world.ood_test, opts);
  CHECK(with.id_predictions == without.id_predictions);
  CHECK(with.top1_accuracy == without.top1_accuracy);
}

TEST_CASE("evaluation is thread-count independent") {
  const TrainedWorld tw = trained_fixture(4);
  EvalOptions opts;

  setenv("NEGPROMPT_THREADS", "1", 1);
  const DetectionReport serial = evaluate(tw.world.encoder, tw.world.vocab, tw.ckpt,
                                          tw.world.id_test, tw.world.ood_test, opts);
  setenv("NEGPROMPT_THREADS", "7", 1);
  const DetectionReport parallel = evaluate(tw.world.encoder, tw.world.vocab, tw.ckpt,
                                            tw.world.id_test, tw.world.ood_test, opts);
  unsetenv("NEGPROMPT_THREADS");
  CHECK(serial.id_scores == parallel.id_scores);
  CHECK(serial.ood_scores == parallel.ood_scores);
  CHECK(serial.auroc_value == parallel.auroc_value);
}
