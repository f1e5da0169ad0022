// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria marked "experiment" train on the default synthetic world
// (20 ID + 20 OOD classes, 16-shot, sigma 0.15, hardness 0.5, p=2,
// beta=0.1, gamma=0.05) over seeds {0,1,2}.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "detection.hpp"
#include "encoder.hpp"
#include "prompts.hpp"
#include "rng.hpp"
#include "support/finite_diff.hpp"
#include "training.hpp"
#include "world.hpp"

using namespace negprompt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

Outcome gradient_oracle() {
  const auto start = Clock::now();
  double worst = 0.0;
  const double tau = 0.5;

  for (auto kind : {EncoderKind::LinearMean, EncoderKind::TanhMlp}) {
    Rng pick(kind == EncoderKind::LinearMean ? 101 : 202, RngStream::Scratch);
    for (int instance = 0; instance < 3; ++instance) {
      const std::size_t k = 1 + pick.next_u64() % 3;
      const std::size_t p = 1 + pick.next_u64() % 2;
      const std::size_t n = 1 + pick.next_u64() % 3;

      WorldConfig wc;
      wc.seed = pick.next_u64();
      wc.id_classes = k;
      wc.ood_classes = 1;
      wc.shots_per_class = 2;
      wc.test_per_class = 1;
      wc.noise_sigma = 0.25;
      wc.encoder_kind = kind;
      wc.dims = {5, 4, 6, n + 1};
      const World world = generate_world(wc);
      const TrainingSet ts =
          resolve_training_set(world.train, world.vocab, world.vocab.id_indices());
      std::vector<std::size_t> batch(ts.size());
      for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;

      const PositivePrompt pos = init_positive(wc.seed + 1, n, 5);
      const auto pos_feats =
          compute_class_features(world.encoder, pos.context, world.vocab, ts.class_indices);
      const auto negs = jitter_contexts(pos.context, p, 0.05, wc.seed + 2);

      // L_positive
      {
        const auto obj =
            positive_objective(world.encoder, world.vocab, ts, batch, pos.context, tau);
        const auto fd = testing::fd_context_gradient(
            {pos.context}, [&](const std::vector<PromptContext>& c) {
              return positive_objective(world.encoder, world.vocab, ts, batch, c[0], tau).loss;
            });
        worst = std::max(worst, testing::max_rel_error({obj.context_grad}, fd));
      }
      // L_NIS, L_NPD, L_NND, L_total through the negative objective
      struct Sel {
        double nis;
        LossWeights w;
      };
      for (const Sel& sel : {Sel{1.0, {0.0, 0.0}}, Sel{0.0, {1.0, 0.0}}, Sel{0.0, {0.0, 1.0}},
                             Sel{1.0, {0.1, 0.05}}}) {
        const auto obj = negative_objective(world.encoder, world.vocab, ts, batch, pos_feats,
                                            negs, tau, sel.w, sel.nis);
        const auto fd = testing::fd_context_gradient(
            negs, [&](const std::vector<PromptContext>& c) {
              return negative_objective(world.encoder, world.vocab, ts, batch, pos_feats, c, tau,
                                        sel.w, sel.nis)
                  .total;
            });
        worst = std::max(worst, testing::max_rel_error(obj.context_grads, fd));
      }
    }
  }
  const double elapsed = seconds_since(start);
  Outcome out;
  out.pass = worst < 1e-5 && elapsed < 10.0;
  out.detail = "max_rel_error=" + fmt("%.3e", worst) + ", elapsed=" + fmt("%.2f", elapsed) + "s";
  return out;
}

// ---------------------------------------------------------------- criterion 2

Outcome closed_form_losses() {
  double worst = 0.0;
  auto record = [&worst](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
  };

  // L_NIS = ln(k*p) under equal similarities
  for (std::size_t k : {1u, 2u, 3u}) {
    for (std::size_t p : {1u, 2u, 4u}) {
      const Vec flat(k * p, 0.37);
      record(nis_loss({flat}).loss, std::log(static_cast<double>(k * p)));
    }
  }

  // coincident / orthogonal feature layouts
  auto unit = [](std::size_t dim, std::size_t axis) {
    Vec v(dim, 0.0);
    v[axis] = 1.0;
    return v;
  };
  const std::vector<Vec> pos{unit(6, 0), unit(6, 1), unit(6, 2)};
  record(npd_loss({pos, pos}, pos).loss, -1.0);
  record(nnd_loss({pos, pos}).loss, 1.0);
  record(nnd_loss({pos}).loss, 0.0);

  Outcome out;
  out.pass = worst < 1e-9;
  out.detail = "max_abs_error=" + fmt("%.3e", worst);
  return out;
}

// ---------------------------------------------------------------- criterion 3

Outcome reduction_identities() {
  Rng rng(33, RngStream::Scratch);
  double worst = 0.0;
  bool scores_match = true;
  for (int it = 0; it < 1000; ++it) {
    const std::size_t k = 1 + rng.next_u64() % 6;
    SimilarityBlock block;
    block.tau = 0.01;
    block.s_pos = rng.gaussian_vec(k, 30.0);
    const Vec reduced = predict_with_negatives(block);
    const Vec plain = softmax_stable(block.s_pos);
    for (std::size_t i = 0; i < k; ++i) {
      worst = std::max(worst, std::abs(reduced[i] - plain[i]));
    }
    if (score(block, ScorerKind::NegPrompt) != score(block, ScorerKind::Mcm)) {
      scores_match = false;
    }
  }
  Outcome out;
  out.pass = worst < 1e-12 && scores_match;
  out.detail = "max_abs_diff=" + fmt("%.3e", worst) +
               std::string(scores_match ? ", p=0 score == mcm score" : ", SCORE MISMATCH");
  return out;
}

// ------------------------------------------------------- shared experiments

struct SeedRun {
  DetectionReport negprompt;
  DetectionReport mcm;
  DetectionReport one_stage;
  DetectionReport open_vocab;
  double train_eval_seconds = 0.0;
};

SeedRun run_default_world(uint64_t seed) {
  const auto start = Clock::now();
  ExperimentConfig cfg;  // spec defaults
  cfg.seed = seed;

  const World world = generate_world(cfg.world_config());
  const auto id_all = world.vocab.id_indices();
  const TrainingSet ts_full = resolve_training_set(world.train, world.vocab, id_all);
  const TrainConfig tc = cfg.train_config();
  const LossWeights weights = cfg.loss_weights();

  EvalOptions opts;
  opts.beta = cfg.beta;
  opts.gamma = cfg.gamma;
  opts.seed = seed;

  SeedRun run;

  // two-stage
  Checkpoint two_stage;
  two_stage.positive = train_stage1(world.encoder, world.vocab, ts_full, tc);
  two_stage.negatives =
      train_stage2(world.encoder, world.vocab, ts_full, two_stage.positive, tc, weights);
  two_stage.tau = tc.tau;
  two_stage.encoder_fingerprint = world.encoder.fingerprint();
  two_stage.trained_classes = ts_full.class_names;

  opts.scorer = ScorerKind::NegPrompt;
  run.negprompt =
      evaluate(world.encoder, world.vocab, two_stage, world.id_test, world.ood_test, opts);
  opts.scorer = ScorerKind::Mcm;
  run.mcm = evaluate(world.encoder, world.vocab, two_stage, world.id_test, world.ood_test, opts);

  // one-stage ablation
  Checkpoint joint;
  auto [jpos, jnegs] = train_joint(world.encoder, world.vocab, ts_full, tc, weights);
  joint.positive = std::move(jpos);
  joint.negatives = std::move(jnegs);
  joint.tau = tc.tau;
  joint.encoder_fingerprint = world.encoder.fingerprint();
  joint.trained_classes = ts_full.class_names;
  opts.scorer = ScorerKind::NegPrompt;
  run.one_stage =
      evaluate(world.encoder, world.vocab, joint, world.id_test, world.ood_test, opts);

  // open-vocabulary: train on the first 10% of ID classes, evaluate on all
  std::vector<std::size_t> subset(id_all.begin(),
                                  id_all.begin() + static_cast<std::ptrdiff_t>(
                                                       cfg.open_vocab_class_count()));
  const TrainingSet ts_sub = resolve_training_set(world.train, world.vocab, subset);
  Checkpoint ov;
  ov.positive = train_stage1(world.encoder, world.vocab, ts_sub, tc);
  ov.negatives = train_stage2(world.encoder, world.vocab, ts_sub, ov.positive, tc, weights);
  ov.tau = tc.tau;
  ov.encoder_fingerprint = world.encoder.fingerprint();
  ov.trained_classes = ts_sub.class_names;
  opts.scorer = ScorerKind::NegPrompt;
  opts.open_vocab = true;
  run.open_vocab = evaluate(world.encoder, world.vocab, ov, world.id_test, world.ood_test, opts);

  run.train_eval_seconds = seconds_since(start);
  return run;
}

// ---------------------------------------------------------------- criterion 4

Outcome argmax_invariance(const std::vector<SeedRun>& runs) {
  bool pass = true;
  for (const auto& run : runs) {
    if (run.negprompt.id_predictions != run.mcm.id_predictions) pass = false;
    if (run.negprompt.top1_accuracy != run.mcm.top1_accuracy) pass = false;
  }
  Outcome out;
  out.pass = pass;
  out.detail = pass ? "ID predictions bit-identical with and without negative prompts"
                    : "predictions diverged";
  return out;
}

// ---------------------------------------------------------------- criterion 5

Outcome metric_oracles() {
  // auroc vs brute-force pairwise counting
  Rng rng(55, RngStream::Scratch);
  double worst = 0.0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t n_id = 1 + rng.next_u64() % 200;
    const std::size_t n_ood = 1 + rng.next_u64() % 200;
    Vec id(n_id);
    Vec ood(n_ood);
    for (auto& v : id) v = std::floor(rng.uniform() * 25.0) / 25.0;
    for (auto& v : ood) v = std::floor(rng.uniform() * 25.0) / 25.0;
    double wins = 0.0;
    for (double i : id) {
      for (double o : ood) wins += i > o ? 1.0 : (i == o ? 0.5 : 0.0);
    }
    const double oracle = wins / (static_cast<double>(n_id) * static_cast<double>(n_ood));
    worst = std::max(worst, std::abs(auroc(id, ood) - oracle));
  }

  // fpr95 on same-distribution scores
  double fpr_lo = 1.0;
  double fpr_hi = 0.0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(seed, RngStream::Scratch, 999);
    Vec id(10000);
    Vec ood(10000);
    for (auto& v : id) v = r.uniform();
    for (auto& v : ood) v = r.uniform();
    const double f = fpr_at_tpr(id, ood);
    fpr_lo = std::min(fpr_lo, f);
    fpr_hi = std::max(fpr_hi, f);
  }

  Outcome out;
  out.pass = worst < 1e-9 && fpr_lo >= 0.93 && fpr_hi <= 0.97;
  out.detail = "auroc_max_err=" + fmt("%.3e", worst) + ", fpr95 range [" + fmt("%.4f", fpr_lo) +
               ", " + fmt("%.4f", fpr_hi) + "]";
  return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome end_to_end_detection(const std::vector<SeedRun>& runs) {
  double neg_auroc = 0.0;
  double mcm_auroc = 0.0;
  double neg_fpr = 0.0;
  double mcm_fpr = 0.0;
  double slowest = 0.0;
  for (const auto& run : runs) {
    neg_auroc += run.negprompt.auroc_value / static_cast<double>(runs.size());
    mcm_auroc += run.mcm.auroc_value / static_cast<double>(runs.size());
    neg_fpr += run.negprompt.fpr95 / static_cast<double>(runs.size());
    mcm_fpr += run.mcm.fpr95 / static_cast<double>(runs.size());
    slowest = std::max(slowest, run.train_eval_seconds);
  }
  Outcome out;
  out.pass = neg_auroc >= mcm_auroc + 0.01 && neg_fpr < mcm_fpr && slowest < 60.0;
  out.detail = "auroc negprompt=" + fmt("%.4f", neg_auroc) + " vs mcm=" + fmt("%.4f", mcm_auroc) +
               ", fpr95 " + fmt("%.4f", neg_fpr) + " vs " + fmt("%.4f", mcm_fpr) +
               ", slowest_seed=" + fmt("%.1f", slowest) + "s";
  return out;
}

// ---------------------------------------------------------------- criterion 7

Outcome two_stage_vs_one_stage(const std::vector<SeedRun>& runs) {
  double two = 0.0;
  double one = 0.0;
  for (const auto& run : runs) {
    two += run.negprompt.auroc_value / static_cast<double>(runs.size());
    one += run.one_stage.auroc_value / static_cast<double>(runs.size());
  }
  Outcome out;
  out.pass = two >= one;
  out.detail = "two_stage=" + fmt("%.4f", two) + ", one_stage=" + fmt("%.4f", one);
  return out;
}

// ---------------------------------------------------------------- criterion 8

Outcome open_vocab_drop(const std::vector<SeedRun>& runs) {
  double full = 0.0;
  double open = 0.0;
  for (const auto& run : runs) {
    full += run.negprompt.auroc_value / static_cast<double>(runs.size());
    open += run.open_vocab.auroc_value / static_cast<double>(runs.size());
  }
  const double drop = full - open;
  Outcome out;
  out.pass = drop <= 0.05;
  out.detail = "full=" + fmt("%.4f", full) + ", open_vocab(10%)=" + fmt("%.4f", open) +
               ", drop=" + fmt("%.4f", drop);
  return out;
}

// ---------------------------------------------------------------- criterion 9

Outcome similarity_pattern(const std::vector<SeedRun>& runs) {
  bool pass = true;
  std::string detail;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto& r = runs[s].negprompt;
    const bool id_ok = r.id_mean_max_pos_sim > r.id_mean_max_neg_sim;
    const bool ood_ok = r.ood_mean_max_neg_sim > r.ood_mean_max_pos_sim;
    pass = pass && id_ok && ood_ok;
    if (s > 0) detail += "; ";
    detail += "seed" + std::to_string(s) + " id(pos " + fmt("%.3f", r.id_mean_max_pos_sim) +
              " vs neg " + fmt("%.3f", r.id_mean_max_neg_sim) + ") ood(pos " +
              fmt("%.3f", r.ood_mean_max_pos_sim) + " vs neg " +
              fmt("%.3f", r.ood_mean_max_neg_sim) + ")";
  }
  Outcome out;
  out.pass = pass;
  out.detail = detail;
  return out;
}

// --------------------------------------------------------------- criterion 10

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void corrupt_magic(const std::string& path) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.write("ZZZZ", 4);
}

Outcome determinism_and_formats() {
  const fs::path dir = fs::temp_directory_path() / "np_acceptance";
  fs::create_directories(dir);
  std::string detail;
  bool pass = true;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  };

  ExperimentConfig cfg;
  cfg.seed = 0;
  cfg.id_classes = 6;
  cfg.ood_classes = 4;
  cfg.shots_per_class = 4;
  cfg.test_per_class = 8;
  cfg.stage1_epochs = 25;
  cfg.stage2_epochs = 8;

  auto pipeline = [&](const std::string& tag) {
    const World world = generate_world(cfg.world_config());
    const TrainingSet ts =
        resolve_training_set(world.train, world.vocab, world.vocab.id_indices());
    const TrainConfig tc = cfg.train_config();
    Checkpoint ckpt;
    ckpt.positive = train_stage1(world.encoder, world.vocab, ts, tc);
    ckpt.negatives =
        train_stage2(world.encoder, world.vocab, ts, ckpt.positive, tc, cfg.loss_weights());
    ckpt.tau = tc.tau;
    ckpt.encoder_fingerprint = world.encoder.fingerprint();
    ckpt.trained_classes = ts.class_names;
    ckpt.save((dir / (tag + ".npk")).string());
    world.encoder.save((dir / (tag + ".nfe")).string());
    world.vocab.save((dir / (tag + ".nvc")).string());
    world.id_test.save((dir / (tag + ".neb")).string());
    EvalOptions opts;
    opts.seed = cfg.seed;
    const DetectionReport report =
        evaluate(world.encoder, world.vocab, ckpt, world.id_test, world.ood_test, opts);
    std::ofstream out(dir / (tag + ".csv"), std::ios::trunc);
    out << DetectionReport::csv_header() << '\n' << report.csv_row() << '\n';
  };
  pipeline("a");
  pipeline("b");
  for (const char* ext : {".npk", ".nfe", ".nvc", ".neb", ".csv"}) {
    expect(file_bytes((dir / ("a" + std::string(ext))).string()) ==
               file_bytes((dir / ("b" + std::string(ext))).string()),
           std::string("rerun differs for ") + ext);
  }

  // round trips preserve content
  const FrozenEncoder enc = FrozenEncoder::load((dir / "a.nfe").string());
  expect(enc.fingerprint() != 0, "encoder fingerprint");
  const ClassVocabulary vocab = ClassVocabulary::load((dir / "a.nvc").string());
  expect(vocab.entries.size() == 10, "vocab round trip");
  const LabeledFeatureSet bundle = LabeledFeatureSet::load((dir / "a.neb").string());
  expect(bundle.size() == 48, "bundle round trip");
  const Checkpoint ckpt = Checkpoint::load((dir / "a.npk").string(), enc.fingerprint());
  expect(ckpt.p() == 2, "checkpoint round trip");

  // corrupted headers are rejected with a positioned error
  for (const char* ext : {".nfe", ".nvc", ".neb", ".npk"}) {
    const std::string path = (dir / ("a" + std::string(ext))).string();
    corrupt_magic(path);
    bool caught = false;
    try {
      if (std::string(ext) == ".nfe") {
        (void)FrozenEncoder::load(path);
      } else if (std::string(ext) == ".nvc") {
        (void)ClassVocabulary::load(path);
      } else if (std::string(ext) == ".neb") {
        (void)LabeledFeatureSet::load(path);
      } else {
        (void)Checkpoint::load(path, enc.fingerprint());
      }
    } catch (const ParseError& e) {
      caught = e.offset() == 0;
    }
    expect(caught, std::string("corrupted header not rejected at offset 0 for ") + ext);
  }

  Outcome out;
  out.pass = pass;
  out.detail = pass ? "byte-identical reruns; 4 formats round-trip and reject corruption" : detail;
  return out;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Outcome>> results;
  auto run = [&results](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome outcome;
    try {
      outcome = fn();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %2d [%s] %s — %s\n", id, outcome.pass ? "PASS" : "FAIL", name.c_str(),
                outcome.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(name, outcome);
  };

  run(1, "gradient oracle (both kinds, all losses, fd h=1e-6)", gradient_oracle);
  run(2, "closed-form loss values", closed_form_losses);
  run(3, "reduction identities (p=0)", reduction_identities);

  std::vector<SeedRun> runs;
  try {
    for (uint64_t seed : {0ull, 1ull, 2ull}) runs.push_back(run_default_world(seed));
  } catch (const std::exception& e) {
    std::printf("fatal: default-world experiments failed: %s\n", e.what());
    return 2;
  }

  run(4, "argmax invariance on the full ID test set", [&] { return argmax_invariance(runs); });
  run(5, "metric oracles (auroc pairwise, fpr95 monte carlo)", metric_oracles);
  run(6, "end-to-end detection gain over the mcm baseline",
      [&] { return end_to_end_detection(runs); });
  run(7, "two-stage vs one-stage training", [&] { return two_stage_vs_one_stage(runs); });
  run(8, "open-vocabulary transfer drop <= 0.05 auroc", [&] { return open_vocab_drop(runs); });
  run(9, "ID/OOD similarity pattern", [&] { return similarity_pattern(runs); });
  run(10, "determinism and file formats", determinism_and_formats);

  int failures = 0;
  for (const auto& [name, outcome] : results) {
    if (!outcome.pass) ++failures;
  }
  std::printf("%zu/%zu acceptance criteria passed\n", results.size() - failures, results.size());
  return failures == 0 ? 0 : 1;
}
