// extern-C binding of the negprompt core. Exceptions stop here: every entry
// point maps them to np_status codes and a thread-local message.

#include "negprompt/negprompt.h"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "config.hpp"
#include "detection.hpp"
#include "encoder.hpp"
#include "errors.hpp"
#include "prompts.hpp"
#include "training.hpp"
#include "world.hpp"

using namespace negprompt;

namespace {

thread_local std::string g_last_error;

template <typename Fn>
np_status guarded(Fn&& fn) {
  try {
    fn();
    return NP_OK;
  } catch (const FingerprintMismatch& e) {
    g_last_error = e.what();
    return NP_ERR_FINGERPRINT;
  } catch (const ParseError& e) {
    g_last_error = e.what();
    return NP_ERR_PARSE;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return NP_ERR_IO;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return NP_ERR_NUMERIC;
  } catch (const InvalidArgument& e) {
    g_last_error = e.what();
    return NP_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NP_ERR_INTERNAL;
  }
}

np_status require(bool ok, const char* msg) {
  if (ok) return NP_OK;
  g_last_error = msg;
  return NP_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::size_t> training_subset(const ClassVocabulary& vocab,
                                         const ExperimentConfig& cfg, bool open_vocab) {
  std::vector<std::size_t> ids = vocab.id_indices();
  if (!open_vocab) return ids;
  const double raw = cfg.open_vocab_fraction * static_cast<double>(ids.size());
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  if (count < 1) count = 1;
  if (count > ids.size()) count = ids.size();
  ids.resize(count);
  return ids;
}

std::vector<std::size_t> checkpoint_subset(const ClassVocabulary& vocab, const Checkpoint& ckpt) {
  std::vector<std::size_t> subset;
  for (const auto& name : ckpt.trained_classes) {
    const auto idx = vocab.find(name);
    if (idx < 0) {
      throw InvalidArgument("trained class '" + name + "' is missing from the vocabulary");
    }
    subset.push_back(static_cast<std::size_t>(idx));
  }
  if (subset.empty()) throw InvalidArgument("checkpoint has no trained classes");
  return subset;
}

}  // namespace

struct np_config {
  ExperimentConfig cfg;
};
struct np_encoder {
  FrozenEncoder enc;
};
struct np_vocab {
  ClassVocabulary vocab;
};
struct np_bundle {
  LabeledFeatureSet set;
};
struct np_checkpoint {
  Checkpoint ckpt;
};
struct np_report {
  DetectionReport report;
};

extern "C" {

const char* np_version(void) { return "1.0.0"; }

const char* np_last_error(void) { return g_last_error.c_str(); }

void np_string_free(char* s) { delete[] s; }

np_status np_config_create(np_config** out) {
  if (np_status st = require(out != nullptr, "out is null")) return st;
  return guarded([&] { *out = new np_config{}; });
}

np_status np_config_parse(const char* text, np_config** out) {
  if (np_status st = require(text && out, "text/out is null")) return st;
  return guarded([&] { *out = new np_config{ExperimentConfig::parse(text)}; });
}

np_status np_config_parse_file(const char* path, np_config** out) {
  if (np_status st = require(path && out, "path/out is null")) return st;
  return guarded([&] { *out = new np_config{ExperimentConfig::parse_file(path)}; });
}

np_status np_config_clone(const np_config* cfg, np_config** out) {
  if (np_status st = require(cfg && out, "cfg/out is null")) return st;
  return guarded([&] { *out = new np_config{cfg->cfg}; });
}

np_status np_config_set(np_config* cfg, const char* key, const char* value) {
  if (np_status st = require(cfg && key && value, "cfg/key/value is null")) return st;
  return guarded([&] {
    cfg->cfg.set(key, value);
    cfg->cfg.validate();
  });
}

np_status np_config_get(const np_config* cfg, const char* key, char** out_value) {
  if (np_status st = require(cfg && key && out_value, "cfg/key/out is null")) return st;
  return guarded([&] { *out_value = dup_string(cfg->cfg.get(key)); });
}

np_status np_config_serialize(const np_config* cfg, char** out_text) {
  if (np_status st = require(cfg && out_text, "cfg/out is null")) return st;
  return guarded([&] { *out_text = dup_string(cfg->cfg.serialize()); });
}

void np_config_free(np_config* cfg) { delete cfg; }

np_status np_world_generate(const np_config* cfg, np_encoder** out_encoder, np_vocab** out_vocab,
                            np_bundle** out_train, np_bundle** out_id_test,
                            np_bundle** out_ood_test) {
  if (np_status st = require(cfg && out_encoder && out_vocab && out_train && out_id_test &&
                                 out_ood_test,
                             "null argument")) {
    return st;
  }
  return guarded([&] {
    cfg->cfg.validate();
    World world = generate_world(cfg->cfg.world_config());
    *out_encoder = new np_encoder{std::move(world.encoder)};
    *out_vocab = new np_vocab{std::move(world.vocab)};
    *out_train = new np_bundle{std::move(world.train)};
    *out_id_test = new np_bundle{std::move(world.id_test)};
    *out_ood_test = new np_bundle{std::move(world.ood_test)};
  });
}

np_status np_encoder_create(const np_config* cfg, np_encoder** out) {
  if (np_status st = require(cfg && out, "cfg/out is null")) return st;
  return guarded([&] {
    cfg->cfg.validate();
    const WorldConfig w = cfg->cfg.world_config();
    *out = new np_encoder{FrozenEncoder::create(w.encoder_kind, w.dims, w.seed)};
  });
}

np_status np_encoder_save(const np_encoder* enc, const char* path) {
  if (np_status st = require(enc && path, "enc/path is null")) return st;
  return guarded([&] { enc->enc.save(path); });
}

np_status np_encoder_load(const char* path, np_encoder** out) {
  if (np_status st = require(path && out, "path/out is null")) return st;
  return guarded([&] { *out = new np_encoder{FrozenEncoder::load(path)}; });
}

np_status np_encoder_fingerprint(const np_encoder* enc, uint64_t* out) {
  if (np_status st = require(enc && out, "enc/out is null")) return st;
  *out = enc->enc.fingerprint();
  return NP_OK;
}

void np_encoder_free(np_encoder* enc) { delete enc; }

np_status np_gradcheck(const np_encoder* enc, uint64_t seed, int probes, double* out_max_rel_error,
                       int* out_pass) {
  if (np_status st = require(enc && out_max_rel_error && out_pass, "null argument")) return st;
  return guarded([&] {
    const GradCheckReport report = gradcheck(enc->enc, seed, probes > 0 ? probes : 10);
    *out_max_rel_error = report.max_rel_error;
    *out_pass = report.pass ? 1 : 0;
  });
}

np_status np_vocab_save(const np_vocab* vocab, const char* path) {
  if (np_status st = require(vocab && path, "vocab/path is null")) return st;
  return guarded([&] { vocab->vocab.save(path); });
}

np_status np_vocab_load(const char* path, np_vocab** out) {
  if (np_status st = require(path && out, "path/out is null")) return st;
  return guarded([&] { *out = new np_vocab{ClassVocabulary::load(path)}; });
}

np_status np_vocab_size(const np_vocab* vocab, uint32_t* out_total, uint32_t* out_id_classes) {
  if (np_status st = require(vocab != nullptr, "vocab is null")) return st;
  if (out_total) *out_total = static_cast<uint32_t>(vocab->vocab.entries.size());
  if (out_id_classes) *out_id_classes = static_cast<uint32_t>(vocab->vocab.id_indices().size());
  return NP_OK;
}

void np_vocab_free(np_vocab* vocab) { delete vocab; }

np_status np_bundle_save(const np_bundle* bundle, const char* path) {
  if (np_status st = require(bundle && path, "bundle/path is null")) return st;
  return guarded([&] { bundle->set.save(path); });
}

np_status np_bundle_load(const char* path, np_bundle** out) {
  if (np_status st = require(path && out, "path/out is null")) return st;
  return guarded([&] { *out = new np_bundle{LabeledFeatureSet::load(path)}; });
}

np_status np_bundle_info(const np_bundle* bundle, uint64_t* out_records, uint32_t* out_feature_dim,
                         int* out_split) {
  if (np_status st = require(bundle != nullptr, "bundle is null")) return st;
  if (out_records) *out_records = bundle->set.size();
  if (out_feature_dim) *out_feature_dim = static_cast<uint32_t>(bundle->set.feature_dim);
  if (out_split) *out_split = static_cast<int>(bundle->set.split);
  return NP_OK;
}

void np_bundle_free(np_bundle* bundle) { delete bundle; }

np_status np_train_positive(const np_encoder* enc, const np_vocab* vocab, const np_bundle* train,
                            const np_config* cfg, int open_vocab, const char* trace_csv_path,
                            np_checkpoint** out) {
  if (np_status st = require(enc && vocab && train && cfg && out, "null argument")) return st;
  return guarded([&] {
    cfg->cfg.validate();
    if (train->set.split != Split::IdTrain) {
      throw InvalidArgument("training expects an id_train bundle, got " +
                            std::string(split_name(train->set.split)));
    }
    const auto subset = training_subset(vocab->vocab, cfg->cfg, open_vocab != 0);
    const TrainingSet ts = resolve_training_set(train->set, vocab->vocab, subset);
    LossTrace trace;
    PositivePrompt pos =
        train_stage1(enc->enc, vocab->vocab, ts, cfg->cfg.train_config(), &trace);
    if (trace_csv_path) write_trace_csv(trace, trace_csv_path);
    Checkpoint ckpt;
    ckpt.positive = std::move(pos);
    ckpt.tau = cfg->cfg.tau;
    ckpt.encoder_fingerprint = enc->enc.fingerprint();
    ckpt.trained_classes = ts.class_names;
    *out = new np_checkpoint{std::move(ckpt)};
  });
}

np_status np_train_negative(const np_encoder* enc, const np_vocab* vocab, const np_bundle* train,
                            const np_checkpoint* positive_ckpt, const np_config* cfg,
                            const char* trace_csv_path, np_checkpoint** out) {
  if (np_status st = require(enc && vocab && train && positive_ckpt && cfg && out,
                             "null argument")) {
    return st;
  }
  return guarded([&] {
    cfg->cfg.validate();
    if (train->set.split != Split::IdTrain) {
      throw InvalidArgument("training expects an id_train bundle, got " +
                            std::string(split_name(train->set.split)));
    }
    const Checkpoint& base = positive_ckpt->ckpt;
    if (base.encoder_fingerprint != enc->enc.fingerprint()) {
      throw FingerprintMismatch(enc->enc.fingerprint(), base.encoder_fingerprint);
    }
    const auto subset = checkpoint_subset(vocab->vocab, base);
    const TrainingSet ts = resolve_training_set(train->set, vocab->vocab, subset);
    LossTrace trace;
    NegativePromptSet negs = train_stage2(enc->enc, vocab->vocab, ts, base.positive,
                                          cfg->cfg.train_config(), cfg->cfg.loss_weights(),
                                          &trace);
    if (trace_csv_path) write_trace_csv(trace, trace_csv_path);
    Checkpoint ckpt;
    ckpt.positive = base.positive;
    ckpt.negatives = std::move(negs);
    ckpt.tau = cfg->cfg.tau;
    ckpt.encoder_fingerprint = enc->enc.fingerprint();
    ckpt.trained_classes = base.trained_classes;
    *out = new np_checkpoint{std::move(ckpt)};
  });
}

np_status np_train_joint(const np_encoder* enc, const np_vocab* vocab, const np_bundle* train,
                         const np_config* cfg, int open_vocab, const char* trace_csv_path,
                         np_checkpoint** out) {
  if (np_status st = require(enc && vocab && train && cfg && out, "null argument")) return st;
  return guarded([&] {
    cfg->cfg.validate();
    if (train->set.split != Split::IdTrain) {
      throw InvalidArgument("training expects an id_train bundle, got " +
                            std::string(split_name(train->set.split)));
    }
    const auto subset = training_subset(vocab->vocab, cfg->cfg, open_vocab != 0);
    const TrainingSet ts = resolve_training_set(train->set, vocab->vocab, subset);
    LossTrace trace;
    auto [pos, negs] = train_joint(enc->enc, vocab->vocab, ts, cfg->cfg.train_config(),
                                   cfg->cfg.loss_weights(), &trace);
    if (trace_csv_path) write_trace_csv(trace, trace_csv_path);
    Checkpoint ckpt;
    ckpt.positive = std::move(pos);
    ckpt.negatives = std::move(negs);
    ckpt.tau = cfg->cfg.tau;
    ckpt.encoder_fingerprint = enc->enc.fingerprint();
    ckpt.trained_classes = ts.class_names;
    *out = new np_checkpoint{std::move(ckpt)};
  });
}

np_status np_checkpoint_save(const np_checkpoint* ckpt, const char* path) {
  if (np_status st = require(ckpt && path, "ckpt/path is null")) return st;
  return guarded([&] { ckpt->ckpt.save(path); });
}

np_status np_checkpoint_load(const char* path, const np_encoder* enc, np_checkpoint** out) {
  if (np_status st = require(path && enc && out, "null argument")) return st;
  return guarded([&] {
    *out = new np_checkpoint{Checkpoint::load(path, enc->enc.fingerprint())};
  });
}

np_status np_checkpoint_info(const np_checkpoint* ckpt, uint32_t* out_num_negative,
                             uint32_t* out_trained_classes) {
  if (np_status st = require(ckpt != nullptr, "ckpt is null")) return st;
  if (out_num_negative) *out_num_negative = static_cast<uint32_t>(ckpt->ckpt.p());
  if (out_trained_classes) {
    *out_trained_classes = static_cast<uint32_t>(ckpt->ckpt.trained_classes.size());
  }
  return NP_OK;
}

void np_checkpoint_free(np_checkpoint* ckpt) { delete ckpt; }

np_status np_evaluate(const np_encoder* enc, const np_vocab* vocab, const np_checkpoint* ckpt,
                      const np_bundle* id_test, const np_bundle* ood_test, const np_config* cfg,
                      int open_vocab, np_report** out) {
  if (np_status st = require(enc && vocab && ckpt && id_test && ood_test && cfg && out,
                             "null argument")) {
    return st;
  }
  return guarded([&] {
    cfg->cfg.validate();
    if (id_test->set.split == Split::OodTest) {
      throw InvalidArgument("id_test bundle is tagged ood_test");
    }
    if (ood_test->set.split != Split::OodTest) {
      throw InvalidArgument("ood_test bundle is tagged " +
                            std::string(split_name(ood_test->set.split)));
    }
    EvalOptions options;
    options.scorer = cfg->cfg.scorer;
    options.open_vocab = open_vocab != 0;
    options.beta = cfg->cfg.beta;
    options.gamma = cfg->cfg.gamma;
    options.seed = cfg->cfg.seed;
    *out = new np_report{evaluate(enc->enc, vocab->vocab, ckpt->ckpt, id_test->set,
                                  ood_test->set, options)};
  });
}

np_status np_report_metric(const np_report* report, const char* name, double* out) {
  if (np_status st = require(report && name && out, "null argument")) return st;
  const DetectionReport& r = report->report;
  const std::string key(name);
  if (key == "auroc") {
    *out = r.auroc_value;
  } else if (key == "fpr95") {
    *out = r.fpr95;
  } else if (key == "top1_acc") {
    *out = r.top1_accuracy;
  } else if (key == "id_mean_max_pos_sim") {
    *out = r.id_mean_max_pos_sim;
  } else if (key == "id_mean_max_neg_sim") {
    *out = r.id_mean_max_neg_sim;
  } else if (key == "ood_mean_max_pos_sim") {
    *out = r.ood_mean_max_pos_sim;
  } else if (key == "ood_mean_max_neg_sim") {
    *out = r.ood_mean_max_neg_sim;
  } else if (key == "k_train") {
    *out = static_cast<double>(r.k_train);
  } else if (key == "k_eval") {
    *out = static_cast<double>(r.k_eval);
  } else if (key == "p") {
    *out = static_cast<double>(r.p);
  } else {
    g_last_error = "unknown report metric: '" + key + "'";
    return NP_ERR_INVALID_ARGUMENT;
  }
  return NP_OK;
}

np_status np_report_csv(const np_report* report, int include_header, char** out_text) {
  if (np_status st = require(report && out_text, "report/out is null")) return st;
  return guarded([&] {
    std::string text;
    if (include_header) {
      text += DetectionReport::csv_header();
      text += '\n';
    }
    text += report->report.csv_row();
    text += '\n';
    *out_text = dup_string(text);
  });
}

void np_report_free(np_report* report) { delete report; }

np_status np_dump_features(const np_encoder* enc, const np_vocab* vocab, const np_checkpoint* ckpt,
                           const np_bundle* id_test, const np_bundle* ood_test, int open_vocab,
                           const char* csv_path) {
  if (np_status st = require(enc && vocab && ckpt && id_test && ood_test && csv_path,
                             "null argument")) {
    return st;
  }
  return guarded([&] {
    dump_features_csv(enc->enc, vocab->vocab, ckpt->ckpt, id_test->set, ood_test->set,
                      open_vocab != 0, csv_path);
  });
}

}  // extern "C"
