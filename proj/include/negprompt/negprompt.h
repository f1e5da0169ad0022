/* C API of the negprompt shared library.
 *
 * Negative-prompt learning for out-of-distribution detection over frozen
 * embedding encoders: synthetic world generation, two-stage prompt training,
 * negative-augmented scoring, and AUROC/FPR95 evaluation.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Functions return NP_OK on success; on failure they return an error code
 * and np_last_error() yields a thread-local description of what went wrong.
 * Output handles/strings are only written on success.
 */

#ifndef NEGPROMPT_H
#define NEGPROMPT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum np_status {
  NP_OK = 0,
  NP_ERR_INVALID_ARGUMENT = 1, /* bad shapes, values, or preconditions */
  NP_ERR_IO = 2,               /* file could not be opened/read/written */
  NP_ERR_PARSE = 3,            /* malformed file or config text */
  NP_ERR_FINGERPRINT = 4,      /* artifact belongs to a different encoder */
  NP_ERR_NUMERIC = 5,          /* non-finite values during training */
  NP_ERR_INTERNAL = 6
} np_status;

const char* np_version(void);

/* Message for the most recent failure on this thread. */
const char* np_last_error(void);

/* Frees strings returned through char** out-parameters. */
void np_string_free(char* s);

typedef struct np_config np_config;
typedef struct np_encoder np_encoder;
typedef struct np_vocab np_vocab;
typedef struct np_bundle np_bundle;
typedef struct np_checkpoint np_checkpoint;
typedef struct np_report np_report;

/* ---- experiment configuration (line-oriented `key = value` text) ---- */

np_status np_config_create(np_config** out);
np_status np_config_parse(const char* text, np_config** out);
np_status np_config_parse_file(const char* path, np_config** out);
np_status np_config_clone(const np_config* cfg, np_config** out);
np_status np_config_set(np_config* cfg, const char* key, const char* value);
np_status np_config_get(const np_config* cfg, const char* key, char** out_value);
np_status np_config_serialize(const np_config* cfg, char** out_text);
void np_config_free(np_config* cfg);

/* ---- synthetic world generation ---- */

np_status np_world_generate(const np_config* cfg, np_encoder** out_encoder, np_vocab** out_vocab,
                            np_bundle** out_train, np_bundle** out_id_test,
                            np_bundle** out_ood_test);

/* ---- frozen encoder (.nfe) ---- */

/* Builds the seeded frozen encoder described by the config, without data. */
np_status np_encoder_create(const np_config* cfg, np_encoder** out);
np_status np_encoder_save(const np_encoder* enc, const char* path);
np_status np_encoder_load(const char* path, np_encoder** out);
np_status np_encoder_fingerprint(const np_encoder* enc, uint64_t* out);
void np_encoder_free(np_encoder* enc);

/* Compares analytic encoder gradients against central finite differences on
 * `probes` random token sets (h = 1e-6). *out_pass is 1 when the largest
 * relative error is below 1e-5. Failures are reported, not raised. */
np_status np_gradcheck(const np_encoder* enc, uint64_t seed, int probes, double* out_max_rel_error,
                       int* out_pass);

/* ---- class vocabulary (.nvc) ---- */

np_status np_vocab_save(const np_vocab* vocab, const char* path);
np_status np_vocab_load(const char* path, np_vocab** out);
np_status np_vocab_size(const np_vocab* vocab, uint32_t* out_total, uint32_t* out_id_classes);
void np_vocab_free(np_vocab* vocab);

/* ---- labeled feature bundles (.neb) ---- */

np_status np_bundle_save(const np_bundle* bundle, const char* path);
np_status np_bundle_load(const char* path, np_bundle** out);
np_status np_bundle_info(const np_bundle* bundle, uint64_t* out_records, uint32_t* out_feature_dim,
                         int* out_split);
void np_bundle_free(np_bundle* bundle);

/* ---- training ---- */

/* Stage 1: learns the positive context with cross-entropy and returns a
 * checkpoint holding the frozen positive prompt (zero negative prompts).
 * With open_vocab != 0 training is restricted to the first
 * ceil(open_vocab_fraction * id_classes) ID classes.
 * trace_csv_path may be NULL to skip the loss trace. */
np_status np_train_positive(const np_encoder* enc, const np_vocab* vocab, const np_bundle* train,
                            const np_config* cfg, int open_vocab, const char* trace_csv_path,
                            np_checkpoint** out);

/* Stage 2: freezes the loaded positive prompt and learns the negative
 * prompts on the checkpoint's trained classes. */
np_status np_train_negative(const np_encoder* enc, const np_vocab* vocab, const np_bundle* train,
                            const np_checkpoint* positive_ckpt, const np_config* cfg,
                            const char* trace_csv_path, np_checkpoint** out);

/* One-stage ablation: positive and negative prompts trained simultaneously. */
np_status np_train_joint(const np_encoder* enc, const np_vocab* vocab, const np_bundle* train,
                         const np_config* cfg, int open_vocab, const char* trace_csv_path,
                         np_checkpoint** out);

/* ---- checkpoints (.npk) ---- */

np_status np_checkpoint_save(const np_checkpoint* ckpt, const char* path);
/* Rejects checkpoints whose stored fingerprint differs from `enc`. */
np_status np_checkpoint_load(const char* path, const np_encoder* enc, np_checkpoint** out);
np_status np_checkpoint_info(const np_checkpoint* ckpt, uint32_t* out_num_negative,
                             uint32_t* out_trained_classes);
void np_checkpoint_free(np_checkpoint* ckpt);

/* ---- evaluation ---- */

/* Scores both test bundles with the config's scorer and aggregates AUROC,
 * FPR95, top-1 ID accuracy, and mean max prompt similarities. With
 * open_vocab != 0 the trained contexts are combined with every ID class in
 * the vocabulary instead of only the trained classes. */
np_status np_evaluate(const np_encoder* enc, const np_vocab* vocab, const np_checkpoint* ckpt,
                      const np_bundle* id_test, const np_bundle* ood_test, const np_config* cfg,
                      int open_vocab, np_report** out);

/* Named metrics: auroc, fpr95, top1_acc, id_mean_max_pos_sim,
 * id_mean_max_neg_sim, ood_mean_max_pos_sim, ood_mean_max_neg_sim,
 * k_train, k_eval, p. */
np_status np_report_metric(const np_report* report, const char* name, double* out);
np_status np_report_csv(const np_report* report, int include_header, char** out_text);
void np_report_free(np_report* report);

/* Writes every prompt and image feature to CSV for external plotting. */
np_status np_dump_features(const np_encoder* enc, const np_vocab* vocab, const np_checkpoint* ckpt,
                           const np_bundle* id_test, const np_bundle* ood_test, int open_vocab,
                           const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif /* NEGPROMPT_H */
