#include "training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "rng.hpp"

namespace negprompt {

namespace {

std::vector<Vec> zero_tokens(std::size_t n, std::size_t dim) {
  return std::vector<Vec>(n, Vec(dim, 0.0));
}

// Pulls a per-class feature upstream back to the shared context tokens:
// grad[s] += sum_i encode_vjp(context ++ class_token_i, upstream[i])[s].
void accumulate_context_grad(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                             const std::vector<std::size_t>& class_indices,
                             const PromptContext& context, const std::vector<Vec>& upstream,
                             std::vector<Vec>& grad) {
  std::vector<Vec> tokens = context.tokens;
  tokens.emplace_back();
  for (std::size_t i = 0; i < class_indices.size(); ++i) {
    tokens.back() = vocab.entries[class_indices[i]].token;
    const auto vjp = enc.encode_vjp(tokens, upstream[i]);
    for (std::size_t s = 0; s < context.n(); ++s) axpy(1.0, vjp[s], grad[s]);
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (batch_size == 0 || batch_size >= count) return {order};

  Rng rng(seed, RngStream::Shuffle, epoch);
  for (std::size_t i = count - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void check_finite(double loss, const char* stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("training aborted: non-finite loss in stage '") + stage +
                       "' at epoch " + std::to_string(epoch));
  }
}

}  // namespace

void LossWeights::validate() const {
  if (beta < 0.0) throw InvalidArgument("beta must be >= 0");
  if (gamma < 0.0) throw InvalidArgument("gamma must be >= 0");
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be > 0");
  if (learning_rate < 0.0) throw InvalidArgument("learning_rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidArgument("momentum must be in [0,1)");
  if (context_len == 0) throw InvalidArgument("context_len must be >= 1");
  if (num_negative_prompts == 0) throw InvalidArgument("num_negative_prompts must be >= 1");
  if (jitter_sigma < 0.0) throw InvalidArgument("jitter_sigma must be >= 0");
}

void write_trace_csv(const LossTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "stage,epoch,loss_total,loss_nis,loss_npd,loss_nnd,loss_positive\n";
  char buf[256];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", row.stage.c_str(),
                  row.epoch, row.loss_total, row.loss_nis, row.loss_npd, row.loss_nnd,
                  row.loss_positive);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

TrainingSet resolve_training_set(const LabeledFeatureSet& bundle, const ClassVocabulary& vocab,
                                 const std::vector<std::size_t>& class_subset) {
  if (class_subset.empty()) throw InvalidArgument("class subset is empty");
  TrainingSet ts;
  ts.class_indices = class_subset;
  std::unordered_map<std::string, uint32_t> slot_of;
  for (std::size_t i = 0; i < class_subset.size(); ++i) {
    const auto idx = class_subset[i];
    if (idx >= vocab.entries.size()) throw InvalidArgument("class index out of range");
    if (!vocab.entries[idx].is_id) {
      throw InvalidArgument("training class '" + vocab.entries[idx].name + "' is not an ID class");
    }
    ts.class_names.push_back(vocab.entries[idx].name);
    slot_of[vocab.entries[idx].name] = static_cast<uint32_t>(i);
  }
  for (std::size_t r = 0; r < bundle.size(); ++r) {
    const std::string& name = bundle.label_names[bundle.labels[r]];
    const auto it = slot_of.find(name);
    if (it == slot_of.end()) continue;
    ts.labels.push_back(it->second);
    ts.features.push_back(bundle.features[r]);
  }
  if (ts.features.empty()) {
    throw InvalidArgument("no training records match the selected classes");
  }
  return ts;
}

PositiveObjective positive_objective(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                                     const TrainingSet& ts,
                                     const std::vector<std::size_t>& batch,
                                     const PromptContext& context, double tau) {
  const std::size_t k = ts.num_classes();
  const std::vector<Vec> pos_feats = compute_class_features(enc, context, vocab, ts.class_indices);

  std::vector<Vec> sims(batch.size(), Vec(k));
  std::vector<uint32_t> labels(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Vec& img = ts.features[batch[b]];
    labels[b] = ts.labels[batch[b]];
    for (std::size_t i = 0; i < k; ++i) sims[b][i] = cosine_sim(pos_feats[i], img) / tau;
  }
  const PositiveLoss pl = positive_loss(sims, labels);

  // upstream on each class feature: sum_b dL/dS[b][i] * img_b / tau
  std::vector<Vec> upstream(k, Vec(enc.dims().feature_dim, 0.0));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Vec& img = ts.features[batch[b]];
    for (std::size_t i = 0; i < k; ++i) axpy(pl.grad_sims[b][i] / tau, img, upstream[i]);
  }

  PositiveObjective out;
  out.loss = pl.loss;
  out.context_grad = zero_tokens(context.n(), context.token_dim());
  accumulate_context_grad(enc, vocab, ts.class_indices, context, upstream, out.context_grad);
  return out;
}

NegativeObjective negative_objective(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                                     const TrainingSet& ts,
                                     const std::vector<std::size_t>& batch,
                                     const std::vector<Vec>& pos_features,
                                     const std::vector<PromptContext>& neg_contexts, double tau,
                                     const LossWeights& weights, double nis_weight) {
  const std::size_t k = ts.num_classes();
  const std::size_t p = neg_contexts.size();
  if (p == 0) throw InvalidArgument("need at least one negative context");
  if (pos_features.size() != k) throw InvalidArgument("positive feature count mismatch");

  std::vector<std::vector<Vec>> neg_feats(p);
  for (std::size_t l = 0; l < p; ++l) {
    neg_feats[l] = compute_class_features(enc, neg_contexts[l], vocab, ts.class_indices);
  }

  // flattened negative similarities, prompt-major: entry l*k + j
  std::vector<Vec> sims(batch.size(), Vec(p * k));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Vec& img = ts.features[batch[b]];
    for (std::size_t l = 0; l < p; ++l) {
      for (std::size_t j = 0; j < k; ++j) {
        sims[b][l * k + j] = cosine_sim(neg_feats[l][j], img) / tau;
      }
    }
  }

  const NisLoss nis = nis_loss(sims);
  const NpdLoss npd = npd_loss(neg_feats, pos_features);
  const NndLoss nnd = nnd_loss(neg_feats);

  NegativeObjective out;
  out.nis = nis.loss;
  out.npd = npd.loss;
  out.nnd = nnd.loss;
  out.total = nis_weight * nis.loss + weights.beta * npd.loss + weights.gamma * nnd.loss;

  const std::size_t d_f = enc.dims().feature_dim;
  for (std::size_t l = 0; l < p; ++l) {
    std::vector<Vec> upstream(k, Vec(d_f, 0.0));
    for (std::size_t j = 0; j < k; ++j) {
      if (nis_weight != 0.0) {
        for (std::size_t b = 0; b < batch.size(); ++b) {
          axpy(nis_weight * nis.grad_sims[b][l * k + j] / tau, ts.features[batch[b]], upstream[j]);
        }
      }
      axpy(weights.beta, npd.grad_neg[l][j], upstream[j]);
      axpy(weights.gamma, nnd.grad_neg[l][j], upstream[j]);
    }
    auto grad = zero_tokens(neg_contexts[l].n(), neg_contexts[l].token_dim());
    accumulate_context_grad(enc, vocab, ts.class_indices, neg_contexts[l], upstream, grad);
    out.context_grads.push_back(std::move(grad));
  }
  return out;
}

JointObjective joint_objective(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                               const TrainingSet& ts, const std::vector<std::size_t>& batch,
                               const PromptContext& pos_context,
                               const std::vector<PromptContext>& neg_contexts, double tau,
                               const LossWeights& weights) {
  const std::size_t k = ts.num_classes();
  const std::size_t p = neg_contexts.size();
  if (p == 0) throw InvalidArgument("need at least one negative context");

  const std::vector<Vec> pos_feats =
      compute_class_features(enc, pos_context, vocab, ts.class_indices);
  std::vector<std::vector<Vec>> neg_feats(p);
  for (std::size_t l = 0; l < p; ++l) {
    neg_feats[l] = compute_class_features(enc, neg_contexts[l], vocab, ts.class_indices);
  }

  const std::size_t d_f = enc.dims().feature_dim;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  // Cross-entropy with the negative-augmented softmax: the label's
  // probability mass is exp(S_pos_y) over the joint positive+negative sum.
  JointObjective out;
  std::vector<Vec> up_pos(k, Vec(d_f, 0.0));
  std::vector<std::vector<Vec>> up_neg(p, std::vector<Vec>(k, Vec(d_f, 0.0)));
  Vec joint(k + p * k);
  std::vector<Vec> neg_sims(batch.size(), Vec(p * k));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Vec& img = ts.features[batch[b]];
    const uint32_t label = ts.labels[batch[b]];
    for (std::size_t i = 0; i < k; ++i) joint[i] = cosine_sim(pos_feats[i], img) / tau;
    for (std::size_t l = 0; l < p; ++l) {
      for (std::size_t j = 0; j < k; ++j) {
        const double s = cosine_sim(neg_feats[l][j], img) / tau;
        joint[k + l * k + j] = s;
        neg_sims[b][l * k + j] = s;
      }
    }
    out.positive_ce += (log_sum_exp(joint) - joint[label]) * inv_batch;
    const Vec q = softmax_stable(joint);
    for (std::size_t i = 0; i < k; ++i) {
      const double g = (q[i] - (i == label ? 1.0 : 0.0)) * inv_batch;
      axpy(g / tau, img, up_pos[i]);
    }
    for (std::size_t l = 0; l < p; ++l) {
      for (std::size_t j = 0; j < k; ++j) {
        axpy(q[k + l * k + j] * inv_batch / tau, img, up_neg[l][j]);
      }
    }
  }

  const NisLoss nis = nis_loss(neg_sims);
  const NpdLoss npd = npd_loss(neg_feats, pos_feats);
  const NndLoss nnd = nnd_loss(neg_feats);
  out.nis = nis.loss;
  out.npd = npd.loss;
  out.nnd = nnd.loss;
  out.total = out.positive_ce + nis.loss + weights.beta * npd.loss + weights.gamma * nnd.loss;

  for (std::size_t l = 0; l < p; ++l) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        axpy(nis.grad_sims[b][l * k + j] / tau, ts.features[batch[b]], up_neg[l][j]);
      }
      axpy(weights.beta, npd.grad_neg[l][j], up_neg[l][j]);
      axpy(weights.gamma, nnd.grad_neg[l][j], up_neg[l][j]);
    }
  }

  out.pos_context_grad = zero_tokens(pos_context.n(), pos_context.token_dim());
  accumulate_context_grad(enc, vocab, ts.class_indices, pos_context, up_pos,
                          out.pos_context_grad);
  for (std::size_t l = 0; l < p; ++l) {
    auto grad = zero_tokens(neg_contexts[l].n(), neg_contexts[l].token_dim());
    accumulate_context_grad(enc, vocab, ts.class_indices, neg_contexts[l], up_neg[l], grad);
    out.neg_context_grads.push_back(std::move(grad));
  }
  return out;
}

void sgd_step(std::vector<Vec>& params, const std::vector<Vec>& grads, double lr, double momentum,
              std::vector<Vec>& velocity) {
  if (params.size() != grads.size()) throw InvalidArgument("sgd_step: shape mismatch");
  if (velocity.size() != params.size()) {
    velocity.assign(params.size(), Vec());
    for (std::size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) throw InvalidArgument("sgd_step: shape mismatch");
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      velocity[i][j] = momentum * velocity[i][j] - lr * grads[i][j];
      params[i][j] += velocity[i][j];
    }
  }
}

PositivePrompt train_stage1(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                            const TrainingSet& ts, const TrainConfig& cfg, LossTrace* trace) {
  cfg.validate();
  PositivePrompt pos = init_positive(cfg.seed, cfg.context_len, enc.dims().token_dim);
  std::vector<Vec> velocity;
  for (std::size_t epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = make_batches(ts.size(), cfg.batch_size, cfg.seed, epoch);
    for (const auto& batch : batches) {
      const auto obj = positive_objective(enc, vocab, ts, batch, pos.context, cfg.tau);
      check_finite(obj.loss, "pos", epoch);
      epoch_loss += obj.loss * static_cast<double>(batch.size()) / static_cast<double>(ts.size());
      sgd_step(pos.context.tokens, obj.context_grad, cfg.learning_rate, cfg.momentum, velocity);
    }
    if (trace) {
      trace->push_back({"pos", epoch, epoch_loss, 0.0, 0.0, 0.0, epoch_loss});
    }
  }
  pos.frozen = true;
  return pos;
}

NegativePromptSet train_stage2(const FrozenEncoder& enc, const ClassVocabulary& vocab,
                               const TrainingSet& ts, const PositivePrompt& frozen_pos,
                               const TrainConfig& cfg, const LossWeights& weights,
                               LossTrace* trace) {
  cfg.validate();
  weights.validate();
  if (!frozen_pos.frozen) {
    throw InvalidArgument("stage 2 requires a frozen positive prompt");
  }
  // positive class features are constants in stage 2; computed once
  const std::vector<Vec> pos_feats =
      compute_class_features(enc, frozen_pos.context, vocab, ts.class_indices);

  NegativePromptSet negs = init_negative_from_positive(frozen_pos, cfg.num_negative_prompts,
                                                       cfg.jitter_sigma, cfg.seed);
  const std::size_t p = negs.count();
  std::vector<std::vector<Vec>> velocity(p);
  for (std::size_t epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    TraceRow row{"neg", epoch, 0.0, 0.0, 0.0, 0.0, 0.0};
    const auto batches = make_batches(ts.size(), cfg.batch_size, cfg.seed, epoch);
    for (const auto& batch : batches) {
      const auto obj = negative_objective(enc, vocab, ts, batch, pos_feats, negs.contexts,
                                          cfg.tau, weights);
      check_finite(obj.total, "neg", epoch);
      const double w = static_cast<double>(batch.size()) / static_cast<double>(ts.size());
      row.loss_total += obj.total * w;
      row.loss_nis += obj.nis * w;
      row.loss_npd += obj.npd * w;
      row.loss_nnd += obj.nnd * w;
      for (std::size_t l = 0; l < p; ++l) {
        sgd_step(negs.contexts[l].tokens, obj.context_grads[l], cfg.learning_rate, cfg.momentum,
                 velocity[l]);
      }
    }
    if (trace) trace->push_back(row);
  }
  return negs;
}

std::pair<PositivePrompt, NegativePromptSet> train_joint(const FrozenEncoder& enc,
                                                         const ClassVocabulary& vocab,
                                                         const TrainingSet& ts,
                                                         const TrainConfig& cfg,
                                                         const LossWeights& weights,
                                                         LossTrace* trace) {
  cfg.validate();
  weights.validate();
  PositivePrompt pos = init_positive(cfg.seed, cfg.context_len, enc.dims().token_dim);
  std::vector<PromptContext> negs =
      jitter_contexts(pos.context, cfg.num_negative_prompts, cfg.jitter_sigma, cfg.seed);

  std::vector<Vec> pos_velocity;
  std::vector<std::vector<Vec>> neg_velocity(negs.size());
  for (std::size_t epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    TraceRow row{"joint", epoch, 0.0, 0.0, 0.0, 0.0, 0.0};
    const auto batches = make_batches(ts.size(), cfg.batch_size, cfg.seed, epoch);
    for (const auto& batch : batches) {
      const auto obj = joint_objective(enc, vocab, ts, batch, pos.context, negs, cfg.tau, weights);
      check_finite(obj.total, "joint", epoch);
      const double w = static_cast<double>(batch.size()) / static_cast<double>(ts.size());
      row.loss_total += obj.total * w;
      row.loss_nis += obj.nis * w;
      row.loss_npd += obj.npd * w;
      row.loss_nnd += obj.nnd * w;
      row.loss_positive += obj.positive_ce * w;
      sgd_step(pos.context.tokens, obj.pos_context_grad, cfg.learning_rate, cfg.momentum,
               pos_velocity);
      for (std::size_t l = 0; l < negs.size(); ++l) {
        sgd_step(negs[l].tokens, obj.neg_context_grads[l], cfg.learning_rate, cfg.momentum,
                 neg_velocity[l]);
      }
    }
    if (trace) trace->push_back(row);
  }
  pos.frozen = true;
  NegativePromptSet set;
  set.contexts = std::move(negs);
  return {std::move(pos), std::move(set)};
}

}  // namespace negprompt
