#include "losses.hpp"

#include <cmath>

namespace negprompt {

PositiveLoss positive_loss(const std::vector<Vec>& sims, const std::vector<uint32_t>& labels) {
  if (sims.empty()) throw InvalidArgument("positive_loss: empty batch");
  if (sims.size() != labels.size()) throw InvalidArgument("positive_loss: label count mismatch");
  const std::size_t k = sims[0].size();
  if (k == 0) throw InvalidArgument("positive_loss: no classes");
  const double inv_batch = 1.0 / static_cast<double>(sims.size());

  PositiveLoss out;
  out.grad_sims.resize(sims.size());
  for (std::size_t b = 0; b < sims.size(); ++b) {
    if (sims[b].size() != k) throw InvalidArgument("positive_loss: ragged similarity rows");
    if (labels[b] >= k) {
      throw InvalidArgument("positive_loss: label " + std::to_string(labels[b]) +
                            " out of range [0," + std::to_string(k) + ")");
    }
    const double lse = log_sum_exp(sims[b]);
    out.loss += (lse - sims[b][labels[b]]) * inv_batch;
    Vec g = softmax_stable(sims[b]);
    g[labels[b]] -= 1.0;
    for (auto& x : g) x *= inv_batch;
    out.grad_sims[b] = std::move(g);
  }
  return out;
}

NisLoss nis_loss(const std::vector<Vec>& sims) {
  if (sims.empty()) throw InvalidArgument("nis_loss: empty batch");
  const std::size_t m = sims[0].size();
  if (m == 0) throw InvalidArgument("nis_loss: empty similarity vector");
  const double inv_batch = 1.0 / static_cast<double>(sims.size());
  const double u = 1.0 / static_cast<double>(m);

  NisLoss out;
  out.grad_sims.resize(sims.size());
  for (std::size_t b = 0; b < sims.size(); ++b) {
    if (sims[b].size() != m) throw InvalidArgument("nis_loss: ragged similarity rows");
    // -(1/m) sum_j log softmax(s)[j] = lse(s) - mean(s)
    const double lse = log_sum_exp(sims[b]);
    double mean = 0.0;
    for (double s : sims[b]) mean += s;
    mean *= u;
    out.loss += (lse - mean) * inv_batch;
    Vec g = softmax_stable(sims[b]);
    for (auto& x : g) x = (x - u) * inv_batch;
    out.grad_sims[b] = std::move(g);
  }
  return out;
}

NpdLoss npd_loss(const std::vector<std::vector<Vec>>& neg_features,
                 const std::vector<Vec>& pos_features) {
  const std::size_t p = neg_features.size();
  const std::size_t k = pos_features.size();
  if (p == 0 || k == 0) throw InvalidArgument("npd_loss: empty feature set");
  const double scale = 1.0 / static_cast<double>(k * p);

  NpdLoss out;
  out.grad_neg.resize(p);
  for (std::size_t l = 0; l < p; ++l) {
    if (neg_features[l].size() != k) throw InvalidArgument("npd_loss: shape mismatch");
    out.grad_neg[l].resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      out.loss -= scale * cosine_sim(neg_features[l][j], pos_features[j]);
      Vec g = pos_features[j];
      for (auto& x : g) x *= -scale;
      out.grad_neg[l][j] = std::move(g);
    }
  }
  return out;
}

NndLoss nnd_loss(const std::vector<std::vector<Vec>>& neg_features) {
  const std::size_t p = neg_features.size();
  if (p == 0) throw InvalidArgument("nnd_loss: empty feature set");
  const std::size_t k = neg_features[0].size();
  if (k == 0) throw InvalidArgument("nnd_loss: no classes");
  for (const auto& row : neg_features) {
    if (row.size() != k) throw InvalidArgument("nnd_loss: shape mismatch");
  }

  NndLoss out;
  out.grad_neg.assign(p, std::vector<Vec>(k));
  for (std::size_t l = 0; l < p; ++l) {
    for (std::size_t j = 0; j < k; ++j) {
      out.grad_neg[l][j].assign(neg_features[l][j].size(), 0.0);
    }
  }
  if (p == 1) return out;  // empty ordered-pair sum, defined as 0

  const double scale = 1.0 / static_cast<double>(k * p * (p - 1));
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t l = 0; l < p; ++l) {
        if (l == i) continue;
        out.loss += scale * cosine_sim(neg_features[i][j], neg_features[l][j]);
        // each ordered pair contributes to both factors' gradients
        axpy(scale, neg_features[l][j], out.grad_neg[i][j]);
        axpy(scale, neg_features[i][j], out.grad_neg[l][j]);
      }
    }
  }
  return out;
}

}  // namespace negprompt
