#pragma once

#include <cstdint>
#include <vector>

#include "core_math.hpp"

namespace negprompt {

// Loss kernels at the similarity / feature level. Gradients with respect to
// prompt tokens are assembled in the training module by chaining these
// through the encoder VJP.

// Cross-entropy over temperature-scaled positive similarities.
// sims[b] holds the k class logits (already divided by tau) for image b.
// loss = mean_b -log softmax(sims[b])[labels[b]]
// grad[b] = (softmax(sims[b]) - onehot(labels[b])) / batch
struct PositiveLoss {
  double loss = 0.0;
  std::vector<Vec> grad_sims;
};
PositiveLoss positive_loss(const std::vector<Vec>& sims, const std::vector<uint32_t>& labels);

// Negative-image separation: cross-entropy between the uniform distribution
// and the softmax over the flattened negative similarities.
// loss = mean_b -(1/(kp)) sum_j log softmax(sims[b])[j]
// grad[b] = (softmax(sims[b]) - uniform) / batch
struct NisLoss {
  double loss = 0.0;
  std::vector<Vec> grad_sims;
};
NisLoss nis_loss(const std::vector<Vec>& sims);

// Negative-positive distance: mean cosine similarity between each negative
// class feature and its positive class feature, negated. Positive features
// are treated as constants.
// neg_features[l][j] pairs with pos_features[j]; all unit norm.
struct NpdLoss {
  double loss = 0.0;
  std::vector<std::vector<Vec>> grad_neg;  // p x k x feature_dim
};
NpdLoss npd_loss(const std::vector<std::vector<Vec>>& neg_features,
                 const std::vector<Vec>& pos_features);

// Negative-negative distance: mean cosine similarity between distinct
// negative features of the same class. Zero (with zero gradient) at p = 1.
struct NndLoss {
  double loss = 0.0;
  std::vector<std::vector<Vec>> grad_neg;
};
NndLoss nnd_loss(const std::vector<std::vector<Vec>>& neg_features);

}  // namespace negprompt
