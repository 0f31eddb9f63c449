#pragma once

#include <vector>

#include "flanet/autograd.hpp"

namespace flanet {

struct LossWeights {
  double heatmap = 1.0;  // lambda_1, heatmap MSE
  double bce = 1.0;      // lambda_2
  double iou = 1.0;      // lambda_3
};

/// Scalar snapshot of one evaluation of the training objective.
struct LossTerms {
  double contrastive = 0.0;
  double mse_heatmap = 0.0;
  double bce = 0.0;
  double iou = 0.0;
  double total = 0.0;
  LossWeights weights;

  /// contrastive + weights.heatmap * mse_heatmap + weights.bce * bce + weights.iou * iou.
  double weighted_sum() const {
    return contrastive + weights.heatmap * mse_heatmap + weights.bce * bce + weights.iou * iou;
  }
};

/// max(MSE(h_t, h_prev) - MSE(h_t, negative) + alpha, 0).
template <typename T>
Var<T> contrastive_loss(const Var<T>& h_t, const Var<T>& h_prev, const Var<T>& negative,
                        T alpha);

/// 1 - (sum(S*G) + eps) / (sum(S) + sum(G) - sum(S*G) + eps), averaged over the batch.
template <typename T>
Var<T> soft_iou_loss(const Var<T>& prob, const Tensor<T>& mask, T eps = T(1e-6));

template <typename T>
struct ContrastiveTriple {
  Var<T> anchor;    // H_t
  Var<T> positive;  // H_{t-1}, same video
  Var<T> negative;  // N_t, another video
};

template <typename T>
struct LossInputs {
  Var<T> seg_logits;         // n x 1 x H x W
  Tensor<T> seg_target;      // binary, same shape
  Var<T> heatmap;            // undefined disables the heatmap term
  Tensor<T> heatmap_target;
  std::vector<ContrastiveTriple<T>> triples;  // empty disables the contrastive term
};

template <typename T>
struct Loss {
  Var<T> total;
  LossTerms terms;
};

/// contrastive + w.heatmap * MSE(H, G^H) + w.bce * BCE(S, G^S) + w.iou * IoU(S, G^S).
/// The contrastive term is the mean over `triples`. Throws ValidationError for a
/// non-binary segmentation target.
template <typename T>
Loss<T> total_loss(const LossInputs<T>& in, const LossWeights& weights = {}, T alpha = T(1));

extern template Var<float> contrastive_loss(const Var<float>&, const Var<float>&,
                                            const Var<float>&, float);
extern template Var<double> contrastive_loss(const Var<double>&, const Var<double>&,
                                             const Var<double>&, double);
extern template Var<float> soft_iou_loss(const Var<float>&, const Tensor<float>&, float);
extern template Var<double> soft_iou_loss(const Var<double>&, const Tensor<double>&, double);
extern template Loss<float> total_loss(const LossInputs<float>&, const LossWeights&, float);
extern template Loss<double> total_loss(const LossInputs<double>&, const LossWeights&, double);

}  // namespace flanet
