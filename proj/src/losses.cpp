#include "flanet/losses.hpp"

#include "flanet/ops.hpp"

namespace flanet {

template <typename T>
Var<T> contrastive_loss(const Var<T>& h_t, const Var<T>& h_prev, const Var<T>& negative,
                        T alpha) {
  require_same_shape(h_t.shape(), h_prev.shape(), "contrastive_loss positive");
  require_same_shape(h_t.shape(), negative.shape(), "contrastive_loss negative");
  if (alpha < T(0)) throw ParamError("contrastive_loss: margin must be >= 0");
  const Var<T> gap = ops::sub(ops::mse(h_t, h_prev), ops::mse(h_t, negative));
  return ops::relu(ops::add_scalar(gap, alpha));
}

template <typename T>
Var<T> soft_iou_loss(const Var<T>& prob, const Tensor<T>& mask, T eps) {
  return ops::soft_iou(prob, mask, eps);
}

template <typename T>
Loss<T> total_loss(const LossInputs<T>& in, const LossWeights& weights, T alpha) {
  require_same_shape(in.seg_logits.shape(), in.seg_target.shape(), "total_loss segmentation");
  for (T v : in.seg_target.values()) {
    if (v != T(0) && v != T(1)) throw ValidationError("segmentation target must be binary");
  }

  Loss<T> out;
  out.terms.weights = weights;

  const Var<T> bce = ops::bce_with_logits(in.seg_logits, in.seg_target);
  const Var<T> iou = ops::soft_iou(ops::sigmoid(in.seg_logits), in.seg_target);
  out.terms.bce = static_cast<double>(bce.item());
  out.terms.iou = static_cast<double>(iou.item());
  Var<T> total = ops::add(ops::scale(bce, static_cast<T>(weights.bce)),
                          ops::scale(iou, static_cast<T>(weights.iou)));

  if (in.heatmap) {
    const Var<T> mse = ops::mse(in.heatmap, Var<T>::constant(in.heatmap_target));
    out.terms.mse_heatmap = static_cast<double>(mse.item());
    total = ops::add(total, ops::scale(mse, static_cast<T>(weights.heatmap)));
  }

  if (!in.triples.empty()) {
    Var<T> acc;
    for (const auto& tr : in.triples) {
      const Var<T> term = contrastive_loss(tr.anchor, tr.positive, tr.negative, alpha);
      acc = acc ? ops::add(acc, term) : term;
    }
    const Var<T> contrastive = ops::scale(acc, T(1) / static_cast<T>(in.triples.size()));
    out.terms.contrastive = static_cast<double>(contrastive.item());
    total = ops::add(total, contrastive);
  }

  out.total = total;
  out.terms.total = static_cast<double>(total.item());
  return out;
}

template Var<float> contrastive_loss(const Var<float>&, const Var<float>&, const Var<float>&,
                                     float);
template Var<double> contrastive_loss(const Var<double>&, const Var<double>&,
                                      const Var<double>&, double);
template Var<float> soft_iou_loss(const Var<float>&, const Tensor<float>&, float);
template Var<double> soft_iou_loss(const Var<double>&, const Tensor<double>&, double);
template Loss<float> total_loss(const LossInputs<float>&, const LossWeights&, float);
template Loss<double> total_loss(const LossInputs<double>&, const LossWeights&, double);

}  // namespace flanet
