#pragma once

#include "wsloc/model.hpp"
#include "wsloc/tensor.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

struct LossHyper {
  int s = 3;
  double p = 1000.0;
  double q = 10.0;
  double activation_threshold = 0.5;
  double lambda_weight = 0.8;
  bool literal_eq5 = false;  // use the l/q margin instead of the 1/q default
};

/// Per-video loss values plus the differentiable combined loss.
struct LossBreakdown {
  double cls_ia = 0.0;
  double cls_ua = 0.0;
  double overlap = 0.0;
  double order = 0.0;
  double total = 0.0;
  Tensor total_t;
};

/// Per-class mean of the k largest TCAM entries along time, k = max(1, floor(l/s)).
Tensor video_class_scores(const Tensor& tcam, int s);

/// -log softmax(scores)[label], computed via log-sum-exp.
Tensor mil_nll(const Tensor& scores, std::size_t label);

/// Hinge penalty on the mean of one head's attention over the clips where the
/// other head exceeds the activation threshold; an empty index set contributes
/// zero. Index-set membership is not differentiated.
Tensor overlap_reg(const Tensor& lambda_ia, const Tensor& lambda_ua,
                   double activation_threshold, double p);

/// Hinge penalty on the softmax-weighted attention centroids: the goal head's
/// centroid must precede the unintentional head's by the margin (1/q after the
/// /l normalization; `literal` keeps the l/q form).
Tensor order_reg(const Tensor& lambda_ia, const Tensor& lambda_ua, double q,
                 bool literal = false);

/// Softmax-weighted centroid of a track, with clips indexed 1..l.
Tensor attention_centroid(const Tensor& lambda);

/// lambda_weight * (cls_ia + cls_ua) + (1 - lambda_weight) * (overlap + order).
LossBreakdown total_loss(const ModelOutputs& outputs, const LabelVector& label,
                         const LossHyper& hyper);

/// End-to-end derivative check: random features (l, hp.d), fresh parameters,
/// random labels, then grad_check of the combined loss with respect to every
/// parameter and the input. Returns the max relative error.
double total_loss_grad_check(const ModelHyper& hp, std::size_t l,
                             std::uint64_t seed, const GradCheckOptions& opts,
                             bool literal_eq5 = false);

}  // namespace wsloc
