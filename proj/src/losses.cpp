#include "wsloc/losses.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wsloc/rng.hpp"

namespace wsloc {

Tensor video_class_scores(const Tensor& tcam, int s) {
  if (tcam.shape().size() != 2) {
    throw ShapeError("video_class_scores expects a (clips, classes) matrix");
  }
  if (s <= 0) {
    throw Error("video_class_scores: s must be positive");
  }
  const std::size_t l = tcam.shape()[0];
  const std::size_t n = tcam.shape()[1];
  std::size_t k = l / static_cast<std::size_t>(s);
  if (k == 0) k = 1;
  std::vector<Tensor> per_class;
  per_class.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    per_class.push_back(topk_mean(column(tcam, c), k));
  }
  return stack_scalars(per_class);
}

Tensor mil_nll(const Tensor& scores, std::size_t label) {
  if (scores.shape().size() != 1) {
    throw ShapeError("mil_nll expects a vector of class scores");
  }
  if (label >= scores.size()) {
    throw Error("mil_nll: label out of range");
  }
  return sub(logsumexp(scores), at(scores, label));
}

namespace {

// Clip indices where the track exceeds the threshold. Membership is decided
// from current values only, so no gradient flows through the selection.
std::vector<std::size_t> active_set(const Tensor& lambda, double threshold) {
  std::vector<std::size_t> idx;
  const auto& v = lambda.value();
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (v[t] > threshold) idx.push_back(t);
  }
  return idx;
}

Tensor overlap_term(const Tensor& own, const std::vector<std::size_t>& other_set,
                    double p, std::size_t l) {
  if (other_set.empty()) {
    return Tensor::scalar(0.0);
  }
  Tensor mean_on_other = mean_all(gather(own, other_set));
  double margin = static_cast<double>(l) / p;
  return max_scalar(add_scalar(mean_on_other, -margin), 0.0);
}

}  // namespace

Tensor overlap_reg(const Tensor& lambda_ia, const Tensor& lambda_ua,
                   double activation_threshold, double p) {
  if (lambda_ia.shape() != lambda_ua.shape() || lambda_ia.shape().size() != 1) {
    throw ShapeError("overlap_reg expects two attention vectors of equal length");
  }
  const std::size_t l = lambda_ia.size();
  auto set_ia = active_set(lambda_ia, activation_threshold);
  auto set_ua = active_set(lambda_ua, activation_threshold);
  Tensor a = overlap_term(lambda_ia, set_ua, p, l);
  Tensor b = overlap_term(lambda_ua, set_ia, p, l);
  return add(a, b);
}

Tensor attention_centroid(const Tensor& lambda) {
  if (lambda.shape().size() != 1) {
    throw ShapeError("attention_centroid expects an attention vector");
  }
  const std::size_t l = lambda.size();
  std::vector<double> positions(l);
  for (std::size_t t = 0; t < l; ++t) {
    positions[t] = static_cast<double>(t + 1);
  }
  Tensor pos = Tensor::constant(Shape{l}, positions);
  return dot(softmax(lambda), pos);
}

Tensor order_reg(const Tensor& lambda_ia, const Tensor& lambda_ua, double q,
                 bool literal) {
  if (lambda_ia.shape() != lambda_ua.shape() || lambda_ia.shape().size() != 1) {
    throw ShapeError("order_reg expects two attention vectors of equal length");
  }
  const double l = static_cast<double>(lambda_ia.size());
  Tensor mu_ia = attention_centroid(lambda_ia);
  Tensor mu_ua = attention_centroid(lambda_ua);
  // (mu_ia - mu_ua) / l keeps the gap in [-1, 1]; the margin shrinks to 1/q
  // under the same normalization unless the literal l/q form is requested.
  double margin = (literal ? l : 1.0) / q;
  Tensor gap = scale(sub(mu_ia, mu_ua), 1.0 / l);
  return max_scalar(add_scalar(gap, margin), 0.0);
}

LossBreakdown total_loss(const ModelOutputs& outputs, const LabelVector& label,
                         const LossHyper& hyper) {
  Tensor scores_ia = video_class_scores(outputs.tcam_ia, hyper.s);
  Tensor scores_ua = video_class_scores(outputs.tcam_ua, hyper.s);
  Tensor cls_ia = mil_nll(scores_ia, label.goal_class);
  Tensor cls_ua = mil_nll(scores_ua, label.unint_class);
  Tensor overlap = overlap_reg(outputs.lambda_ia, outputs.lambda_ua,
                               hyper.activation_threshold, hyper.p);
  Tensor order = order_reg(outputs.lambda_ia, outputs.lambda_ua, hyper.q,
                           hyper.literal_eq5);

  const double w = hyper.lambda_weight;
  Tensor total = add(scale(add(cls_ia, cls_ua), w),
                     scale(add(overlap, order), 1.0 - w));

  LossBreakdown out;
  out.cls_ia = cls_ia.item();
  out.cls_ua = cls_ua.item();
  out.overlap = overlap.item();
  out.order = order.item();
  out.total = total.item();
  out.total_t = total;
  return out;
}

double total_loss_grad_check(const ModelHyper& hp, std::size_t l,
                             std::uint64_t seed, const GradCheckOptions& opts,
                             bool literal_eq5) {
  if (hp.d == 0 || hp.n_ia == 0 || hp.n_ua == 0) {
    throw Error("total_loss_grad_check: hyperparameters need d, n_ia, n_ua");
  }
  Rng rng(seed);
  std::vector<double> x(l * hp.d);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  LabelVector label{rng.index(hp.n_ia), rng.index(hp.n_ua)};

  LossHyper lh;
  lh.s = hp.s;
  lh.p = hp.p;
  lh.q = hp.q;
  lh.activation_threshold = hp.activation_threshold;
  lh.lambda_weight = hp.lambda_weight;
  lh.literal_eq5 = literal_eq5;

  Params params = init_params(hp, seed + 1);
  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : params.items()) {
    names.push_back(name);
    inputs.push_back(t);
  }
  inputs.push_back(Tensor::constant(Shape{l, hp.d}, std::move(x)));

  auto f = [names, hp, label, lh](const std::vector<Tensor>& in) {
    Params p;
    for (std::size_t i = 0; i < names.size(); ++i) p.add(names[i], in[i]);
    ModelOutputs mo = forward(in.back(), p, hp);
    return total_loss(mo, label, lh).total_t;
  };
  return grad_check(f, inputs, opts);
}

}  // namespace wsloc
