#include "wsloc/model.hpp"

#include <cmath>

#include "wsloc/rng.hpp"

namespace wsloc {

Tensor& Params::add(std::string name, Tensor t) {
  if (has(name)) throw Error("params: duplicate name " + name);
  items_.emplace_back(std::move(name), std::move(t));
  return items_.back().second;
}

const Tensor& Params::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw Error("params: unknown name " + name);
}

bool Params::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

std::size_t Params::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void Params::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

namespace {

Tensor init_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::variable(std::move(shape), std::move(v));
}

void init_attention_stack(Params& p, const std::string& prefix, std::size_t in,
                          std::size_t mid, Rng& rng) {
  p.add(prefix + ".0.w", init_tensor({in, mid}, in, rng));
  p.add(prefix + ".0.b", init_tensor({mid}, in, rng));
  p.add(prefix + ".1.w", init_tensor({mid, 1}, mid, rng));
  p.add(prefix + ".1.b", init_tensor({1}, mid, rng));
}

struct GruGates {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;
};

GruGates gru_gates(const Params& p, std::size_t layer, const char* dir) {
  const std::string base = "gru.l" + std::to_string(layer) + "." + dir + ".";
  return {p.get(base + "w_z"), p.get(base + "u_z"), p.get(base + "b_z"),
          p.get(base + "w_r"), p.get(base + "u_r"), p.get(base + "b_r"),
          p.get(base + "w_h"), p.get(base + "u_h"), p.get(base + "b_h")};
}

// One direction of one GRU layer over the (l, in) input; returns the
// per-timestep hidden states indexed by original time.
std::vector<Tensor> gru_scan(const Tensor& input, const GruGates& g, std::size_t h,
                             bool reverse) {
  const std::size_t l = input.dim(0);
  std::vector<Tensor> states(l);
  Tensor h_prev = Tensor::zeros({h});
  for (std::size_t step = 0; step < l; ++step) {
    const std::size_t t = reverse ? l - 1 - step : step;
    Tensor x_t = row(input, t);
    Tensor z = sigmoid(add(add(matmul(g.w_z, x_t), matmul(g.u_z, h_prev)), g.b_z));
    Tensor r = sigmoid(add(add(matmul(g.w_r, x_t), matmul(g.u_r, h_prev)), g.b_r));
    Tensor h_new =
        tanh(add(add(matmul(g.w_h, x_t), mul(r, matmul(g.u_h, h_prev))), g.b_h));
    Tensor one_minus_z = add_scalar(scale(z, -1.0), 1.0);
    Tensor h_t = add(mul(one_minus_z, h_new), mul(z, h_prev));
    states[t] = h_t;
    h_prev = h_t;
  }
  return states;
}

}  // namespace

Params init_params(const ModelHyper& hp, std::uint64_t seed) {
  if (hp.d == 0 || hp.h == 0 || hp.layers == 0 || hp.n_ia == 0 || hp.n_ua == 0)
    throw Error("init_params: d, h, layers and class counts must be positive");
  Rng rng(seed);
  Params p;
  const char* gates[3] = {"z", "r", "h"};
  for (std::size_t layer = 0; layer < hp.layers; ++layer) {
    const std::size_t in = layer == 0 ? hp.d : 2 * hp.h;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base = "gru.l" + std::to_string(layer) + "." + dir + ".";
      for (const char* gate : gates) {
        p.add(base + "w_" + gate, init_tensor({hp.h, in}, in, rng));
        p.add(base + "u_" + gate, init_tensor({hp.h, hp.h}, hp.h, rng));
        p.add(base + "b_" + gate, init_tensor({hp.h}, in, rng));
      }
    }
  }
  init_attention_stack(p, "attn_ia", 2 * hp.h, hp.h, rng);
  init_attention_stack(p, "attn_ua", 2 * hp.h, hp.h, rng);
  p.add("head_ia.w", init_tensor({2 * hp.h, hp.n_ia}, 2 * hp.h, rng));
  p.add("head_ia.b", init_tensor({hp.n_ia}, 2 * hp.h, rng));
  p.add("head_ua.w", init_tensor({2 * hp.h, hp.n_ua}, 2 * hp.h, rng));
  p.add("head_ua.b", init_tensor({hp.n_ua}, 2 * hp.h, rng));
  return p;
}

Tensor encode(const Tensor& x, const Params& params, const ModelHyper& hp) {
  if (x.rank() != 2 || x.dim(1) != hp.d)
    throw ShapeError("encode: layer 0 expects (l," + std::to_string(hp.d) +
                     ") input, got " + shape_str(x.shape()));
  Tensor input = x;
  Tensor output;
  for (std::size_t layer = 0; layer < hp.layers; ++layer) {
    const std::size_t expect = layer == 0 ? hp.d : 2 * hp.h;
    if (input.dim(1) != expect)
      throw ShapeError("encode: layer " + std::to_string(layer) + " expects width " +
                       std::to_string(expect) + ", got " + shape_str(input.shape()));
    auto fwd = gru_scan(input, gru_gates(params, layer, "fwd"), hp.h, false);
    auto bwd = gru_scan(input, gru_gates(params, layer, "bwd"), hp.h, true);
    std::vector<Tensor> rows(fwd.size());
    for (std::size_t t = 0; t < fwd.size(); ++t) rows[t] = concat(fwd[t], bwd[t]);
    output = stack_rows(rows);
    input = output;
  }
  return output;
}

Tensor attention(const Tensor& o_joint, const Params& params, const std::string& prefix) {
  Tensor a = o_joint;
  for (std::size_t i = 0;; ++i) {
    const std::string base = prefix + "." + std::to_string(i) + ".";
    if (!params.has(base + "w")) {
      if (i == 0) throw Error("attention: no layers under " + prefix);
      break;
    }
    if (i > 0) a = relu(a);
    a = add_rowvec(matmul(a, params.get(base + "w")), params.get(base + "b"));
  }
  if (a.dim(1) != 1)
    throw ShapeError("attention: final layer of " + prefix +
                     " must have one output channel, got " + shape_str(a.shape()));
  return sigmoid(reshape(a, {a.dim(0)}));
}

Tensor attend_features(const Tensor& o_joint, const Tensor& lambda) {
  return scale_rows(o_joint, lambda);
}

Tensor tcam_head(const Tensor& o_seg, const Params& params, const std::string& prefix) {
  return add_rowvec(matmul(o_seg, params.get(prefix + ".w")),
                    params.get(prefix + ".b"));
}

ModelOutputs forward(const Tensor& x, const Params& params, const ModelHyper& hp) {
  ModelOutputs out;
  out.o_joint = encode(x, params, hp);
  out.lambda_ia = attention(out.o_joint, params, "attn_ia");
  out.lambda_ua = attention(out.o_joint, params, "attn_ua");
  for (const Tensor* lam : {&out.lambda_ia, &out.lambda_ua})
    for (std::size_t t = 0; t < lam->size(); ++t)
      if (!((*lam)[t] > 0.0 && (*lam)[t] < 1.0))
        throw Error("forward: attention weight left (0,1) at clip " + std::to_string(t));
  out.o_ia = attend_features(out.o_joint, out.lambda_ia);
  out.o_ua = attend_features(out.o_joint, out.lambda_ua);
  out.tcam_ia = tcam_head(out.o_ia, params, "head_ia");
  out.tcam_ua = tcam_head(out.o_ua, params, "head_ua");
  return out;
}

Tensor features_tensor(const Matrix& m) {
  return Tensor::constant({m.rows, m.cols}, m.data);
}

}  // namespace wsloc
