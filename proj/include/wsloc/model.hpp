#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsloc/tensor.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

/// Architecture and loss hyperparameters carried with every checkpoint.
struct ModelHyper {
  std::size_t d = 0;       // input feature dim
  std::size_t h = 256;     // GRU hidden size per direction
  std::size_t layers = 3;  // stacked bidirectional GRU layers
  std::size_t n_ia = 0;    // goal-directed classes
  std::size_t n_ua = 0;    // unintentional classes
  int s = 3;
  double p = 1000.0;
  double q = 10.0;
  double lambda_weight = 0.8;
  double activation_threshold = 0.5;
};

/// Ordered set of named parameter tensors. Order is the construction order
/// and is preserved by checkpoints (optimizer state is indexed by it).
class Params {
 public:
  Tensor& add(std::string name, Tensor t);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t count() const { return items_.size(); }
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

/// All per-video tensors produced by one forward pass.
struct ModelOutputs {
  Tensor o_joint;    // (l, 2h)
  Tensor lambda_ia;  // (l,) in (0,1)
  Tensor lambda_ua;  // (l,)
  Tensor o_ia;       // (l, 2h)
  Tensor o_ua;       // (l, 2h)
  Tensor tcam_ia;    // (l, n_ia)
  Tensor tcam_ua;    // (l, n_ua)
};

/// Fresh parameters, uniform in +-1/sqrt(fan_in), deterministic per seed.
/// The attention stacks are two kernel-size-1 layers (2h -> h -> 1).
Params init_params(const ModelHyper& hp, std::uint64_t seed);

/// Stacked bidirectional GRU; per-timestep concatenation of the final layer's
/// forward and backward hidden states. Initial hidden state is zero.
Tensor encode(const Tensor& x, const Params& params, const ModelHyper& hp);

/// Kernel-size-1 convolution stack (ReLU between layers, sigmoid last) mapping
/// each timestep of o_joint to a weight in (0,1). `prefix` selects the stack
/// ("attn_ia" or "attn_ua").
Tensor attention(const Tensor& o_joint, const Params& params, const std::string& prefix);

/// Row t of the output is lambda[t] * row t of o_joint.
Tensor attend_features(const Tensor& o_joint, const Tensor& lambda);

/// Time-shared affine map 2h -> n applied independently at every timestep.
Tensor tcam_head(const Tensor& o_seg, const Params& params, const std::string& prefix);

ModelOutputs forward(const Tensor& x, const Params& params, const ModelHyper& hp);

/// Convenience: wraps a feature matrix as a constant input tensor.
Tensor features_tensor(const Matrix& m);

}  // namespace wsloc
