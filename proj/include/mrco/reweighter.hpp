#pragma once

#include <cstddef>
#include <vector>

#include "mrco/tensor.hpp"

namespace mrco {

using ad::Rng;
using ad::Tensor;

struct ReweightConfig {
  std::size_t n_classes = 2;
  std::size_t d_h = 64;
  std::size_t d_label = 16;
  std::size_t d_hidden = 64;  // single hidden layer; must stay shallow
  double dropout_p = 0.1;
};

/// Scores augmented samples from their hidden vector plus an embedding of the
/// (inherited) label. Sigmoid output keeps every weight strictly inside (0,1).
struct ReweightNet {
  ReweightConfig config;
  Tensor label_embedding;  // n_classes x d_label
  Tensor w1;               // (d_h + d_label) x d_hidden
  Tensor b1;               // d_hidden
  Tensor w2;               // d_hidden x 1
  Tensor b2;               // 1, zero-initialized so weights start near 0.5

  static ReweightNet init(const ReweightConfig& config, Rng& rng);
  ReweightNet clone() const;
  std::vector<Tensor> parameters() const;

  /// Same structure with every parameter tensor replaced, parameters() order.
  ReweightNet with_parameters(const std::vector<Tensor>& replacement) const;
};

/// Per-sample weights w_j = sigmoid(mlp([h_j ; label_emb(y_j)])), shape {B}.
/// Differentiable w.r.t. both the net parameters and h_hat. Train mode applies
/// dropout after the hidden layer.
Tensor compute_weights(const Tensor& h_hat, const std::vector<std::size_t>& y_hat,
                       const ReweightNet& net, bool train_mode, Rng& rng);

}  // namespace mrco
