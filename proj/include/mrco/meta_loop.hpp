#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mrco/contrastive.hpp"
#include "mrco/encoder.hpp"
#include "mrco/reweighter.hpp"
#include "mrco/tensor.hpp"

namespace mrco {

struct RawBatch {
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> ids;

  std::size_t size() const { return tokens.size(); }
};

struct AugBatch {
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> origin_ids;  // raw example each sample came from

  std::size_t size() const { return tokens.size(); }
};

/// One optimization step's data: supervised batch, its augmented counterpart,
/// and a batch from the held-out split that only the meta step sees.
struct MetaBatch {
  RawBatch task_raw;
  AugBatch task_aug;
  RawBatch meta_raw;
};

/// Adam over a fixed set of leaf tensors; moments are keyed by tensor
/// identity, so the same leaves must be passed every step.
class AdamState {
 public:
  explicit AdamState(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8);

  double lr() const { return lr_; }
  void set_lr(double lr);

  /// Applies one update using each parameter's accumulated numeric gradient.
  /// Parameters without a gradient are skipped. Gradients are left in place.
  void step(const std::vector<Tensor>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::unordered_map<const ad::detail::Node*,
                     std::pair<std::vector<double>, std::vector<double>>>
      moments_;
};

struct OptimizerState {
  double main_lr = 1e-3;
  double meta_lr = 0.1;     // virtual SGD step size
  double reweight_lr = 1e-3;
  AdamState main_adam{1e-3};
  AdamState reweight_adam{1e-3};

  static OptimizerState init(double main_lr, double meta_lr,
                             double reweight_lr);
};

void zero_grads(const std::vector<Tensor>& params);

/// Shared forward pass over one task batch.
struct BatchForward {
  std::vector<Tensor> raw_h;  // per raw example, differentiable
  Tensor raw_loss_mean;       // scalar
  Tensor aug_h;               // B x d_h
  Tensor aug_loss_vec;        // {B}, unreduced
};

BatchForward forward_batch(const RawBatch& raw, const AugBatch& aug,
                           const EncoderParams& model, bool train_mode);

/// Raw mean cross-entropy plus the weighted mean of unreduced augmented
/// losses. W entries must lie in [0,1].
Tensor task_loss_from(const BatchForward& fw, const Tensor& weights);
Tensor task_loss(const RawBatch& raw, const AugBatch& aug, const Tensor& weights,
                 const EncoderParams& model);

/// One-step gradient descent producing virtual parameters
/// theta* = theta - alpha * dL/dtheta as expressions that stay differentiable
/// w.r.t. everything upstream of L (in particular the reweighter).
EncoderParams virtual_update(const EncoderParams& model, const Tensor& loss,
                             double alpha);

/// Mean cross-entropy of a raw batch under the given (possibly virtual)
/// parameters.
Tensor batch_cross_entropy(const RawBatch& batch, const EncoderParams& model,
                           bool train_mode);

/// Reweighter update: builds the task loss with current weights, takes the
/// virtual step, and descends the meta loss w.r.t. the reweighter only.
/// Returns (task loss, meta loss) values.
std::pair<double, double> meta_step(const MetaBatch& batch, EncoderParams& model,
                                    ReweightNet& net, OptimizerState& opt,
                                    Rng& rng, bool train_mode = true);

struct TrainOptions {
  double lambda = 1.0;               // contrastive term multiplier
  bool recompute_w_after_meta = true;
  bool fifo_queues = false;          // ablation: replace the weight-aware policy
  bool train_mode = true;            // reweighter dropout switch
};

struct IterationMetrics {
  double task_loss = 0.0;
  double meta_loss = 0.0;
  double contrastive_loss = 0.0;
  double w_mean = 0.0;
  double w_min = 0.0;
  double w_max = 0.0;
};

/// Full training step: meta update of the reweighter, then the real update of
/// the main encoder on task loss plus lambda times the contrastive loss,
/// followed by key-encoder momentum and queue maintenance. lambda = 0 skips
/// every contrastive component.
IterationMetrics train_iteration(const MetaBatch& batch, EncoderParams& model,
                                 ReweightNet& net, ContrastiveState& contrastive,
                                 OptimizerState& opt, const TrainOptions& options,
                                 Rng& rng);

}  // namespace mrco
