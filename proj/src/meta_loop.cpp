#include "mrco/meta_loop.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrco {

AdamState::AdamState(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw std::invalid_argument("adam: lr must be positive");
}

void AdamState::set_lr(double lr) {
  if (lr <= 0.0) throw std::invalid_argument("adam: lr must be positive");
  lr_ = lr;
}

void AdamState::step(const std::vector<Tensor>& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    Tensor leaf = p;
    const std::vector<double>& g = leaf.grad();
    auto& [m, v] = moments_[leaf.node()];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    auto& vals = leaf.leaf_values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      vals[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

OptimizerState OptimizerState::init(double main_lr, double meta_lr,
                                    double reweight_lr) {
  if (main_lr <= 0 || meta_lr <= 0 || reweight_lr <= 0)
    throw std::invalid_argument("optimizer: learning rates must be positive");
  OptimizerState s;
  s.main_lr = main_lr;
  s.meta_lr = meta_lr;
  s.reweight_lr = reweight_lr;
  s.main_adam = AdamState(main_lr);
  s.reweight_adam = AdamState(reweight_lr);
  return s;
}

void zero_grads(const std::vector<Tensor>& params) {
  for (Tensor p : params) p.zero_grad();
}

BatchForward forward_batch(const RawBatch& raw, const AugBatch& aug,
                           const EncoderParams& model, bool train_mode) {
  if (raw.size() == 0)
    throw std::invalid_argument("forward_batch: raw batch is empty");
  if (raw.labels.size() != raw.size())
    throw std::invalid_argument("forward_batch: raw batch fields not aligned");
  if (aug.labels.size() != aug.size() || aug.origin_ids.size() != aug.size())
    throw std::invalid_argument("forward_batch: aug batch fields not aligned");

  BatchForward fw;
  std::vector<Tensor> raw_losses;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Tensor h = encode(raw.tokens[i], model, train_mode);
    fw.raw_h.push_back(h);
    raw_losses.push_back(
        ad::reshape(ad::cross_entropy_vec(class_logits(h, model), raw.labels[i]),
                    {1}));
  }
  Tensor raw_vec = ad::concat_vec(raw_losses);
  fw.raw_loss_mean = ad::reshape(ad::mean_all(raw_vec), {});

  if (aug.size() > 0) {
    std::vector<Tensor> aug_hs;
    std::vector<Tensor> aug_losses;
    for (std::size_t j = 0; j < aug.size(); ++j) {
      Tensor h = encode(aug.tokens[j], model, train_mode);
      aug_hs.push_back(h);
      aug_losses.push_back(ad::reshape(
          ad::cross_entropy_vec(class_logits(h, model), aug.labels[j]), {1}));
    }
    fw.aug_h = ad::stack_rows(aug_hs);
    fw.aug_loss_vec = ad::concat_vec(aug_losses);
  }
  return fw;
}

Tensor task_loss_from(const BatchForward& fw, const Tensor& weights) {
  if (!fw.aug_loss_vec.defined() || fw.aug_loss_vec.size() == 0)
    return fw.raw_loss_mean;
  if (!weights.defined() || weights.shape() != fw.aug_loss_vec.shape())
    throw std::invalid_argument("task_loss: weight vector shape mismatch");
  for (double w : weights.values())
    if (!(w >= 0.0 && w <= 1.0))
      throw std::invalid_argument("task_loss: weight " + std::to_string(w) +
                                  " outside [0,1]");
  return ad::add(fw.raw_loss_mean,
                 ad::mean_all(ad::mul(weights, fw.aug_loss_vec)));
}

Tensor task_loss(const RawBatch& raw, const AugBatch& aug, const Tensor& weights,
                 const EncoderParams& model) {
  return task_loss_from(forward_batch(raw, aug, model, false), weights);
}

EncoderParams virtual_update(const EncoderParams& model, const Tensor& loss,
                             double alpha) {
  if (alpha < 0.0)
    throw std::invalid_argument("virtual_update: alpha must be >= 0");
  ad::BackwardResult bw = ad::backward(loss, true);
  std::vector<Tensor> stepped;
  for (const Tensor& p : model.parameters()) {
    if (bw.has(p))
      stepped.push_back(ad::sub(p, ad::scale(bw.grad_expr(p), alpha)));
    else
      stepped.push_back(p);  // no gradient path: parameter is a fixed point
  }
  return model.with_parameters(stepped);
}

Tensor batch_cross_entropy(const RawBatch& batch, const EncoderParams& model,
                           bool train_mode) {
  if (batch.size() == 0)
    throw std::invalid_argument("batch_cross_entropy: batch is empty");
  std::vector<Tensor> losses;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor h = encode(batch.tokens[i], model, train_mode);
    losses.push_back(ad::reshape(
        ad::cross_entropy_vec(class_logits(h, model), batch.labels[i]), {1}));
  }
  return ad::reshape(ad::mean_all(ad::concat_vec(losses)), {});
}

namespace {

void zero_everything(const EncoderParams& model, const ReweightNet& net) {
  zero_grads(model.parameters());
  zero_grads(net.parameters());
}

}  // namespace

std::pair<double, double> meta_step(const MetaBatch& batch, EncoderParams& model,
                                    ReweightNet& net, OptimizerState& opt,
                                    Rng& rng, bool train_mode) {
  BatchForward fw = forward_batch(batch.task_raw, batch.task_aug, model,
                                  train_mode);
  Tensor w = compute_weights(fw.aug_h, batch.task_aug.labels, net, train_mode,
                             rng);
  Tensor l_task = task_loss_from(fw, w);
  EncoderParams theta_star = virtual_update(model, l_task, opt.meta_lr);
  Tensor l_meta = batch_cross_entropy(batch.meta_raw, theta_star, false);

  zero_everything(model, net);
  ad::backward(l_meta);
  opt.reweight_adam.step(net.parameters());
  zero_everything(model, net);
  return {l_task.value(), l_meta.value()};
}

IterationMetrics train_iteration(const MetaBatch& batch, EncoderParams& model,
                                 ReweightNet& net, ContrastiveState& contrastive,
                                 OptimizerState& opt, const TrainOptions& options,
                                 Rng& rng) {
  const RawBatch& raw = batch.task_raw;
  const AugBatch& aug = batch.task_aug;
  bool train_mode = options.train_mode;
  IterationMetrics metrics;

  // forward shared by the meta step and the real step
  BatchForward fw = forward_batch(raw, aug, model, train_mode);
  Tensor w0 = compute_weights(fw.aug_h, aug.labels, net, train_mode, rng);
  Tensor l_task0 = task_loss_from(fw, w0);

  // meta step: descend L_Meta(theta*(reweighter)) in the reweighter only
  EncoderParams theta_star = virtual_update(model, l_task0, opt.meta_lr);
  Tensor l_meta = batch_cross_entropy(batch.meta_raw, theta_star, false);
  zero_everything(model, net);
  ad::backward(l_meta);
  opt.reweight_adam.step(net.parameters());
  zero_everything(model, net);
  metrics.meta_loss = l_meta.value();

  // real step: task loss under the chosen weights, plus the contrastive term
  Tensor w1 = options.recompute_w_after_meta
                  ? compute_weights(fw.aug_h, aug.labels, net, train_mode, rng)
                  : w0;
  Tensor l_task = task_loss_from(fw, w1);
  metrics.task_loss = l_task.value();
  Tensor l_final = l_task;

  std::vector<std::vector<double>> key_reprs;
  if (options.lambda != 0.0 && aug.size() > 0) {
    key_reprs.reserve(aug.size());
    for (std::size_t j = 0; j < aug.size(); ++j)
      key_reprs.push_back(
          encode(aug.tokens[j], contrastive.key_encoder, false).values());

    std::vector<std::vector<Tensor>> positives(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      for (std::size_t j : select_positives(aug.origin_ids, aug.labels,
                                            w1.values(), raw.ids[i],
                                            raw.labels[i],
                                            contrastive.config.rho))
        positives[i].push_back(
            Tensor::from_values({key_reprs[j].size()}, key_reprs[j]));
    }
    Tensor l_contrast =
        contrastive_loss(fw.raw_h, raw.labels, positives, contrastive);
    metrics.contrastive_loss = l_contrast.value();
    if (l_contrast.requires_grad() || l_contrast.value() != 0.0)
      l_final = ad::add(l_final, ad::scale(l_contrast, options.lambda));
  }

  zero_everything(model, net);
  ad::backward(l_final);
  opt.main_adam.step(model.parameters());
  zero_everything(model, net);

  if (options.lambda != 0.0) {
    momentum_update(contrastive.key_encoder, model, contrastive.config.gamma);
    if (aug.size() > 0) {
      if (options.fifo_queues)
        fifo_update(contrastive.queues, key_reprs, aug.labels, w1.values(),
                    contrastive.config.tau);
      else
        lasw_update(contrastive.queues, key_reprs, aug.labels, w1.values(),
                    contrastive.config.tau);
    }
  }

  if (w1.defined() && w1.size() > 0) {
    const auto& wv = w1.values();
    metrics.w_min = *std::min_element(wv.begin(), wv.end());
    metrics.w_max = *std::max_element(wv.begin(), wv.end());
    double s = 0;
    for (double x : wv) s += x;
    metrics.w_mean = s / static_cast<double>(wv.size());
  }
  return metrics;
}

}  // namespace mrco
