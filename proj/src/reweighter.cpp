#include "mrco/reweighter.hpp"

#include <stdexcept>

#include "mrco/encoder.hpp"

namespace mrco {

namespace {

// sigmoid(27) is still strictly below 1 in double precision; clamping the
// pre-activation there preserves 0 < w < 1 for arbitrarily large logits.
constexpr double kPreactLimit = 27.0;

}  // namespace

ReweightNet ReweightNet::init(const ReweightConfig& config, Rng& rng) {
  if (config.n_classes < 2)
    throw std::invalid_argument("reweighter: need at least 2 classes");
  if (config.dropout_p < 0.0 || config.dropout_p >= 1.0)
    throw std::invalid_argument("reweighter: dropout_p must be in [0,1)");
  ReweightNet n;
  n.config = config;
  n.label_embedding = xavier_uniform(config.n_classes, config.d_label, rng);
  n.w1 = xavier_uniform(config.d_h + config.d_label, config.d_hidden, rng);
  n.b1 = Tensor::param({config.d_hidden},
                       std::vector<double>(config.d_hidden, 0.0));
  n.w2 = xavier_uniform(config.d_hidden, 1, rng);
  n.b2 = Tensor::param({1}, {0.0});
  return n;
}

ReweightNet ReweightNet::clone() const {
  auto copy = [](const Tensor& t) { return Tensor::param(t.shape(), t.values()); };
  ReweightNet n;
  n.config = config;
  n.label_embedding = copy(label_embedding);
  n.w1 = copy(w1);
  n.b1 = copy(b1);
  n.w2 = copy(w2);
  n.b2 = copy(b2);
  return n;
}

std::vector<Tensor> ReweightNet::parameters() const {
  return {label_embedding, w1, b1, w2, b2};
}

ReweightNet ReweightNet::with_parameters(
    const std::vector<Tensor>& replacement) const {
  std::vector<Tensor> current = parameters();
  if (replacement.size() != current.size())
    throw std::invalid_argument("with_parameters: expected " +
                                std::to_string(current.size()) + " tensors");
  for (std::size_t i = 0; i < current.size(); ++i)
    if (replacement[i].shape() != current[i].shape())
      throw std::invalid_argument("with_parameters: shape mismatch at tensor " +
                                  std::to_string(i));
  ReweightNet n;
  n.config = config;
  n.label_embedding = replacement[0];
  n.w1 = replacement[1];
  n.b1 = replacement[2];
  n.w2 = replacement[3];
  n.b2 = replacement[4];
  return n;
}

Tensor compute_weights(const Tensor& h_hat, const std::vector<std::size_t>& y_hat,
                       const ReweightNet& net, bool train_mode, Rng& rng) {
  const ReweightConfig& cfg = net.config;
  if (h_hat.shape().size() != 2 || h_hat.cols() != cfg.d_h)
    throw std::invalid_argument("compute_weights: expected B x " +
                                std::to_string(cfg.d_h) + " hidden batch, got " +
                                ad::shape_str(h_hat.shape()));
  std::size_t b = h_hat.rows();
  if (y_hat.size() != b)
    throw std::invalid_argument("compute_weights: batch size mismatch");
  for (std::size_t y : y_hat)
    if (y >= cfg.n_classes)
      throw std::invalid_argument("compute_weights: label " + std::to_string(y) +
                                  " out of range");

  Tensor labels = ad::gather_rows(net.label_embedding, y_hat);  // B x d_label
  std::vector<Tensor> rows;
  rows.reserve(b);
  for (std::size_t j = 0; j < b; ++j)
    rows.push_back(ad::concat_vec({ad::row(h_hat, j), ad::row(labels, j)}));
  Tensor input = ad::stack_rows(rows);  // B x (d_h + d_label)

  Tensor z1 = ad::tanh_t(ad::add(ad::matmul(input, net.w1),
                                 ad::broadcast_rows(net.b1, b)));
  z1 = ad::dropout(z1, cfg.dropout_p, rng, train_mode);
  Tensor z2 = ad::add(ad::matmul(z1, net.w2), ad::broadcast_rows(net.b2, b));
  Tensor pre = ad::clamp(ad::reshape(z2, {b}), -kPreactLimit, kPreactLimit);
  return ad::sigmoid(pre);
}

}  // namespace mrco
