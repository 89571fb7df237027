#include "mrco/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace mrco {

namespace {

void check_batch(const std::vector<ClassQueue>& queues,
                 const std::vector<std::vector<double>>& reprs,
                 const std::vector<std::size_t>& labels,
                 const std::vector<double>& weights) {
  if (reprs.size() != labels.size() || reprs.size() != weights.size())
    throw std::invalid_argument("queue update: batch fields not aligned");
  for (double w : weights)
    if (!(w > 0.0 && w < 1.0))
      throw std::invalid_argument("queue update: weight " + std::to_string(w) +
                                  " outside (0,1)");
  for (std::size_t y : labels)
    if (y >= queues.size())
      throw std::invalid_argument("queue update: class " + std::to_string(y) +
                                  " has no queue");
}

// Candidate indices for one class, ascending by weight, batch order on ties.
std::vector<std::size_t> class_candidates(const std::vector<std::size_t>& labels,
                                          const std::vector<double>& weights,
                                          std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == k) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return weights[a] < weights[b];
  });
  return idx;
}

void age_out(ClassQueue& q) {
  for (QueueEntry& e : q.entries) --e.lifetime;
  std::erase_if(q.entries, [](const QueueEntry& e) { return e.lifetime <= 0; });
}

Tensor maybe_normalize(const Tensor& t, bool flag) {
  return flag ? ad::l2_normalize(t) : t;
}

}  // namespace

ContrastiveState ContrastiveState::init(const EncoderParams& main_encoder,
                                        const ContrastiveConfig& config,
                                        std::size_t n_classes) {
  if (config.n_neg == 0) throw std::invalid_argument("contrastive: n_neg must be positive");
  if (config.tau < 1) throw std::invalid_argument("contrastive: tau must be >= 1");
  if (config.rho < 0.0 || config.rho > 1.0)
    throw std::invalid_argument("contrastive: rho must be in [0,1]");
  if (config.gamma < 0.0 || config.gamma > 1.0)
    throw std::invalid_argument("contrastive: gamma must be in [0,1]");
  if (config.temperature <= 0.0)
    throw std::invalid_argument("contrastive: temperature must be positive");
  ContrastiveState s;
  s.config = config;
  s.key_encoder = main_encoder.clone();
  s.queues.resize(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) {
    s.queues[k].class_id = k;
    s.queues[k].capacity = config.n_neg;
  }
  return s;
}

void momentum_update(EncoderParams& key, const EncoderParams& query,
                     double gamma) {
  if (gamma < 0.0 || gamma > 1.0)
    throw std::invalid_argument("momentum_update: gamma must be in [0,1]");
  auto kp = key.parameters();
  auto qp = query.parameters();
  if (kp.size() != qp.size())
    throw std::invalid_argument("momentum_update: parameter count mismatch");
  for (std::size_t i = 0; i < kp.size(); ++i) {
    if (kp[i].shape() != qp[i].shape())
      throw std::invalid_argument("momentum_update: shape mismatch at tensor " +
                                  std::to_string(i));
    auto& kv = kp[i].leaf_values();
    const auto& qv = qp[i].values();
    if (gamma == 0.0) {
      kv = qv;  // exact copy; the incremental form below would round
      continue;
    }
    // incremental form keeps key' - key == (1-gamma)*(query - key) exact
    for (std::size_t j = 0; j < kv.size(); ++j)
      kv[j] += (1.0 - gamma) * (qv[j] - kv[j]);
  }
}

void lasw_update(std::vector<ClassQueue>& queues,
                 const std::vector<std::vector<double>>& reprs,
                 const std::vector<std::size_t>& labels,
                 const std::vector<double>& weights, int tau) {
  if (tau < 1) throw std::invalid_argument("lasw_update: tau must be >= 1");
  check_batch(queues, reprs, labels, weights);
  for (ClassQueue& q : queues) {
    age_out(q);
    for (std::size_t i : class_candidates(labels, weights, q.class_id)) {
      if (q.entries.size() < q.capacity) {
        q.entries.push_back({reprs[i], weights[i], tau});
        continue;
      }
      // full: replace the largest stored weight if it beats this candidate
      std::size_t worst = 0;
      for (std::size_t e = 1; e < q.entries.size(); ++e)
        if (q.entries[e].weight_priority > q.entries[worst].weight_priority)
          worst = e;  // strict >: ties keep the earlier (older) entry
      if (q.entries[worst].weight_priority > weights[i]) {
        q.entries.erase(q.entries.begin() + worst);
        q.entries.push_back({reprs[i], weights[i], tau});
      }
    }
  }
}

void fifo_update(std::vector<ClassQueue>& queues,
                 const std::vector<std::vector<double>>& reprs,
                 const std::vector<std::size_t>& labels,
                 const std::vector<double>& weights, int tau) {
  if (tau < 1) throw std::invalid_argument("fifo_update: tau must be >= 1");
  check_batch(queues, reprs, labels, weights);
  for (ClassQueue& q : queues) {
    age_out(q);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != q.class_id) continue;
      if (q.entries.size() >= q.capacity) q.entries.erase(q.entries.begin());
      q.entries.push_back({reprs[i], weights[i], tau});
    }
  }
}

std::vector<std::size_t> select_positives(
    const std::vector<std::size_t>& origins,
    const std::vector<std::size_t>& labels,
    const std::vector<double>& weights, std::size_t query_origin,
    std::size_t query_class, double rho) {
  if (origins.size() != labels.size() || origins.size() != weights.size())
    throw std::invalid_argument("select_positives: batch fields not aligned");
  if (rho < 0.0 || rho > 1.0)
    throw std::invalid_argument("select_positives: rho must be in [0,1]");
  std::size_t b = origins.size();
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(rho * static_cast<double>(b)));
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
    return weights[a] > weights[c];
  });
  order.resize(std::min(keep, b));
  std::vector<std::size_t> out;
  for (std::size_t i : order)
    if (origins[i] == query_origin && labels[i] == query_class) out.push_back(i);
  std::sort(out.begin(), out.end());
  return out;
}

Tensor contrastive_loss(const std::vector<Tensor>& query_reprs,
                        const std::vector<std::size_t>& query_classes,
                        const std::vector<std::vector<Tensor>>& positives,
                        const ContrastiveState& state) {
  if (query_reprs.size() != query_classes.size() ||
      query_reprs.size() != positives.size())
    throw std::invalid_argument("contrastive_loss: query fields not aligned");
  double t = state.config.temperature;
  bool norm = state.config.normalize;

  std::vector<Tensor> per_query;
  for (std::size_t i = 0; i < query_reprs.size(); ++i) {
    std::size_t k = query_classes[i];
    if (k >= state.queues.size())
      throw std::invalid_argument("contrastive_loss: class " +
                                  std::to_string(k) + " has no queue");
    const ClassQueue& queue = state.queues[k];
    if (positives[i].empty() || queue.entries.empty()) continue;

    Tensor q = maybe_normalize(query_reprs[i], norm);
    std::vector<Tensor> neg_dots;
    neg_dots.reserve(queue.entries.size());
    for (const QueueEntry& e : queue.entries) {
      Tensor n = maybe_normalize(
          Tensor::from_values({e.repr.size()}, e.repr), norm);
      neg_dots.push_back(ad::reshape(ad::scale(ad::dot(q, n), 1.0 / t), {1}));
    }

    std::vector<Tensor> pos_losses;
    for (const Tensor& p_raw : positives[i]) {
      Tensor p = maybe_normalize(p_raw.detach(), norm);
      Tensor pos_dot = ad::reshape(ad::scale(ad::dot(q, p), 1.0 / t), {1});
      std::vector<Tensor> logits{pos_dot};
      logits.insert(logits.end(), neg_dots.begin(), neg_dots.end());
      // -log of the positive's share of the candidate softmax
      pos_losses.push_back(ad::cross_entropy_vec(ad::concat_vec(logits), 0));
    }
    Tensor sum = pos_losses[0];
    for (std::size_t j = 1; j < pos_losses.size(); ++j)
      sum = ad::add(sum, pos_losses[j]);
    per_query.push_back(
        ad::scale(sum, 1.0 / static_cast<double>(pos_losses.size())));
  }

  if (per_query.empty()) return Tensor::scalar(0.0);
  Tensor total = per_query[0];
  for (std::size_t i = 1; i < per_query.size(); ++i)
    total = ad::add(total, per_query[i]);
  return ad::scale(total, 1.0 / static_cast<double>(per_query.size()));
}

void dump_queues(const std::vector<ClassQueue>& queues, std::ostream& out) {
  out << "class_id,P_W,P_T\n";
  char buf[64];
  for (const ClassQueue& q : queues)
    for (const QueueEntry& e : q.entries) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%d\n", q.class_id,
                    e.weight_priority, e.lifetime);
      out << buf;
    }
}

}  // namespace mrco
