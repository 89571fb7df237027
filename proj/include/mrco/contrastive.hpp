#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "mrco/encoder.hpp"
#include "mrco/tensor.hpp"

namespace mrco {

/// Detached key-encoder output stored as a negative candidate.
struct QueueEntry {
  std::vector<double> repr;
  double weight_priority = 0.0;  // the sample's quality weight at enqueue time
  int lifetime = 0;              // remaining queue updates before expiry
};

/// Fixed-capacity negative pool for one class. Entry order is insertion
/// order; removals keep it, so "oldest" is always the first match.
struct ClassQueue {
  std::size_t class_id = 0;
  std::size_t capacity = 0;
  std::vector<QueueEntry> entries;
};

struct ContrastiveConfig {
  std::size_t n_neg = 64;     // per-class queue capacity
  int tau = 30;               // starting lifetime
  double rho = 0.9;           // fraction of the augmented batch usable as positives
  double gamma = 0.9;         // key-encoder momentum
  double temperature = 1.0;
  bool normalize = true;      // L2-normalize representations before dot products
};

struct ContrastiveState {
  ContrastiveConfig config;
  EncoderParams key_encoder;
  std::vector<ClassQueue> queues;  // indexed by class id

  static ContrastiveState init(const EncoderParams& main_encoder,
                               const ContrastiveConfig& config,
                               std::size_t n_classes);
};

/// key <- gamma * key + (1 - gamma) * query, elementwise over all parameters.
void momentum_update(EncoderParams& key, const EncoderParams& query,
                     double gamma);

/// Lifetime-then-weight replacement. Per class: age out expired entries,
/// then admit batch candidates in ascending weight order; a candidate fills
/// free space directly, otherwise it replaces the largest-weight stored entry
/// when that entry's weight exceeds the candidate's (oldest evicted on ties).
void lasw_update(std::vector<ClassQueue>& queues,
                 const std::vector<std::vector<double>>& reprs,
                 const std::vector<std::size_t>& labels,
                 const std::vector<double>& weights, int tau);

/// Ablation replacement policy: same aging, but candidates enqueue in batch
/// order and evict the oldest entry when full, ignoring weights.
void fifo_update(std::vector<ClassQueue>& queues,
                 const std::vector<std::vector<double>>& reprs,
                 const std::vector<std::size_t>& labels,
                 const std::vector<double>& weights, int tau);

/// Indices of augmented-batch members usable as positives for one query:
/// members of the top ceil(rho * B) by weight whose origin and class match.
std::vector<std::size_t> select_positives(
    const std::vector<std::size_t>& origins,
    const std::vector<std::size_t>& labels,
    const std::vector<double>& weights, std::size_t query_origin,
    std::size_t query_class, double rho);

/// InfoNCE-style loss over per-query positive sets against same-class queue
/// negatives. Queries with no positives or an empty class queue are skipped;
/// returns a constant 0 when none qualify. Gradient reaches only query_reprs.
Tensor contrastive_loss(const std::vector<Tensor>& query_reprs,
                        const std::vector<std::size_t>& query_classes,
                        const std::vector<std::vector<Tensor>>& positives,
                        const ContrastiveState& state);

/// Debug dump: header plus one "class_id,P_W,P_T" row per entry.
void dump_queues(const std::vector<ClassQueue>& queues, std::ostream& out);

}  // namespace mrco
