#pragma once

// Reference queue semantics, transcribed phase by phase and kept deliberately
// independent of the library implementation. Used by unit tests and the
// acceptance checks to cross-validate lasw_update / fifo_update.

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <vector>

namespace lasw_oracle {

struct Entry {
  double repr_tag;  // stands in for the stored representation
  double weight;
  int lifetime;
};

struct Queue {
  std::size_t capacity = 0;
  std::vector<Entry> entries;  // front = oldest
};

struct Candidate {
  double repr_tag;
  double weight;
};

// Phase (a): every stored lifetime drops by one.
// Phase (b): expired entries leave; their count is N.
// Phase (c): the N smallest-weight candidates enqueue.
// Phase (d): each remaining candidate, still in ascending weight order, fills
//            free space directly, otherwise replaces the largest-weight
//            stored entry when that entry's weight is strictly larger
//            (oldest entry wins ties).
// Phase (e): each new entry carries lifetime tau and its batch weight.
inline void lasw_step(Queue& q, std::vector<Candidate> candidates, int tau) {
  for (Entry& e : q.entries) e.lifetime -= 1;
  std::size_t before = q.entries.size();
  std::erase_if(q.entries, [](const Entry& e) { return e.lifetime <= 0; });
  std::size_t expired = before - q.entries.size();

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.weight < b.weight;
                   });

  std::size_t i = 0;
  for (; i < candidates.size() && i < expired; ++i)
    q.entries.push_back({candidates[i].repr_tag, candidates[i].weight, tau});

  for (; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    if (q.entries.size() < q.capacity) {  // cold start: room left, take it
      q.entries.push_back({c.repr_tag, c.weight, tau});
      continue;
    }
    std::size_t worst = 0;
    for (std::size_t e = 1; e < q.entries.size(); ++e)
      if (q.entries[e].weight > q.entries[worst].weight) worst = e;
    if (q.entries[worst].weight > c.weight) {
      q.entries.erase(q.entries.begin() + worst);
      q.entries.push_back({c.repr_tag, c.weight, tau});
    }
  }
}

// FIFO reference: same aging, then candidates in batch order displace the
// oldest entry whenever the queue is full.
inline void fifo_step(Queue& q, const std::vector<Candidate>& candidates,
                      int tau) {
  for (Entry& e : q.entries) e.lifetime -= 1;
  std::erase_if(q.entries, [](const Entry& e) { return e.lifetime <= 0; });
  for (const Candidate& c : candidates) {
    if (q.entries.size() >= q.capacity) q.entries.erase(q.entries.begin());
    q.entries.push_back({c.repr_tag, c.weight, tau});
  }
}

// Multiset fingerprint for exact comparison.
inline std::vector<std::array<double, 3>> fingerprint(const Queue& q) {
  std::vector<std::array<double, 3>> out;
  for (const Entry& e : q.entries)
    out.push_back({e.repr_tag, e.weight, static_cast<double>(e.lifetime)});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lasw_oracle
