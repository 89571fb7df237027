#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mrco/dataset.hpp"
#include "mrco/tensor.hpp"

namespace mrco {

using ad::Rng;

struct AugmentedExample {
  std::size_t id = 0;
  std::size_t origin_id = 0;
  std::size_t label = 0;  // always the origin's label
  std::string text;
  std::string augmenter_name;
  std::uint64_t seed = 0;
};

// plain-text synonym map: "word<TAB>syn1,syn2,..." per line, lookups
// case-insensitive, no word maps to an empty list
class SynonymLexicon {
 public:
  static SynonymLexicon load(const std::string& path);
  static SynonymLexicon from_entries(
      const std::map<std::string, std::vector<std::string>>& entries);

  // nullptr when the word has no entry
  const std::vector<std::string>* find(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// whitespace tokenization preserving case; join restores single spaces
std::vector<std::string> split_ws(const std::string& text);
std::string join_ws(const std::vector<std::string>& tokens);

std::string augment_synonym(const std::string& text, const SynonymLexicon& lexicon,
                            double replace_prob, Rng& rng);

struct EasyDataProbs {
  double replace = 0.1;
  double insert = 0.1;
  double swap = 0.1;
  double erase = 0.1;
};

// replace, insert, swap, delete in that fixed order; deletion never removes
// the last remaining token
std::string augment_easydata(const std::string& text, const SynonymLexicon& lexicon,
                             const EasyDataProbs& probs, Rng& rng);

enum class CharEdit { kInsert, kSwap, kDelete, kReplace };

// one edit at a random position; swap exchanges adjacent characters
std::string char_edit(const std::string& token, CharEdit op, Rng& rng);

// per token with probability ops_prob: one uniformly chosen character edit;
// length-1 tokens are exempt from delete and swap
std::string augment_charswap(const std::string& text, double ops_prob, Rng& rng);

// 206.835 - 1.015 * words/sentences - 84.6 * syllables/words, with a
// vowel-group syllable heuristic and ./?/! sentence splitting; sentence and
// word counts are floored at 1
double flesch_score(const std::string& text);
std::size_t syllable_count(const std::string& word);

std::vector<AugmentedExample> filter_augmented(
    const std::vector<AugmentedExample>& examples, double lower, double upper);

class Augmenter {
 public:
  virtual ~Augmenter() = default;
  virtual std::string name() const = 0;
  virtual std::string apply(const std::string& text, Rng& rng) const = 0;
};

class SynonymAugmenter : public Augmenter {
 public:
  SynonymAugmenter(const SynonymLexicon& lexicon, double replace_prob)
      : lexicon_(lexicon), replace_prob_(replace_prob) {}
  std::string name() const override { return "synonym"; }
  std::string apply(const std::string& text, Rng& rng) const override;

 private:
  const SynonymLexicon& lexicon_;
  double replace_prob_;
};

class EasyDataAugmenter : public Augmenter {
 public:
  EasyDataAugmenter(const SynonymLexicon& lexicon, const EasyDataProbs& probs)
      : lexicon_(lexicon), probs_(probs) {}
  std::string name() const override { return "easydata"; }
  std::string apply(const std::string& text, Rng& rng) const override;

 private:
  const SynonymLexicon& lexicon_;
  EasyDataProbs probs_;
};

class CharswapAugmenter : public Augmenter {
 public:
  explicit CharswapAugmenter(double ops_prob) : ops_prob_(ops_prob) {}
  std::string name() const override { return "charswap"; }
  std::string apply(const std::string& text, Rng& rng) const override;

 private:
  double ops_prob_;
};

// per-(dataset seed, origin id, ordinal) stream seed; augmentation of one
// example never depends on processing order
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t origin_id,
                          std::uint64_t ordinal);

// up to per_example_count augmentations per raw example, cycling through the
// augmenters; exact copies of the raw text are dropped. Output is canonical:
// sorted by origin id then ordinal, ids assigned 0..n-1 in that order.
std::vector<AugmentedExample> build_augmented_dataset(
    const Dataset& raw, const std::vector<std::unique_ptr<Augmenter>>& augmenters,
    std::size_t per_example_count, std::uint64_t seed);

// TSV with header "id\torigin_id\tlabel\taugmenter\ttext"
std::vector<AugmentedExample> load_augmented(const std::string& path);
void save_augmented(const std::vector<AugmentedExample>& examples,
                    const std::string& path);

}  // namespace mrco
