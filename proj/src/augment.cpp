#include "mrco/augment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mrco {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void require_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument(std::string(what) + " must be in [0,1], got " +
                                std::to_string(p));
}

bool coin(double p, Rng& rng) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

std::size_t pick(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

const std::string& pick_synonym(const std::vector<std::string>& list, Rng& rng) {
  return list[pick(list.size(), rng)];
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

SynonymLexicon SynonymLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw std::runtime_error("lexicon line " + std::to_string(line_no) +
                               ": expected 'word<TAB>syn1,syn2,...'");
    std::string word = lower(line.substr(0, tab));
    std::vector<std::string> syns;
    std::stringstream rest(line.substr(tab + 1));
    std::string syn;
    while (std::getline(rest, syn, ','))
      if (!syn.empty()) syns.push_back(syn);
    if (syns.empty())
      throw std::runtime_error("lexicon line " + std::to_string(line_no) +
                               ": word '" + word + "' has no synonyms");
    entries[word] = std::move(syns);
  }
  return from_entries(entries);
}

SynonymLexicon SynonymLexicon::from_entries(
    const std::map<std::string, std::vector<std::string>>& entries) {
  SynonymLexicon lex;
  for (const auto& [word, syns] : entries) {
    if (syns.empty())
      throw std::invalid_argument("lexicon word '" + word + "' has no synonyms");
    lex.entries_[lower(word)] = syns;
  }
  return lex;
}

const std::vector<std::string>* SynonymLexicon::find(
    const std::string& word) const {
  auto it = entries_.find(lower(word));
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> tokens;
  std::stringstream ss(text);
  std::string t;
  while (ss >> t) tokens.push_back(t);
  return tokens;
}

std::string join_ws(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string augment_synonym(const std::string& text, const SynonymLexicon& lexicon,
                            double replace_prob, Rng& rng) {
  require_prob(replace_prob, "replace_prob");
  std::vector<std::string> tokens = split_ws(text);
  for (std::string& t : tokens) {
    const std::vector<std::string>* syns = lexicon.find(t);
    if (syns && coin(replace_prob, rng)) t = pick_synonym(*syns, rng);
  }
  return join_ws(tokens);
}

std::string augment_easydata(const std::string& text, const SynonymLexicon& lexicon,
                             const EasyDataProbs& probs, Rng& rng) {
  require_prob(probs.replace, "replace");
  require_prob(probs.insert, "insert");
  require_prob(probs.swap, "swap");
  require_prob(probs.erase, "erase");
  std::vector<std::string> tokens = split_ws(text);
  if (tokens.empty())
    throw std::invalid_argument("augment_easydata: empty text");

  // replace
  for (std::string& t : tokens) {
    const std::vector<std::string>* syns = lexicon.find(t);
    if (syns && coin(probs.replace, rng)) t = pick_synonym(*syns, rng);
  }

  // insert: before each position, a synonym of a random lexicon-covered token
  std::vector<std::size_t> covered;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (lexicon.find(tokens[i])) covered.push_back(i);
  if (!covered.empty()) {
    std::vector<std::string> grown;
    grown.reserve(tokens.size() * 2);
    for (const std::string& t : tokens) {
      if (coin(probs.insert, rng)) {
        const auto* syns = lexicon.find(tokens[covered[pick(covered.size(), rng)]]);
        grown.push_back(pick_synonym(*syns, rng));
      }
      grown.push_back(t);
    }
    tokens = std::move(grown);
  }

  // swap: one exchange of two distinct positions
  if (tokens.size() >= 2 && coin(probs.swap, rng)) {
    std::size_t i = pick(tokens.size(), rng);
    std::size_t j = pick(tokens.size() - 1, rng);
    if (j >= i) ++j;
    std::swap(tokens[i], tokens[j]);
  }

  // delete, keeping at least one token
  std::vector<bool> drop(tokens.size(), false);
  for (std::size_t i = 0; i < tokens.size(); ++i) drop[i] = coin(probs.erase, rng);
  if (std::all_of(drop.begin(), drop.end(), [](bool b) { return b; }))
    drop[pick(tokens.size(), rng)] = false;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!drop[i]) kept.push_back(std::move(tokens[i]));
  return join_ws(kept);
}

std::string char_edit(const std::string& token, CharEdit op, Rng& rng) {
  auto random_letter = [&rng]() {
    return static_cast<char>('a' + pick(26, rng));
  };
  std::string out = token;
  switch (op) {
    case CharEdit::kInsert:
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(pick(out.size() + 1, rng)),
                 random_letter());
      break;
    case CharEdit::kSwap: {
      if (out.size() < 2) break;
      std::size_t i = pick(out.size() - 1, rng);
      std::swap(out[i], out[i + 1]);
      break;
    }
    case CharEdit::kDelete:
      if (out.size() < 2) break;
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(pick(out.size(), rng)));
      break;
    case CharEdit::kReplace:
      out[pick(out.size(), rng)] = random_letter();
      break;
  }
  return out;
}

std::string augment_charswap(const std::string& text, double ops_prob, Rng& rng) {
  require_prob(ops_prob, "ops_prob");
  std::vector<std::string> tokens = split_ws(text);
  for (std::string& t : tokens) {
    if (t.empty() || !coin(ops_prob, rng)) continue;
    // length-1 tokens cannot lose or reorder their only character
    static const CharEdit all[] = {CharEdit::kInsert, CharEdit::kSwap,
                                   CharEdit::kDelete, CharEdit::kReplace};
    static const CharEdit short_ops[] = {CharEdit::kInsert, CharEdit::kReplace};
    CharEdit op = t.size() == 1 ? short_ops[pick(2, rng)] : all[pick(4, rng)];
    t = char_edit(t, op, rng);
  }
  return join_ws(tokens);
}

std::size_t syllable_count(const std::string& word) {
  std::string w;
  for (char c : word)
    if (std::isalpha(static_cast<unsigned char>(c)))
      w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (w.empty()) return 0;
  auto vowel = [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
  };
  std::size_t groups = 0;
  bool in_group = false;
  for (char c : w) {
    if (vowel(c)) {
      if (!in_group) ++groups;
      in_group = true;
    } else {
      in_group = false;
    }
  }
  // silent terminal e ("make"), but not the syllabic -le ("simple")
  if (groups > 1 && w.size() >= 2 && w.back() == 'e' && w[w.size() - 2] != 'l')
    --groups;
  return groups == 0 ? 1 : groups;
}

double flesch_score(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("flesch_score: empty text");
  double sentences = 0;
  bool in_terminator = false;
  for (char c : text) {
    bool term = c == '.' || c == '?' || c == '!';
    if (term && !in_terminator) ++sentences;
    in_terminator = term;
  }
  if (sentences < 1) sentences = 1;

  double words = 0, syllables = 0;
  for (const std::string& t : split_ws(text)) {
    std::size_t s = syllable_count(t);
    if (s == 0) continue;  // punctuation-only token, not a word
    words += 1;
    syllables += static_cast<double>(s);
  }
  if (words < 1) words = 1;
  return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words);
}

std::vector<AugmentedExample> filter_augmented(
    const std::vector<AugmentedExample>& examples, double lower, double upper) {
  if (lower > upper)
    throw std::invalid_argument("filter_augmented: lower > upper");
  std::vector<AugmentedExample> kept;
  for (const AugmentedExample& e : examples) {
    double score = flesch_score(e.text);
    if (score >= lower && score <= upper) kept.push_back(e);
  }
  return kept;
}

std::string SynonymAugmenter::apply(const std::string& text, Rng& rng) const {
  return augment_synonym(text, lexicon_, replace_prob_, rng);
}

std::string EasyDataAugmenter::apply(const std::string& text, Rng& rng) const {
  return augment_easydata(text, lexicon_, probs_, rng);
}

std::string CharswapAugmenter::apply(const std::string& text, Rng& rng) const {
  return augment_charswap(text, ops_prob_, rng);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t origin_id,
                          std::uint64_t ordinal) {
  return splitmix64(splitmix64(splitmix64(global_seed) ^ origin_id) ^ ordinal);
}

std::vector<AugmentedExample> build_augmented_dataset(
    const Dataset& raw, const std::vector<std::unique_ptr<Augmenter>>& augmenters,
    std::size_t per_example_count, std::uint64_t seed) {
  if (per_example_count < 1)
    throw std::invalid_argument("build_augmented_dataset: per_example_count < 1");
  if (augmenters.empty())
    throw std::invalid_argument("build_augmented_dataset: no augmenters");

  std::vector<const Example*> order;
  order.reserve(raw.size());
  for (const Example& e : raw.examples) order.push_back(&e);
  std::sort(order.begin(), order.end(),
            [](const Example* a, const Example* b) { return a->id < b->id; });

  std::vector<AugmentedExample> out;
  out.reserve(raw.size() * per_example_count);
  for (const Example* e : order) {
    for (std::size_t j = 0; j < per_example_count; ++j) {
      const Augmenter& aug = *augmenters[j % augmenters.size()];
      std::uint64_t s = derive_seed(seed, e->id, j);
      Rng rng(s);
      std::string text = aug.apply(e->text_a, rng);
      if (!e->text_b.empty())
        text = join_pair(text, aug.apply(e->text_b, rng));
      if (text == full_text(*e)) continue;  // no-op augmentation
      AugmentedExample a;
      a.id = out.size();
      a.origin_id = e->id;
      a.label = e->label;
      a.text = std::move(text);
      a.augmenter_name = aug.name();
      a.seed = s;
      out.push_back(std::move(a));
    }
  }
  return out;
}

std::vector<AugmentedExample> load_augmented(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open augmented file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, expected a header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id\torigin_id\tlabel\taugmenter\ttext")
    throw std::runtime_error(path + ": unrecognized header '" + line + "'");

  std::vector<AugmentedExample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (int k = 0; k < 4; ++k) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos)
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": expected 5 columns");
      cols.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    cols.push_back(line.substr(start));
    AugmentedExample a;
    try {
      a.id = std::stoull(cols[0]);
      a.origin_id = std::stoull(cols[1]);
      a.label = std::stoull(cols[2]);
    } catch (const std::exception&) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": bad numeric field");
    }
    a.augmenter_name = cols[3];
    a.text = cols[4];
    out.push_back(std::move(a));
  }
  return out;
}

void save_augmented(const std::vector<AugmentedExample>& examples,
                    const std::string& path) {
  std::ostringstream out;
  out << "id\torigin_id\tlabel\taugmenter\ttext\n";
  for (const AugmentedExample& e : examples)
    out << e.id << '\t' << e.origin_id << '\t' << e.label << '\t'
        << e.augmenter_name << '\t' << e.text << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace mrco
