#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "mrco/augment.hpp"

using namespace mrco;

namespace {

SynonymLexicon tiny_lexicon() {
  return SynonymLexicon::from_entries({
      {"good", {"fine", "great"}},
      {"fast", {"quick", "rapid", "swift"}},
      {"car", {"auto"}},
      {"happy", {"glad"}},
  });
}

// plain Levenshtein, small strings only
std::size_t lev(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string temp_path(const std::string& name) {
  return "/tmp/mrco_test_" + name;
}

}  // namespace

TEST_CASE("lexicon lookups are case-insensitive and validated") {
  SynonymLexicon lex = tiny_lexicon();
  CHECK(lex.size() == 4);
  REQUIRE(lex.find("good") != nullptr);
  CHECK(lex.find("GOOD") == lex.find("good"));
  CHECK(lex.find("Good") != nullptr);
  CHECK(lex.find("ungood") == nullptr);
  CHECK((*lex.find("car"))[0] == "auto");
  CHECK_THROWS_AS(SynonymLexicon::from_entries({{"bare", {}}}),
                  std::invalid_argument);
}

TEST_CASE("lexicon file round trip and malformed lines") {
  std::string path = temp_path("lexicon.tsv");
  write_file_atomic(path, "good\tfine,great\nFAST\tquick\n");
  SynonymLexicon lex = SynonymLexicon::load(path);
  CHECK(lex.size() == 2);
  CHECK((*lex.find("fast"))[0] == "quick");

  write_file_atomic(path, "word-without-tab\n");
  CHECK_THROWS(SynonymLexicon::load(path));
  write_file_atomic(path, "word\t\n");
  CHECK_THROWS(SynonymLexicon::load(path));
  std::remove(path.c_str());
}

TEST_CASE("whitespace split and join normalize spacing") {
  auto t = split_ws("  a  b\tc \n d ");
  CHECK(t == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(join_ws(t) == "a b c d");
  CHECK(split_ws("").empty());
  CHECK(split_ws("   ").empty());
}

TEST_CASE("synonym replacement") {
  SynonymLexicon lex = tiny_lexicon();
  Rng rng(1);

  CHECK(augment_synonym("a good fast car", lex, 0.0, rng) == "a good fast car");

  SynonymLexicon one = SynonymLexicon::from_entries({{"good", {"fine"}}});
  CHECK(augment_synonym("good", one, 1.0, rng) == "fine");

  // prob 1: every covered token replaced by some synonym, others untouched
  std::string all = augment_synonym("a good fast car", lex, 1.0, rng);
  auto tokens = split_ws(all);
  REQUIRE(tokens.size() == 4);
  CHECK(tokens[0] == "a");
  CHECK((tokens[1] == "fine" || tokens[1] == "great"));
  CHECK((tokens[2] == "quick" || tokens[2] == "rapid" || tokens[2] == "swift"));
  CHECK(tokens[3] == "auto");

  for (int trial = 0; trial < 1000; ++trial) {
    std::string out = augment_synonym("the good car drives fast today", lex,
                                      0.5, rng);
    CHECK(split_ws(out).size() == 6);  // token count preserved
  }

  CHECK_THROWS_AS(augment_synonym("x", lex, 1.5, rng), std::invalid_argument);
}

TEST_CASE("easydata operations") {
  SynonymLexicon lex = tiny_lexicon();
  Rng rng(2);

  EasyDataProbs zero{0, 0, 0, 0};
  CHECK(augment_easydata("a good day", lex, zero, rng) == "a good day");

  EasyDataProbs swap_only{0, 0, 1, 0};
  CHECK(augment_easydata("left right", lex, swap_only, rng) == "right left");

  EasyDataProbs del_heavy{0, 0, 0, 1};
  for (int trial = 0; trial < 50; ++trial) {
    std::string out = augment_easydata("a b c d e", lex, del_heavy, rng);
    CHECK(split_ws(out).size() == 1);  // everything but one survivor removed
  }

  EasyDataProbs mixed{0.3, 0.3, 0.5, 0.3};
  for (int trial = 0; trial < 1000; ++trial) {
    std::string out = augment_easydata("the good fast car is happy", lex, mixed,
                                       rng);
    std::size_t n = split_ws(out).size();
    CHECK(n >= 1);
    CHECK(n <= 12);  // one insert pass at most doubles the count
  }

  CHECK_THROWS_AS(augment_easydata("", lex, zero, rng), std::invalid_argument);
  CHECK_THROWS_AS(augment_easydata("  ", lex, zero, rng), std::invalid_argument);
}

TEST_CASE("character edits") {
  Rng rng(3);
  CHECK(char_edit("ab", CharEdit::kSwap, rng) == "ba");
  CHECK(char_edit("x", CharEdit::kSwap, rng) == "x");    // too short, no-op
  CHECK(char_edit("x", CharEdit::kDelete, rng) == "x");  // guarded
  for (int trial = 0; trial < 200; ++trial) {
    CHECK(char_edit("word", CharEdit::kInsert, rng).size() == 5);
    CHECK(char_edit("word", CharEdit::kDelete, rng).size() == 3);
    CHECK(char_edit("word", CharEdit::kReplace, rng).size() == 4);
    std::string swapped = char_edit("word", CharEdit::kSwap, rng);
    CHECK(swapped.size() == 4);
    CHECK(lev("word", swapped) <= 2);
  }
}

TEST_CASE("charswap noise stays within one edit per token") {
  Rng rng(4);
  CHECK(augment_charswap("hello there", 0.0, rng) == "hello there");

  std::vector<std::string> original = split_ws("alpha beta gamma d");
  for (int trial = 0; trial < 1000; ++trial) {
    std::string out = augment_charswap("alpha beta gamma d", 0.7, rng);
    auto tokens = split_ws(out);
    REQUIRE(tokens.size() == original.size());  // token count preserved
    for (std::size_t i = 0; i < tokens.size(); ++i)
      CHECK(lev(original[i], tokens[i]) <= 2);
  }

  // single-letter tokens never vanish
  for (int trial = 0; trial < 200; ++trial) {
    auto tokens = split_ws(augment_charswap("a b c", 1.0, rng));
    REQUIRE(tokens.size() == 3);
    for (const auto& t : tokens) CHECK(!t.empty());
  }
}

TEST_CASE("syllable heuristic fixed points") {
  CHECK(syllable_count("the") == 1);
  CHECK(syllable_count("quick") == 1);
  CHECK(syllable_count("over") == 2);
  CHECK(syllable_count("lazy") == 2);
  CHECK(syllable_count("simple") == 2);    // -le stays syllabic
  CHECK(syllable_count("sentence") == 2);  // silent final e
  CHECK(syllable_count("make") == 1);
  CHECK(syllable_count("makes") == 2);  // heuristic, not dictionary truth
  CHECK(syllable_count("people") == 2);
  CHECK(syllable_count("like") == 1);
  CHECK(syllable_count("rhythm") == 1);  // y as the only vowel
  CHECK(syllable_count("dog.") == 1);    // punctuation stripped
  CHECK(syllable_count("tsk") == 1);     // floor at one syllable
  CHECK(syllable_count("...") == 0);     // no letters: not a word
}

TEST_CASE("flesch reading ease") {
  // one 1-syllable word, one sentence
  CHECK(flesch_score("go.") ==
        doctest::Approx(206.835 - 1.015 - 84.6).epsilon(1e-12));

  // no terminator still counts one sentence
  CHECK(flesch_score("go") == flesch_score("go."));

  // exact repetition leaves both ratios unchanged
  std::string para = "the cat sat on the mat.";
  CHECK(flesch_score(para + " " + para) ==
        doctest::Approx(flesch_score(para)).epsilon(1e-12));

  // 20 words, 2 sentences; syllables by the pinned heuristic:
  // s1: the quick brown fox jumps over the lazy dog = 1+1+1+1+1+2+1+2+1 = 11
  // s2: a simple sentence makes reading easy for people who like words
  //     = 1+2+2+2+2+2+1+2+1+1+1 = 17
  std::string twenty =
      "the quick brown fox jumps over the lazy dog. "
      "a simple sentence makes reading easy for people who like words.";
  double expect = 206.835 - 1.015 * (20.0 / 2.0) - 84.6 * (28.0 / 20.0);
  CHECK(flesch_score(twenty) == doctest::Approx(expect).epsilon(1e-4));
  CHECK(std::abs(flesch_score(twenty) - expect) < 0.01);
}

TEST_CASE("readability filter") {
  auto make = [](std::size_t id, const std::string& text) {
    AugmentedExample e;
    e.id = id;
    e.origin_id = id;
    e.text = text;
    return e;
  };
  std::vector<AugmentedExample> pool{
      make(0, "go."),                          // 121.22
      make(1, "the cat sat on the mat."),      // simple, high score
      make(2,
           "incomprehensible considerations necessitate "
           "multidimensional interpretations."),  // polysyllabic, low
  };
  double inf = std::numeric_limits<double>::infinity();

  auto all = filter_augmented(pool, -inf, inf);
  CHECK(all.size() == 3);

  CHECK(filter_augmented(pool, 1000.0, 1001.0).empty());

  // band centered between the easy and hard texts
  double easy = flesch_score(pool[1].text);
  double hard = flesch_score(pool[2].text);
  REQUIRE(hard < easy);
  auto band = filter_augmented(pool, (hard + easy) / 2, inf);
  std::set<std::size_t> kept;
  for (const auto& e : band) kept.insert(e.id);
  CHECK(kept == std::set<std::size_t>{0, 1});

  CHECK_THROWS_AS(filter_augmented(pool, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("augmented dataset construction") {
  SynonymLexicon lex = tiny_lexicon();
  Dataset raw;
  raw.n_classes = 2;
  for (std::size_t i = 0; i < 100; ++i) {
    Example e;
    e.id = 1000 - i * 7;  // deliberately unsorted ids
    e.label = i % 2;
    e.text_a = "the good fast car is happy on day " + std::to_string(i);
    raw.examples.push_back(e);
  }

  std::vector<std::unique_ptr<Augmenter>> augs;
  augs.push_back(std::make_unique<SynonymAugmenter>(lex, 0.8));
  augs.push_back(std::make_unique<EasyDataAugmenter>(
      lex, EasyDataProbs{0.2, 0.2, 0.5, 0.2}));
  augs.push_back(std::make_unique<CharswapAugmenter>(0.4));

  auto once = build_augmented_dataset(raw, augs, 6, 42);
  auto twice = build_augmented_dataset(raw, augs, 6, 42);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once[i].id == twice[i].id);
    CHECK(once[i].text == twice[i].text);
    CHECK(once[i].seed == twice[i].seed);
  }

  CHECK(once.size() <= 600);  // ratio never exceeds per_example_count
  CHECK(once.size() > 400);   // and these settings rarely produce no-ops

  std::set<std::size_t> raw_ids;
  for (const Example& e : raw.examples) raw_ids.insert(e.id);
  std::set<std::string> names;
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once[i].id == i);  // canonical numbering
    CHECK(raw_ids.count(once[i].origin_id) == 1);
    names.insert(once[i].augmenter_name);
    auto origin = std::find_if(raw.examples.begin(), raw.examples.end(),
                               [&](const Example& e) {
                                 return e.id == once[i].origin_id;
                               });
    CHECK(once[i].label == origin->label);  // label-preserving
  }
  CHECK(names == std::set<std::string>{"synonym", "easydata", "charswap"});

  // identity augmenter: every output duplicates its origin and is dropped
  std::vector<std::unique_ptr<Augmenter>> noop;
  noop.push_back(std::make_unique<SynonymAugmenter>(lex, 0.0));
  CHECK(build_augmented_dataset(raw, noop, 4, 42).empty());

  // input order never matters: reverse the raw list, rebuild, compare
  Dataset reversed = raw;
  std::reverse(reversed.examples.begin(), reversed.examples.end());
  auto again = build_augmented_dataset(reversed, augs, 6, 42);
  REQUIRE(again.size() == once.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(again[i].origin_id == once[i].origin_id);
    CHECK(again[i].text == once[i].text);
  }

  CHECK_THROWS_AS(build_augmented_dataset(raw, augs, 0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      build_augmented_dataset(raw, std::vector<std::unique_ptr<Augmenter>>{}, 1,
                              1),
      std::invalid_argument);
}

TEST_CASE("derived seeds separate neighboring streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t id = 0; id < 50; ++id)
    for (std::uint64_t j = 0; j < 8; ++j)
      seen.insert(derive_seed(7, id, j));
  CHECK(seen.size() == 400);  // no collisions among neighbors
  CHECK(derive_seed(7, 3, 1) == derive_seed(7, 3, 1));
  CHECK(derive_seed(7, 3, 1) != derive_seed(8, 3, 1));
}

TEST_CASE("augmented TSV round trip") {
  std::vector<AugmentedExample> rows;
  for (std::size_t i = 0; i < 5; ++i) {
    AugmentedExample e;
    e.id = i;
    e.origin_id = 100 + i;
    e.label = i % 2;
    e.text = "sample text number " + std::to_string(i);
    e.augmenter_name = i % 2 ? "charswap" : "synonym";
    rows.push_back(e);
  }
  std::string path = temp_path("aug.tsv");
  save_augmented(rows, path);
  auto back = load_augmented(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].origin_id == rows[i].origin_id);
    CHECK(back[i].label == rows[i].label);
    CHECK(back[i].augmenter_name == rows[i].augmenter_name);
    CHECK(back[i].text == rows[i].text);
  }
  std::remove(path.c_str());

  write_file_atomic(path, "wrong\theader\n");
  CHECK_THROWS(load_augmented(path));
  std::remove(path.c_str());
}

TEST_CASE("dataset TSV loading and validation") {
  std::string path = temp_path("data.tsv");

  write_file_atomic(path, "id\tlabel\ttext_a\n0\t0\thello world\n1\t1\tbye\n");
  Dataset ds = load_dataset(path);
  CHECK(ds.size() == 2);
  CHECK(ds.n_classes == 2);
  CHECK(!ds.has_pairs);
  CHECK(ds.examples[0].text_a == "hello world");
  CHECK(full_text(ds.examples[0]) == "hello world");

  // pair variant with CRLF endings
  write_file_atomic(path,
                    "id\tlabel\ttext_a\ttext_b\r\n0\t0\tleft\tright\r\n"
                    "1\t1\ta\tb\r\n");
  Dataset pairs = load_dataset(path);
  CHECK(pairs.has_pairs);
  CHECK(pairs.examples[0].text_b == "right");
  CHECK(full_text(pairs.examples[0]) == "left <sep> right");

  // missing label column on line 2
  write_file_atomic(path, "id\tlabel\ttext_a\n7\n");
  try {
    load_dataset(path);
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write_file_atomic(path, "id\tlabel\ttext_a\n0\t0\ta\n0\t1\tb\n");
  CHECK_THROWS(load_dataset(path));  // duplicate id

  write_file_atomic(path, "id\tlabel\ttext_a\n0\t0\ta\n1\t0\tb\n");
  CHECK_THROWS(load_dataset(path));  // single class

  write_file_atomic(path, "not\ta\theader\n");
  CHECK_THROWS(load_dataset(path));

  std::remove(path.c_str());
}

TEST_CASE("dataset save and reload round trip") {
  Dataset ds;
  ds.has_pairs = true;
  ds.n_classes = 3;
  for (std::size_t i = 0; i < 10; ++i) {
    Example e;
    e.id = i * 3;
    e.label = i % 3;
    e.text_a = "first part " + std::to_string(i);
    e.text_b = "second part " + std::to_string(i);
    ds.examples.push_back(e);
  }
  std::string path = temp_path("roundtrip.tsv");
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.n_classes == ds.n_classes);
  CHECK(back.has_pairs);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.examples[i].id == ds.examples[i].id);
    CHECK(back.examples[i].label == ds.examples[i].label);
    CHECK(back.examples[i].text_a == ds.examples[i].text_a);
    CHECK(back.examples[i].text_b == ds.examples[i].text_b);
  }
  std::remove(path.c_str());
}
