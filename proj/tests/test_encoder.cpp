#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "mrco/dataset.hpp"
#include "mrco/encoder.hpp"

using namespace mrco;

namespace {

Vocabulary toy_vocab() {
  return Vocabulary::build({"the cat sat", "the dog ran", "a cat ran"});
}

EncoderConfig small_config(EncoderVariant variant, std::size_t vocab_size) {
  EncoderConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = vocab_size;
  cfg.n_classes = 2;
  cfg.d_emb = 6;
  cfg.d_mlp = 5;
  cfg.n_filters = 4;
  return cfg;
}

}  // namespace

TEST_CASE("vocabulary build, specials, lookup") {
  Vocabulary v = toy_vocab();
  CHECK(v.id_to_token[0] == "<pad>");
  CHECK(v.id_to_token[1] == "<unk>");
  CHECK(v.id_to_token[2] == "<sep>");
  CHECK(v.id_of("the") >= 3);
  CHECK(v.id_of("never-seen") == Vocabulary::kUnk);
  // map and list are mutual inverses
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(v.token_to_id.at(v.id_to_token[i]) == i);
  // frequency ordering: "the" (2), "cat" (2), "ran" (2) before singletons
  CHECK(v.id_of("the") < v.id_of("sat"));

  Vocabulary freq = Vocabulary::build({"a a a b b c"}, 2);
  CHECK(freq.id_of("a") != Vocabulary::kUnk);
  CHECK(freq.id_of("b") != Vocabulary::kUnk);
  CHECK(freq.id_of("c") == Vocabulary::kUnk);  // below min_frequency
}

TEST_CASE("vocabulary build is deterministic") {
  Vocabulary a = toy_vocab();
  Vocabulary b = toy_vocab();
  CHECK(a.id_to_token == b.id_to_token);
}

TEST_CASE("vocabulary save/load round-trip") {
  Vocabulary v = toy_vocab();
  std::string path = "vocab_roundtrip.txt";
  v.save(path);
  Vocabulary r = Vocabulary::load(path);
  CHECK(r.id_to_token == v.id_to_token);
  for (const auto& [tok, id] : v.token_to_id) CHECK(r.token_to_id.at(tok) == id);
  std::remove(path.c_str());
}

TEST_CASE("tokenize maps, pads, truncates") {
  Vocabulary v = toy_vocab();
  auto ids = tokenize("The cat", v, 4);
  CHECK(ids == std::vector<std::size_t>{v.id_of("the"), v.id_of("cat"),
                                        Vocabulary::kPad, Vocabulary::kPad});

  auto oov = tokenize("zzz unseen", v, 3);
  CHECK(oov == std::vector<std::size_t>{Vocabulary::kUnk, Vocabulary::kUnk,
                                        Vocabulary::kPad});

  auto trunc = tokenize("the cat sat the dog", v, 2);
  CHECK(trunc.size() == 2);
  CHECK(trunc[0] == v.id_of("the"));

  auto empty = tokenize("   ", v, 3);
  CHECK(empty == std::vector<std::size_t>(3, Vocabulary::kPad));

  auto pair = tokenize(join_pair("the cat", "a dog"), v, 6);
  CHECK(pair[2] == Vocabulary::kSep);

  CHECK_THROWS_AS(tokenize("x", v, 0), std::invalid_argument);
}

TEST_CASE("tokenize round-trips known tokens through the id list") {
  Rng rng(7);
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) words.push_back("tok" + std::to_string(i));
  std::string joined;
  for (const auto& w : words) joined += w + " ";
  Vocabulary v = Vocabulary::build({joined});
  std::shuffle(words.begin(), words.end(), rng);
  std::string text;
  for (int i = 0; i < 10; ++i) text += words[i] + " ";
  auto ids = tokenize(text, v, 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(v.id_to_token[ids[i]] == words[i]);
}

TEST_CASE("zero parameters give zero hidden vector") {
  Vocabulary v = toy_vocab();
  EncoderConfig cfg = small_config(EncoderVariant::kEmbedMeanMlp, v.size());
  Rng rng(1);
  EncoderParams p = EncoderParams::init(cfg, rng);
  for (Tensor t : p.parameters())
    std::fill(t.leaf_values().begin(), t.leaf_values().end(), 0.0);
  Tensor h = encode(tokenize("the cat", v, 8), p, false);
  REQUIRE(h.shape() == ad::Shape{cfg.d_mlp});
  for (double x : h.values()) CHECK(x == 0.0);
}

TEST_CASE("mean encoder ignores token order and PAD position count") {
  Vocabulary v = toy_vocab();
  EncoderConfig cfg = small_config(EncoderVariant::kEmbedMeanMlp, v.size());
  Rng rng(2);
  EncoderParams p = EncoderParams::init(cfg, rng);
  Tensor h1 = encode(tokenize("the cat sat", v, 8), p, false);
  Tensor h2 = encode(tokenize("sat the cat", v, 8), p, false);
  for (std::size_t i = 0; i < h1.size(); ++i)
    CHECK(h1.values()[i] == doctest::Approx(h2.values()[i]).epsilon(1e-12));

  // all-PAD input encodes the zero mean, not an error
  Tensor hp = encode(std::vector<std::size_t>(8, Vocabulary::kPad), p, false);
  CHECK(hp.size() == cfg.d_mlp);
}

TEST_CASE("convolution encoder matches a hand-built one-filter toy") {
  // d_emb=1, one width-2 filter with kernel [1, -1]: conv output at position r
  // is emb[r] - emb[r+1]; relu then max over positions.
  EncoderConfig cfg;
  cfg.variant = EncoderVariant::kTextCnn;
  cfg.vocab_size = 5;
  cfg.n_classes = 2;
  cfg.d_emb = 1;
  cfg.n_filters = 1;
  cfg.widths = {2};
  Rng rng(3);
  EncoderParams p = EncoderParams::init(cfg, rng);
  p.embedding.leaf_values() = {0.0, 1.0, 4.0, 2.0, -1.0};
  p.conv_w[0].leaf_values() = {1.0, -1.0};
  p.conv_b[0].leaf_values() = {0.0};
  // tokens 1,2,3,4 -> diffs: 1-4=-3, 4-2=2, 2-(-1)=3 -> relu max = 3
  Tensor h = encode({1, 2, 3, 4}, p, false);
  REQUIRE(h.shape() == ad::Shape{1});
  CHECK(h.values()[0] == doctest::Approx(3.0));

  CHECK_THROWS_AS(encode({1}, p, false), std::invalid_argument);  // shorter than width
}

TEST_CASE("textcnn hidden width is filters times widths") {
  Vocabulary v = toy_vocab();
  EncoderConfig cfg = small_config(EncoderVariant::kTextCnn, v.size());
  Rng rng(4);
  EncoderParams p = EncoderParams::init(cfg, rng);
  Tensor h = encode(tokenize("the cat sat the dog ran", v, 12), p, false);
  CHECK(h.shape() == ad::Shape{cfg.n_filters * cfg.widths.size()});
  CHECK(cfg.d_h() == cfg.n_filters * cfg.widths.size());
}

TEST_CASE("classify is a proper distribution") {
  Vocabulary v = toy_vocab();
  EncoderConfig cfg = small_config(EncoderVariant::kEmbedMeanMlp, v.size());
  cfg.n_classes = 3;
  Rng rng(5);
  EncoderParams p = EncoderParams::init(cfg, rng);
  Tensor h = encode(tokenize("the cat", v, 8), p, false);
  Tensor prob = classify(h, p);
  double sum = 0;
  for (double q : prob.values()) {
    CHECK(q > 0.0);
    sum += q;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // zero classifier -> uniform
  std::fill(p.cls_w.leaf_values().begin(), p.cls_w.leaf_values().end(), 0.0);
  std::fill(p.cls_b.leaf_values().begin(), p.cls_b.leaf_values().end(), 0.0);
  Tensor uni = classify(h, p);
  for (double q : uni.values()) CHECK(q == doctest::Approx(1.0 / 3));
}

TEST_CASE("softmax shift invariance and 3-class hand computation") {
  Tensor logits = Tensor::from_values({3}, {1.0, 2.0, 3.0});
  Tensor p = ad::softmax_vec(logits);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i)
    CHECK(p.values()[i] == doctest::Approx(std::exp(1.0 + i) / z).epsilon(1e-12));

  Tensor shifted = ad::softmax_vec(ad::add_scalar(logits, 100.0));
  for (int i = 0; i < 3; ++i)
    CHECK(shifted.values()[i] == doctest::Approx(p.values()[i]).epsilon(1e-12));
}

TEST_CASE("encode gradients pass finite differences") {
  Vocabulary v = toy_vocab();
  auto ids = tokenize("the cat sat dog", v, 6);

  for (auto variant : {EncoderVariant::kEmbedMeanMlp, EncoderVariant::kTextCnn}) {
    EncoderConfig cfg = small_config(variant, v.size());
    cfg.widths = {2, 3};
    Rng rng(6);
    EncoderParams p = EncoderParams::init(cfg, rng);
    auto params = p.parameters();
    auto rebuild = [&](const std::vector<Tensor>& xs) {
      EncoderParams q = p;
      q.embedding = xs[0];
      std::size_t i = 1;
      if (cfg.variant == EncoderVariant::kEmbedMeanMlp) {
        q.mlp_w = xs[i++];
        q.mlp_b = xs[i++];
      } else {
        for (std::size_t k = 0; k < q.conv_w.size(); ++k) {
          q.conv_w[k] = xs[i++];
          q.conv_b[k] = xs[i++];
        }
      }
      q.cls_w = xs[i++];
      q.cls_b = xs[i++];
      return ad::cross_entropy_vec(class_logits(encode(ids, q, true), q), 1);
    };
    auto r = ad::grad_check(rebuild, params, 1e-5, 1e-4);
    CHECK_MESSAGE(r.passed, "variant=" << static_cast<int>(variant)
                                       << " max_rel_err=" << r.max_rel_err);
  }
}

TEST_CASE("clone yields equal values with independent storage") {
  Vocabulary v = toy_vocab();
  EncoderConfig cfg = small_config(EncoderVariant::kEmbedMeanMlp, v.size());
  Rng rng(8);
  EncoderParams p = EncoderParams::init(cfg, rng);
  EncoderParams q = p.clone();
  auto pp = p.parameters();
  auto qp = q.parameters();
  REQUIRE(pp.size() == qp.size());
  for (std::size_t i = 0; i < pp.size(); ++i) {
    CHECK(pp[i].values() == qp[i].values());
    CHECK(pp[i].node() != qp[i].node());
  }
  q.embedding.leaf_values()[0] += 1.0;
  CHECK(p.embedding.values()[0] != q.embedding.values()[0]);
}
