#include "mrco/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace mrco {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

// ---- splitting --------------------------------------------------------------

std::pair<Dataset, Dataset> split_meta(const Dataset& train, double meta_fraction,
                                       std::uint64_t seed) {
  if (!(meta_fraction > 0.0 && meta_fraction < 1.0))
    throw std::invalid_argument(
        "split_meta: meta_fraction must lie strictly between 0 and 1");

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.examples.size(); ++i)
    by_class[train.examples[i].label].push_back(i);

  std::vector<bool> to_meta(train.examples.size(), false);
  Rng rng(seed);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      throw std::invalid_argument("split_meta: class " + std::to_string(label) +
                                  " has fewer than 2 examples");
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t take = static_cast<std::size_t>(
        std::llround(meta_fraction * static_cast<double>(idx.size())));
    take = std::max<std::size_t>(1, std::min(take, idx.size() - 1));
    for (std::size_t k = 0; k < take; ++k) to_meta[idx[k]] = true;
  }

  Dataset task, meta;
  task.name = train.name + "/task";
  meta.name = train.name + "/meta";
  task.n_classes = meta.n_classes = train.n_classes;
  task.has_pairs = meta.has_pairs = train.has_pairs;
  for (std::size_t i = 0; i < train.examples.size(); ++i)
    (to_meta[i] ? meta : task).examples.push_back(train.examples[i]);
  return {std::move(task), std::move(meta)};
}

// ---- metrics ----------------------------------------------------------------

Metric metric_from_name(const std::string& name) {
  if (name == "accuracy") return Metric::kAccuracy;
  if (name == "mcc") return Metric::kMcc;
  throw std::invalid_argument("unknown metric '" + name +
                              "' (expected accuracy or mcc)");
}

std::vector<std::vector<std::size_t>> confusion_matrix(
    const std::vector<std::size_t>& truth,
    const std::vector<std::size_t>& predicted, std::size_t n_classes) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("confusion_matrix: length mismatch");
  std::vector<std::vector<std::size_t>> c(n_classes,
                                          std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes)
      throw std::invalid_argument("confusion_matrix: label out of range");
    ++c[truth[i]][predicted[i]];
  }
  return c;
}

double accuracy_from_confusion(const std::vector<std::vector<std::size_t>>& c) {
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      total += c[i][j];
      if (i == j) correct += c[i][j];
    }
  if (total == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double mcc_from_confusion(const std::vector<std::vector<std::size_t>>& c) {
  // multiclass correlation from marginals; reduces to TP/TN/FP/FN form for 2x2
  std::size_t n = c.size();
  double s = 0, corr = 0;
  std::vector<double> t(n, 0), p(n, 0);  // per-class truth / prediction counts
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double v = static_cast<double>(c[i][j]);
      s += v;
      t[i] += v;
      p[j] += v;
      if (i == j) corr += v;
    }
  if (s == 0) throw std::invalid_argument("mcc: empty confusion matrix");
  double dot_tp = 0, tt = 0, pp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    dot_tp += t[k] * p[k];
    tt += t[k] * t[k];
    pp += p[k] * p[k];
  }
  double cov = corr * s - dot_tp;
  double d1 = s * s - pp;
  double d2 = s * s - tt;
  if (d1 <= 0.0 || d2 <= 0.0) return 0.0;  // constant predictor or single class
  return cov / std::sqrt(d1 * d2);
}

std::size_t predict_class(const EncoderParams& model,
                          const std::vector<std::size_t>& tokens) {
  Tensor h = encode(tokens, model, false);
  Tensor scores = class_logits(h, model);
  const std::vector<double>& logits = scores.values();
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  return best;
}

EvalScores evaluate_dataset(const EncoderParams& model, const Vocabulary& vocab,
                            std::size_t max_len, const Dataset& dataset) {
  if (dataset.examples.empty())
    throw std::invalid_argument("evaluate: dataset is empty");
  std::vector<std::size_t> truth, pred;
  truth.reserve(dataset.size());
  pred.reserve(dataset.size());
  for (const Example& e : dataset.examples) {
    truth.push_back(e.label);
    pred.push_back(predict_class(model, tokenize(full_text(e), vocab, max_len)));
  }
  auto c = confusion_matrix(truth, pred, model.config.n_classes);
  return {accuracy_from_confusion(c), mcc_from_confusion(c)};
}

double evaluate(const EncoderParams& model, const Vocabulary& vocab,
                std::size_t max_len, const Dataset& dataset, Metric metric) {
  return evaluate_dataset(model, vocab, max_len, dataset).get(metric);
}

// ---- synthetic benchmark ------------------------------------------------------

namespace {

std::string filler_token(std::size_t i) { return "f" + std::to_string(i); }
std::string signal_token(std::size_t cls, std::size_t j) {
  return "c" + std::to_string(cls) + "s" + std::to_string(j);
}

bool is_filler(const std::string& token) {
  return !token.empty() && token[0] == 'f';
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec, std::size_t n_examples,
                       std::uint64_t seed, const std::string& name) {
  if (spec.n_classes < 2)
    throw std::invalid_argument("make_synthetic: need at least 2 classes");
  if (spec.signals_in_text > spec.text_len)
    throw std::invalid_argument(
        "make_synthetic: signals_in_text exceeds text_len");

  Dataset ds;
  ds.name = name;
  ds.n_classes = spec.n_classes;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> filler_pick(0, spec.n_fillers - 1);
  std::uniform_int_distribution<std::size_t> signal_pick(
      0, spec.signal_per_class - 1);

  for (std::size_t i = 0; i < n_examples; ++i) {
    Example e;
    e.id = i;
    e.label = i % spec.n_classes;
    std::vector<std::string> tokens(spec.text_len);
    for (auto& t : tokens) t = filler_token(filler_pick(rng));
    // partial Fisher-Yates picks the positions that carry class evidence
    std::vector<std::size_t> pos(spec.text_len);
    for (std::size_t k = 0; k < pos.size(); ++k) pos[k] = k;
    for (std::size_t k = 0; k < spec.signals_in_text; ++k) {
      std::uniform_int_distribution<std::size_t> d(k, pos.size() - 1);
      std::swap(pos[k], pos[d(rng)]);
      tokens[pos[k]] = signal_token(e.label, signal_pick(rng));
    }
    e.text_a = join_ws(tokens);
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

std::vector<AugmentedExample> make_synthetic_augmented(const Dataset& raw,
                                                       const SyntheticSpec& spec,
                                                       std::uint64_t seed) {
  std::vector<const Example*> ordered;
  ordered.reserve(raw.examples.size());
  for (const Example& e : raw.examples) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(),
            [](const Example* a, const Example* b) { return a->id < b->id; });

  std::vector<AugmentedExample> out;
  for (const Example* e : ordered) {
    for (std::size_t j = 0; j < spec.per_example; ++j) {
      Rng rng(derive_seed(seed, e->id, j));
      std::uniform_int_distribution<std::size_t> filler_pick(0,
                                                             spec.n_fillers - 1);
      std::vector<std::string> tokens = split_ws(e->text_a);
      for (auto& t : tokens)
        if (is_filler(t) &&
            std::bernoulli_distribution(0.5)(rng))
          t = filler_token(filler_pick(rng));

      AugmentedExample a;
      a.id = out.size();
      a.origin_id = e->id;
      a.label = e->label;
      a.text = join_ws(tokens);
      a.seed = derive_seed(seed, e->id, j);
      a.augmenter_name = kBenignTag;
      if (spec.corrupt_rate > 0.0 &&
          std::bernoulli_distribution(spec.corrupt_rate)(rng)) {
        std::uniform_int_distribution<std::size_t> other(1, spec.n_classes - 1);
        a.label = (e->label + other(rng)) % spec.n_classes;
        a.augmenter_name = kFlippedTag;
      }
      out.push_back(std::move(a));
    }
  }
  return out;
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'R', 'C', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  put_u64(out, bits);
}

struct ByteReader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > data.size())
      throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++]))
           << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++]))
           << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t expect = 1;
    for (std::size_t d : t.shape) {
      put_u64(out, d);
      expect *= d;
    }
    if (expect != t.values.size())
      throw std::invalid_argument("checkpoint: tensor '" + t.name +
                                  "' shape/value size mismatch");
    for (double v : t.values) put_f64(out, v);
  }
  write_file_atomic(path, out);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string data = buf.str();

  ByteReader r{data};
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    std::uint32_t rank = r.u32();
    std::size_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(static_cast<std::size_t>(r.u64()));
      total *= t.shape.back();
    }
    t.values.resize(total);
    for (std::size_t k = 0; k < total; ++k) t.values[k] = r.f64();
    out.push_back(std::move(t));
  }
  if (r.pos != data.size())
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return out;
}

std::vector<NamedTensor> encoder_named_tensors(const EncoderParams& model) {
  std::vector<NamedTensor> out;
  auto push = [&](const std::string& name, const Tensor& t) {
    out.push_back({name, t.shape(), t.values()});
  };
  push("embedding", model.embedding);
  if (model.config.variant == EncoderVariant::kEmbedMeanMlp) {
    push("mlp_w", model.mlp_w);
    push("mlp_b", model.mlp_b);
  } else {
    for (std::size_t i = 0; i < model.conv_w.size(); ++i) {
      push("conv_w." + std::to_string(i), model.conv_w[i]);
      push("conv_b." + std::to_string(i), model.conv_b[i]);
    }
  }
  push("cls_w", model.cls_w);
  push("cls_b", model.cls_b);
  return out;
}

std::vector<NamedTensor> reweighter_named_tensors(const ReweightNet& net) {
  std::vector<NamedTensor> out;
  auto push = [&](const std::string& name, const Tensor& t) {
    out.push_back({name, t.shape(), t.values()});
  };
  push("reweight.label_embedding", net.label_embedding);
  push("reweight.w1", net.w1);
  push("reweight.b1", net.b1);
  push("reweight.w2", net.w2);
  push("reweight.b2", net.b2);
  return out;
}

EncoderParams encoder_from_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t;

  auto need = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    return *it->second;
  };
  auto as_tensor = [](const NamedTensor& t) {
    return Tensor::param(t.shape, t.values);
  };

  const NamedTensor& emb = need("embedding");
  if (emb.shape.size() != 2)
    throw std::runtime_error("checkpoint: embedding must be rank 2");

  EncoderParams p;
  p.config.vocab_size = emb.shape[0];
  p.config.d_emb = emb.shape[1];
  p.embedding = as_tensor(emb);

  if (by_name.count("mlp_w")) {
    p.config.variant = EncoderVariant::kEmbedMeanMlp;
    const NamedTensor& w = need("mlp_w");
    if (w.shape.size() != 2 || w.shape[0] != p.config.d_emb)
      throw std::runtime_error("checkpoint: mlp_w shape mismatch");
    p.config.d_mlp = w.shape[1];
    p.mlp_w = as_tensor(w);
    p.mlp_b = as_tensor(need("mlp_b"));
  } else {
    p.config.variant = EncoderVariant::kTextCnn;
    p.config.widths.clear();
    for (std::size_t i = 0;; ++i) {
      auto it = by_name.find("conv_w." + std::to_string(i));
      if (it == by_name.end()) break;
      const NamedTensor& w = *it->second;
      if (w.shape.size() != 2 || w.shape[0] % p.config.d_emb != 0)
        throw std::runtime_error("checkpoint: conv_w shape mismatch");
      p.config.widths.push_back(w.shape[0] / p.config.d_emb);
      p.config.n_filters = w.shape[1];
      p.conv_w.push_back(as_tensor(w));
      p.conv_b.push_back(as_tensor(need("conv_b." + std::to_string(i))));
    }
    if (p.config.widths.empty())
      throw std::runtime_error("checkpoint: no encoder body tensors found");
  }

  const NamedTensor& cls = need("cls_w");
  if (cls.shape.size() != 2 || cls.shape[0] != p.config.d_h())
    throw std::runtime_error("checkpoint: cls_w width does not match d_h");
  p.config.n_classes = cls.shape[1];
  p.cls_w = as_tensor(cls);
  p.cls_b = as_tensor(need("cls_b"));
  return p;
}

// ---- experiments ---------------------------------------------------------------

std::vector<AugmentedExample> build_configured_augmented(const Dataset& raw,
                                                         const AugmenterSpec& spec) {
  bool needs_lexicon = false;
  for (const std::string& n : spec.names)
    if (n == "synonym" || n == "easydata") needs_lexicon = true;

  SynonymLexicon lexicon = needs_lexicon ? SynonymLexicon::load(spec.lexicon)
                                         : SynonymLexicon();
  std::vector<std::unique_ptr<Augmenter>> augs;
  for (const std::string& n : spec.names) {
    if (n == "synonym")
      augs.push_back(
          std::make_unique<SynonymAugmenter>(lexicon, spec.synonym_prob));
    else if (n == "easydata")
      augs.push_back(std::make_unique<EasyDataAugmenter>(lexicon, spec.easydata));
    else if (n == "charswap")
      augs.push_back(std::make_unique<CharswapAugmenter>(spec.charswap_prob));
    else
      throw std::invalid_argument("unknown augmenter '" + n + "'");
  }
  return build_augmented_dataset(raw, augs, spec.per_example, spec.seed);
}

void finalize_stats(RunResult& r) {
  r.mean = 0.0;
  r.stddev = 0.0;
  if (r.per_seed.empty()) return;
  for (double v : r.per_seed) r.mean += v;
  r.mean /= static_cast<double>(r.per_seed.size());
  if (r.per_seed.size() > 1) {
    double acc = 0.0;
    for (double v : r.per_seed) acc += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(acc / static_cast<double>(r.per_seed.size() - 1));
  }
}

Dataset load_training_set(const ExperimentConfig& cfg) {
  if (cfg.data.train.empty())
    return make_synthetic(cfg.synthetic, cfg.synthetic.n_train,
                          cfg.synthetic.data_seed, "synthetic_train");
  return load_dataset(cfg.data.train);
}

std::vector<AugmentedExample> augment_training_set(const Dataset& train,
                                                   const ExperimentConfig& cfg) {
  if (cfg.data.train.empty())
    return make_synthetic_augmented(
        train, cfg.synthetic, derive_seed(cfg.synthetic.data_seed, 0xA6, 2));
  return build_configured_augmented(train, cfg.augmenter);
}

namespace {

struct Prepared {
  Dataset train;
  Dataset dev;
  std::vector<AugmentedExample> augmented;
  Vocabulary vocab;
  std::size_t n_classes = 0;
  std::vector<std::vector<std::size_t>> raw_tokens;  // aligned with train
  std::vector<std::vector<std::size_t>> aug_tokens;  // aligned with augmented
};

Prepared prepare_data(const ExperimentConfig& cfg) {
  Prepared d;
  d.train = load_training_set(cfg);
  d.dev = cfg.data.train.empty()
              ? make_synthetic(cfg.synthetic, cfg.synthetic.n_dev,
                               derive_seed(cfg.synthetic.data_seed, 0xDE, 1),
                               "synthetic_dev")
              : load_dataset(cfg.data.dev);
  if (cfg.method != Method::kPlain) {
    d.augmented = cfg.data.augmented.empty()
                      ? augment_training_set(d.train, cfg)
                      : load_augmented(cfg.data.augmented);
  }

  if (cfg.method == Method::kAugFilter)
    d.augmented = filter_augmented(d.augmented, cfg.filter.lower,
                                   cfg.filter.upper);

  d.n_classes = d.train.n_classes;
  if (d.dev.n_classes > d.n_classes)
    throw std::invalid_argument(
        "dev set contains labels outside the training label set");
  for (const AugmentedExample& a : d.augmented)
    if (a.label >= d.n_classes)
      throw std::invalid_argument("augmented sample " + std::to_string(a.id) +
                                  " has label outside the training label set");
  if (method_uses_reweighter(cfg.method) && d.augmented.empty())
    throw std::invalid_argument(
        "method '" + method_name(cfg.method) +
        "' needs augmented samples, but none are available");

  std::vector<std::string> texts;
  texts.reserve(d.train.size() + d.augmented.size());
  for (const Example& e : d.train.examples) texts.push_back(full_text(e));
  for (const AugmentedExample& a : d.augmented) texts.push_back(a.text);
  d.vocab = Vocabulary::build(texts, cfg.data.min_frequency);

  d.raw_tokens.reserve(d.train.size());
  for (const Example& e : d.train.examples)
    d.raw_tokens.push_back(tokenize(full_text(e), d.vocab, cfg.max_len));
  d.aug_tokens.reserve(d.augmented.size());
  for (const AugmentedExample& a : d.augmented)
    d.aug_tokens.push_back(tokenize(a.text, d.vocab, cfg.max_len));
  return d;
}

struct CsvRows {
  std::vector<std::string> lines;
  std::string method;
  std::uint64_t seed = 0;

  void add(const std::string& metric_name, double value, std::size_t epoch) {
    lines.push_back(method + "," + std::to_string(seed) + "," + metric_name +
                    "," + fmt17(value) + "," + std::to_string(epoch));
  }
};

void write_results_csv(const std::string& path,
                       const std::vector<std::string>& lines) {
  std::string out = "method,seed,metric_name,value,epoch\n";
  for (const std::string& l : lines) out += l + "\n";
  write_file_atomic(path, out);
}

/// Cycles a shuffled index list, reshuffling on every wrap.
struct IndexCycler {
  std::vector<std::size_t> order;
  std::size_t pos = 0;

  explicit IndexCycler(std::size_t n) : order(n) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    pos = n;  // first take() reshuffles
  }

  std::vector<std::size_t> take(std::size_t k, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      out.push_back(order[pos++]);
      if (order.size() == 1 && out.size() < k) break;  // degenerate pool
    }
    return out;
  }
};

struct SeedOutcome {
  std::vector<double> curve;
  EvalScores final_scores;
  std::vector<WeightRecord> weights;
  std::vector<NamedTensor> tensors;
};

/// Shared by plain, aug, and aug_filter: straight cross-entropy minimization
/// over a fixed example pool.
SeedOutcome run_supervised_seed(const ExperimentConfig& cfg, const Prepared& data,
                                std::uint64_t seed, Metric metric,
                                CsvRows& rows) {
  Rng init_rng(derive_seed(seed, 0x11, 1));
  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.vocab_size = data.vocab.size();
  enc_cfg.n_classes = data.n_classes;
  EncoderParams model = EncoderParams::init(enc_cfg, init_rng);

  std::vector<const std::vector<std::size_t>*> pool_tokens;
  std::vector<std::size_t> pool_labels;
  for (std::size_t i = 0; i < data.raw_tokens.size(); ++i) {
    pool_tokens.push_back(&data.raw_tokens[i]);
    pool_labels.push_back(data.train.examples[i].label);
  }
  for (std::size_t i = 0; i < data.aug_tokens.size(); ++i) {
    pool_tokens.push_back(&data.aug_tokens[i]);
    pool_labels.push_back(data.augmented[i].label);
  }

  AdamState adam(cfg.main_lr);
  Rng run_rng(derive_seed(seed, 0x22, 2));
  std::vector<std::size_t> order(pool_tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  SeedOutcome out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), run_rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      RawBatch batch;
      for (std::size_t k = start; k < stop; ++k) {
        batch.tokens.push_back(*pool_tokens[order[k]]);
        batch.labels.push_back(pool_labels[order[k]]);
        batch.ids.push_back(order[k]);
      }
      Tensor loss = forward_batch(batch, AugBatch{}, model, true).raw_loss_mean;
      loss_sum += loss.value();
      ++steps;
      zero_grads(model.parameters());
      ad::backward(loss);
      adam.step(model.parameters());
      zero_grads(model.parameters());
    }
    EvalScores es = evaluate_dataset(model, data.vocab, cfg.max_len, data.dev);
    rows.add("dev_accuracy", es.accuracy, epoch);
    rows.add("dev_mcc", es.mcc, epoch);
    rows.add("train_task_loss", steps ? loss_sum / steps : 0.0, epoch);
    out.curve.push_back(es.get(metric));
  }

  out.final_scores = evaluate_dataset(model, data.vocab, cfg.max_len, data.dev);
  rows.add("final_accuracy", out.final_scores.accuracy, cfg.epochs);
  rows.add("final_mcc", out.final_scores.mcc, cfg.epochs);
  out.tensors = encoder_named_tensors(model);
  return out;
}

SeedOutcome run_mrco_seed(const ExperimentConfig& cfg, const Prepared& data,
                          std::uint64_t seed, Metric metric, CsvRows& rows) {
  // the holdout is a property of the data, not of the trial seed
  auto [task_ds, meta_ds] =
      split_meta(data.train, cfg.meta_fraction,
                 derive_seed(cfg.synthetic.data_seed, 0x57, 3));

  std::unordered_map<std::size_t, std::size_t> token_row_of_id;
  for (std::size_t i = 0; i < data.train.examples.size(); ++i)
    token_row_of_id[data.train.examples[i].id] = i;

  std::unordered_set<std::size_t> meta_ids;
  for (const Example& e : meta_ds.examples) meta_ids.insert(e.id);

  // augmentations of held-out examples never reach the task loss
  std::vector<std::size_t> task_aug;
  std::unordered_map<std::size_t, std::vector<std::size_t>> aug_by_origin;
  for (std::size_t i = 0; i < data.augmented.size(); ++i) {
    if (meta_ids.count(data.augmented[i].origin_id)) continue;
    task_aug.push_back(i);
    aug_by_origin[data.augmented[i].origin_id].push_back(i);
  }
  if (task_aug.empty())
    throw std::runtime_error(
        "no augmented samples attach to the task split; cannot train " +
        method_name(cfg.method));

  Rng init_rng(derive_seed(seed, 0x11, 1));
  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.vocab_size = data.vocab.size();
  enc_cfg.n_classes = data.n_classes;
  EncoderParams model = EncoderParams::init(enc_cfg, init_rng);

  ReweightConfig rw_cfg = cfg.reweighter;
  rw_cfg.n_classes = data.n_classes;
  rw_cfg.d_h = enc_cfg.d_h();
  ReweightNet net = ReweightNet::init(rw_cfg, init_rng);

  ContrastiveState contrastive =
      ContrastiveState::init(model, cfg.contrastive, data.n_classes);
  OptimizerState opt =
      OptimizerState::init(cfg.main_lr, cfg.meta_lr, cfg.reweight_lr);
  TrainOptions options;
  options.lambda =
      cfg.method == Method::kMrcoNoContrastive ? 0.0 : cfg.lambda;
  options.fifo_queues = cfg.method == Method::kMrcoFifo;

  Rng run_rng(derive_seed(seed, 0x33, 3));
  std::vector<std::size_t> task_order(task_ds.size());
  for (std::size_t i = 0; i < task_order.size(); ++i) task_order[i] = i;
  IndexCycler meta_cycler(meta_ds.size());
  std::size_t meta_take = std::min(cfg.meta_batch_size, meta_ds.size());

  SeedOutcome out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(task_order.begin(), task_order.end(), run_rng);
    double task_sum = 0, meta_sum = 0, contrast_sum = 0, w_sum = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < task_order.size();
         start += cfg.batch_size) {
      std::size_t stop = std::min(task_order.size(), start + cfg.batch_size);
      MetaBatch batch;
      for (std::size_t k = start; k < stop; ++k) {
        const Example& e = task_ds.examples[task_order[k]];
        batch.task_raw.tokens.push_back(
            data.raw_tokens[token_row_of_id.at(e.id)]);
        batch.task_raw.labels.push_back(e.label);
        batch.task_raw.ids.push_back(e.id);
      }

      std::vector<std::size_t> candidates;
      for (std::size_t id : batch.task_raw.ids) {
        auto it = aug_by_origin.find(id);
        if (it != aug_by_origin.end())
          candidates.insert(candidates.end(), it->second.begin(),
                            it->second.end());
      }
      if (candidates.empty()) candidates = task_aug;
      std::shuffle(candidates.begin(), candidates.end(), run_rng);
      std::size_t n_aug = std::min(cfg.aug_batch_size, candidates.size());
      for (std::size_t k = 0; k < n_aug; ++k) {
        const AugmentedExample& a = data.augmented[candidates[k]];
        batch.task_aug.tokens.push_back(data.aug_tokens[candidates[k]]);
        batch.task_aug.labels.push_back(a.label);
        batch.task_aug.origin_ids.push_back(a.origin_id);
      }

      for (std::size_t mi : meta_cycler.take(meta_take, run_rng)) {
        const Example& e = meta_ds.examples[mi];
        batch.meta_raw.tokens.push_back(
            data.raw_tokens[token_row_of_id.at(e.id)]);
        batch.meta_raw.labels.push_back(e.label);
        batch.meta_raw.ids.push_back(e.id);
      }

      IterationMetrics m =
          train_iteration(batch, model, net, contrastive, opt, options, run_rng);
      task_sum += m.task_loss;
      meta_sum += m.meta_loss;
      contrast_sum += m.contrastive_loss;
      w_sum += m.w_mean;
      ++steps;
    }
    EvalScores es = evaluate_dataset(model, data.vocab, cfg.max_len, data.dev);
    double inv = steps ? 1.0 / static_cast<double>(steps) : 0.0;
    rows.add("dev_accuracy", es.accuracy, epoch);
    rows.add("dev_mcc", es.mcc, epoch);
    rows.add("train_task_loss", task_sum * inv, epoch);
    rows.add("train_meta_loss", meta_sum * inv, epoch);
    rows.add("train_contrastive_loss", contrast_sum * inv, epoch);
    rows.add("w_mean", w_sum * inv, epoch);
    out.curve.push_back(es.get(metric));
  }

  out.final_scores = evaluate_dataset(model, data.vocab, cfg.max_len, data.dev);
  rows.add("final_accuracy", out.final_scores.accuracy, cfg.epochs);
  rows.add("final_mcc", out.final_scores.mcc, cfg.epochs);

  // post-training snapshot: score every augmented sample in evaluation mode
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < data.augmented.size(); start += kChunk) {
    std::size_t stop = std::min(data.augmented.size(), start + kChunk);
    std::vector<Tensor> hs;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < stop; ++i) {
      hs.push_back(encode(data.aug_tokens[i], model, false));
      labels.push_back(data.augmented[i].label);
    }
    Tensor w = compute_weights(ad::stack_rows(hs), labels, net, false, run_rng);
    const std::vector<double>& wv = w.values();
    for (std::size_t i = start; i < stop; ++i) {
      const AugmentedExample& a = data.augmented[i];
      out.weights.push_back({a.id, a.origin_id, a.augmenter_name,
                             wv[i - start]});
    }
  }

  out.tensors = encoder_named_tensors(model);
  std::vector<NamedTensor> rt = reweighter_named_tensors(net);
  out.tensors.insert(out.tensors.end(), rt.begin(), rt.end());
  return out;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::string& out_dir) {
  validate_config(cfg);
  std::filesystem::create_directories(out_dir);
  Prepared data = prepare_data(cfg);
  Metric metric = metric_from_name(cfg.metric);

  write_file_atomic(out_dir + "/effective_config.json",
                    config_to_json_text(cfg));
  data.vocab.save(out_dir + "/vocab.txt");

  RunResult rr;
  rr.method = method_name(cfg.method);
  rr.weight_histogram.assign(kWeightHistogramBins, 0);

  std::string results_path = out_dir + "/" + rr.method + "_results.csv";
  std::vector<std::string> lines;

  for (std::uint64_t seed : cfg.seeds) {
    CsvRows rows;
    rows.method = rr.method;
    rows.seed = seed;
    SeedOutcome so;
    try {
      so = method_uses_reweighter(cfg.method)
               ? run_mrco_seed(cfg, data, seed, metric, rows)
               : run_supervised_seed(cfg, data, seed, metric, rows);
    } catch (...) {
      // keep whatever this seed produced before dying, then propagate
      lines.insert(lines.end(), rows.lines.begin(), rows.lines.end());
      write_results_csv(results_path, lines);
      throw;
    }
    lines.insert(lines.end(), rows.lines.begin(), rows.lines.end());
    write_results_csv(results_path, lines);

    rr.seeds.push_back(seed);
    rr.per_seed.push_back(so.final_scores.get(metric));
    rr.dev_curves.push_back(so.curve);
    save_checkpoint(
        out_dir + "/" + rr.method + "_seed" + std::to_string(seed) + ".ckpt",
        so.tensors);

    if (!so.weights.empty()) {
      std::string wpath = out_dir + "/" + rr.method + "_seed" +
                          std::to_string(seed) + "_weights.tsv";
      std::string wout = "id\torigin_id\taugmenter\tweight\n";
      for (const WeightRecord& w : so.weights) {
        wout += std::to_string(w.aug_id) + "\t" + std::to_string(w.origin_id) +
                "\t" + w.augmenter + "\t" + fmt17(w.weight) + "\n";
        std::size_t bin = static_cast<std::size_t>(
            w.weight * static_cast<double>(kWeightHistogramBins));
        if (bin >= kWeightHistogramBins) bin = kWeightHistogramBins - 1;
        ++rr.weight_histogram[bin];
      }
      write_file_atomic(wpath, wout);
      rr.per_seed_weights.push_back(std::move(so.weights));
    }
  }

  finalize_stats(rr);

  if (method_uses_reweighter(cfg.method)) {
    std::string hout = "bin_low,bin_high,count\n";
    for (std::size_t b = 0; b < kWeightHistogramBins; ++b) {
      double lo = static_cast<double>(b) / kWeightHistogramBins;
      double hi = static_cast<double>(b + 1) / kWeightHistogramBins;
      hout += fmtg(lo) + "," + fmtg(hi) + "," +
              std::to_string(rr.weight_histogram[b]) + "\n";
    }
    write_file_atomic(out_dir + "/" + rr.method + "_weight_histogram.csv", hout);
  }

  std::string summary = "method,metric_name,mean,std,n_seeds\n";
  summary += rr.method + "," + cfg.metric + "," + fmt17(rr.mean) + "," +
             fmt17(rr.stddev) + "," + std::to_string(rr.per_seed.size()) + "\n";
  write_file_atomic(out_dir + "/" + rr.method + "_summary.csv", summary);
  return rr;
}

std::vector<RunResult> sweep(const ExperimentConfig& cfg,
                             const std::string& out_dir) {
  validate_config(cfg);
  std::filesystem::create_directories(out_dir);

  std::vector<std::size_t> n_negs =
      cfg.sweep_n_neg.empty() ? std::vector<std::size_t>{cfg.contrastive.n_neg}
                              : cfg.sweep_n_neg;
  std::vector<int> taus =
      cfg.sweep_tau.empty() ? std::vector<int>{cfg.contrastive.tau}
                            : cfg.sweep_tau;
  std::vector<double> lambdas =
      cfg.sweep_lambda.empty() ? std::vector<double>{cfg.lambda}
                               : cfg.sweep_lambda;
  std::vector<double> rhos = cfg.sweep_rho.empty()
                                 ? std::vector<double>{cfg.contrastive.rho}
                                 : cfg.sweep_rho;

  std::vector<RunResult> results;
  std::string csv = "n_neg,tau,lambda,rho,metric_name,mean,std\n";
  for (std::size_t n_neg : n_negs)
    for (int tau : taus)
      for (double lambda : lambdas)
        for (double rho : rhos) {
          ExperimentConfig point = cfg;
          point.contrastive.n_neg = n_neg;
          point.contrastive.tau = tau;
          point.lambda = lambda;
          point.contrastive.rho = rho;
          std::string tag = "n" + std::to_string(n_neg) + "_t" +
                            std::to_string(tau) + "_l" + fmtg(lambda) + "_r" +
                            fmtg(rho);
          RunResult rr = run_experiment(point, out_dir + "/" + tag);
          csv += std::to_string(n_neg) + "," + std::to_string(tau) + "," +
                 fmtg(lambda) + "," + fmtg(rho) + "," + cfg.metric + "," +
                 fmt17(rr.mean) + "," + fmt17(rr.stddev) + "\n";
          results.push_back(std::move(rr));
        }
  write_file_atomic(out_dir + "/sweep.csv", csv);
  return results;
}

}  // namespace mrco
