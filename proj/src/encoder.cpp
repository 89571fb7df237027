#include "mrco/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mrco {

namespace {

const char* kSpecialTokens[3] = {"<pad>", "<unk>", "<sep>"};

}  // namespace

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts,
                             std::size_t min_frequency) {
  // std::map keeps token order deterministic across runs.
  std::map<std::string, std::size_t> counts;
  for (const std::string& t : texts)
    for (const std::string& tok : split_tokens(t)) ++counts[tok];

  Vocabulary v;
  v.min_frequency = min_frequency;
  for (const char* s : kSpecialTokens) {
    v.token_to_id.emplace(s, v.id_to_token.size());
    v.id_to_token.emplace_back(s);
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_frequency && !v.token_to_id.count(tok)) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [tok, n] : kept) {
    v.token_to_id.emplace(tok, v.id_to_token.size());
    v.id_to_token.push_back(tok);
  }
  return v;
}

std::size_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
  for (const std::string& tok : id_to_token) out << tok << "\n";
  if (!out) throw std::runtime_error("vocabulary: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("vocabulary: cannot read " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.token_to_id.emplace(line, v.id_to_token.size());
    v.id_to_token.push_back(line);
  }
  for (std::size_t i = 0; i < 3; ++i)
    if (v.id_to_token.size() <= i || v.id_to_token[i] != kSpecialTokens[i])
      throw std::runtime_error("vocabulary: " + path +
                               " is missing fixed special tokens");
  return v;
}

std::vector<std::size_t> tokenize(const std::string& text,
                                  const Vocabulary& vocab,
                                  std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("tokenize: max_len must be >= 1");
  std::vector<std::size_t> ids;
  ids.reserve(max_len);
  for (const std::string& tok : split_tokens(text)) {
    if (ids.size() == max_len) break;
    ids.push_back(vocab.id_of(tok));
  }
  ids.resize(max_len, Vocabulary::kPad);
  return ids;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> vals(fan_in * fan_out);
  for (double& v : vals) v = dist(rng);
  return Tensor::param({fan_in, fan_out}, std::move(vals));
}

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  if (config.vocab_size == 0)
    throw std::invalid_argument("encoder: vocab_size must be set");
  if (config.n_classes < 2)
    throw std::invalid_argument("encoder: need at least 2 classes");
  EncoderParams p;
  p.config = config;
  p.embedding = xavier_uniform(config.vocab_size, config.d_emb, rng);
  if (config.variant == EncoderVariant::kEmbedMeanMlp) {
    p.mlp_w = xavier_uniform(config.d_emb, config.d_mlp, rng);
    p.mlp_b = Tensor::param({config.d_mlp},
                            std::vector<double>(config.d_mlp, 0.0));
  } else {
    for (std::size_t w : config.widths) {
      p.conv_w.push_back(
          xavier_uniform(w * config.d_emb, config.n_filters, rng));
      p.conv_b.push_back(Tensor::param(
          {config.n_filters}, std::vector<double>(config.n_filters, 0.0)));
    }
  }
  p.cls_w = xavier_uniform(config.d_h(), config.n_classes, rng);
  p.cls_b = Tensor::param({config.n_classes},
                          std::vector<double>(config.n_classes, 0.0));
  return p;
}

EncoderParams EncoderParams::clone() const {
  auto copy = [](const Tensor& t) {
    return t.defined() ? Tensor::param(t.shape(), t.values()) : Tensor();
  };
  EncoderParams p;
  p.config = config;
  p.embedding = copy(embedding);
  p.mlp_w = copy(mlp_w);
  p.mlp_b = copy(mlp_b);
  for (const Tensor& t : conv_w) p.conv_w.push_back(copy(t));
  for (const Tensor& t : conv_b) p.conv_b.push_back(copy(t));
  p.cls_w = copy(cls_w);
  p.cls_b = copy(cls_b);
  return p;
}

std::vector<Tensor> EncoderParams::parameters() const {
  std::vector<Tensor> out{embedding};
  if (config.variant == EncoderVariant::kEmbedMeanMlp) {
    out.push_back(mlp_w);
    out.push_back(mlp_b);
  } else {
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
      out.push_back(conv_w[i]);
      out.push_back(conv_b[i]);
    }
  }
  out.push_back(cls_w);
  out.push_back(cls_b);
  return out;
}

EncoderParams EncoderParams::with_parameters(
    const std::vector<Tensor>& replacement) const {
  std::vector<Tensor> current = parameters();
  if (replacement.size() != current.size())
    throw std::invalid_argument("with_parameters: expected " +
                                std::to_string(current.size()) + " tensors, got " +
                                std::to_string(replacement.size()));
  for (std::size_t i = 0; i < current.size(); ++i)
    if (replacement[i].shape() != current[i].shape())
      throw std::invalid_argument("with_parameters: shape mismatch at tensor " +
                                  std::to_string(i));
  EncoderParams p;
  p.config = config;
  std::size_t i = 0;
  p.embedding = replacement[i++];
  if (config.variant == EncoderVariant::kEmbedMeanMlp) {
    p.mlp_w = replacement[i++];
    p.mlp_b = replacement[i++];
  } else {
    p.conv_w.resize(conv_w.size());
    p.conv_b.resize(conv_b.size());
    for (std::size_t k = 0; k < conv_w.size(); ++k) {
      p.conv_w[k] = replacement[i++];
      p.conv_b[k] = replacement[i++];
    }
  }
  p.cls_w = replacement[i++];
  p.cls_b = replacement[i++];
  return p;
}

Tensor encode(const std::vector<std::size_t>& tokens,
              const EncoderParams& params, bool train_mode) {
  (void)train_mode;  // no stochastic layers in the main encoders
  const EncoderConfig& cfg = params.config;
  for (std::size_t id : tokens)
    if (id >= cfg.vocab_size)
      throw std::invalid_argument("encode: token id " + std::to_string(id) +
                                  " out of vocabulary");
  Tensor emb = ad::gather_rows(params.embedding, tokens);  // L x d_emb

  if (cfg.variant == EncoderVariant::kEmbedMeanMlp) {
    // Mean over non-PAD positions; all-PAD input yields the zero vector.
    std::vector<double> mask(tokens.size(), 0.0);
    double n = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] != Vocabulary::kPad) mask[i] = 1.0, ++n;
    if (n > 0)
      for (double& m : mask) m /= n;
    Tensor mean =
        ad::matmul(Tensor::from_values({1, tokens.size()}, std::move(mask)),
                   emb);  // 1 x d_emb
    Tensor pre = ad::add(ad::matmul(mean, params.mlp_w),
                         ad::reshape(params.mlp_b, {1, cfg.d_mlp}));
    return ad::reshape(ad::tanh_t(pre), {cfg.d_mlp});
  }

  std::vector<Tensor> pooled;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    std::size_t w = cfg.widths[i];
    if (tokens.size() < w)
      throw std::invalid_argument("encode: sequence shorter than filter width " +
                                  std::to_string(w));
    Tensor cols = ad::im2col(emb, w);                  // (L-w+1) x (w*d_emb)
    Tensor conv = ad::matmul(cols, params.conv_w[i]);  // (L-w+1) x n_f
    conv = ad::add(conv, ad::broadcast_rows(params.conv_b[i], conv.rows()));
    pooled.push_back(ad::max_axis0(ad::relu(conv)));   // n_f
  }
  return ad::concat_vec(pooled);  // 3*n_f
}

Tensor class_logits(const Tensor& h, const EncoderParams& params) {
  const EncoderConfig& cfg = params.config;
  if (h.shape() != ad::Shape{cfg.d_h()})
    throw std::invalid_argument("class_logits: hidden width mismatch, got " +
                                ad::shape_str(h.shape()));
  Tensor z = ad::matmul(ad::reshape(h, {1, cfg.d_h()}), params.cls_w);
  return ad::add(ad::reshape(z, {cfg.n_classes}), params.cls_b);
}

Tensor classify(const Tensor& h, const EncoderParams& params) {
  return ad::softmax_vec(class_logits(h, params));
}

}  // namespace mrco
