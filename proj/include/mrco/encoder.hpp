#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrco/tensor.hpp"

namespace mrco {

using ad::Rng;
using ad::Tensor;

/// Token ids are dense 0..size-1 with three fixed specials in front.
struct Vocabulary {
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kSep = 2;

  std::unordered_map<std::string, std::size_t> token_to_id;
  std::vector<std::string> id_to_token;
  std::size_t min_frequency = 1;

  static Vocabulary build(const std::vector<std::string>& texts,
                          std::size_t min_frequency = 1);

  std::size_t size() const { return id_to_token.size(); }
  std::size_t id_of(const std::string& token) const;  // UNK when absent

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
};

/// Lowercased whitespace tokens.
std::vector<std::string> split_tokens(const std::string& text);

/// Ids truncated or PAD-padded to exactly max_len.
std::vector<std::size_t> tokenize(const std::string& text,
                                  const Vocabulary& vocab,
                                  std::size_t max_len);

enum class EncoderVariant { kEmbedMeanMlp, kTextCnn };

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::kEmbedMeanMlp;
  std::size_t vocab_size = 0;
  std::size_t n_classes = 2;
  std::size_t d_emb = 64;
  std::size_t d_mlp = 64;                    // EmbedMeanMlp hidden width
  std::size_t n_filters = 32;                // TextCnn channels per width
  std::vector<std::size_t> widths = {3, 4, 5};

  std::size_t d_h() const {
    return variant == EncoderVariant::kEmbedMeanMlp ? d_mlp
                                                    : n_filters * widths.size();
  }
};

/// Trainable state of the main text encoder plus its softmax classifier.
struct EncoderParams {
  EncoderConfig config;
  Tensor embedding;            // vocab_size x d_emb
  Tensor mlp_w;                // d_emb x d_mlp   (EmbedMeanMlp)
  Tensor mlp_b;                // d_mlp
  std::vector<Tensor> conv_w;  // per width: (w * d_emb) x n_filters  (TextCnn)
  std::vector<Tensor> conv_b;  // per width: n_filters
  Tensor cls_w;                // d_h x n_classes
  Tensor cls_b;                // n_classes

  static EncoderParams init(const EncoderConfig& config, Rng& rng);

  /// Value-equal deep copy with fresh, independently mutable leaves.
  EncoderParams clone() const;

  /// Every trainable leaf, in a fixed serialization order.
  std::vector<Tensor> parameters() const;

  /// Same structure with every parameter tensor replaced, in parameters()
  /// order. Replacements may be derived expressions (virtual parameters).
  EncoderParams with_parameters(const std::vector<Tensor>& replacement) const;
};

/// Hidden representation of one token sequence; differentiable end-to-end.
Tensor encode(const std::vector<std::size_t>& tokens,
              const EncoderParams& params, bool train_mode);

/// Unnormalized class scores for a hidden vector.
Tensor class_logits(const Tensor& h, const EncoderParams& params);

/// softmax(linear(h)); strictly positive, sums to 1.
Tensor classify(const Tensor& h, const EncoderParams& params);

/// Xavier-uniform matrix, zero-initialized vectors elsewhere.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace mrco
