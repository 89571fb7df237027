#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrco/augment.hpp"
#include "mrco/contrastive.hpp"
#include "mrco/encoder.hpp"
#include "mrco/reweighter.hpp"

namespace mrco {

enum class Method {
  kPlain,             // raw data only
  kAug,               // raw + every augmented sample, unweighted
  kAugFilter,         // raw + readability-filtered augmented samples
  kMrco,              // full bilevel reweighting + contrastive term
  kMrcoNoContrastive, // lambda forced to 0
  kMrcoFifo,          // weight-agnostic queue replacement
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool method_uses_reweighter(Method m);

struct DataPaths {
  std::string train;      // empty: use the synthetic generator
  std::string dev;
  std::string augmented;  // empty: build augmentations in-process
  std::size_t min_frequency = 1;
};

// Token-pattern benchmark: each class owns a few signal tokens planted into
// filler text; corrupted augmentations keep the text but flip the label.
struct SyntheticSpec {
  std::size_t n_train = 500;
  std::size_t n_dev = 200;
  std::size_t n_classes = 2;
  std::size_t text_len = 12;
  std::size_t n_fillers = 40;
  std::size_t signal_per_class = 3;
  std::size_t signals_in_text = 3;
  std::size_t per_example = 6;
  double corrupt_rate = 0.3;
  std::uint64_t data_seed = 7;
};

struct AugmenterSpec {
  std::string lexicon = "data/synonyms.tsv";
  std::vector<std::string> names{"synonym", "easydata", "charswap"};
  std::size_t per_example = 4;
  double synonym_prob = 0.1;
  EasyDataProbs easydata{};
  double charswap_prob = 0.1;
  std::uint64_t seed = 11;
};

struct FilterSpec {
  double lower = 40.0;
  double upper = 100.0;
};

struct ExperimentConfig {
  Method method = Method::kMrco;
  std::string metric = "accuracy";  // or "mcc"
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  std::size_t epochs = 4;
  std::size_t batch_size = 16;
  std::size_t aug_batch_size = 32;
  std::size_t meta_batch_size = 16;

  double main_lr = 1e-3;
  double meta_lr = 0.1;  // virtual step size
  double reweight_lr = 1e-3;
  double meta_fraction = 0.1;
  double lambda = 0.5;  // contrastive term multiplier in the final objective

  EncoderConfig encoder;  // vocab_size and n_classes filled in at run time
  std::size_t max_len = 32;
  ReweightConfig reweighter;  // n_classes and d_h filled in at run time
  ContrastiveConfig contrastive;

  DataPaths data;
  SyntheticSpec synthetic;
  AugmenterSpec augmenter;
  FilterSpec filter;

  // empty grid axis: sweep keeps the current value
  std::vector<std::size_t> sweep_n_neg;
  std::vector<int> sweep_tau;
  std::vector<double> sweep_lambda;
  std::vector<double> sweep_rho;
};

// Throws std::invalid_argument naming the first violated invariant.
void validate_config(const ExperimentConfig& cfg);

// JSON text <-> config. Parsing starts from the defaults, rejects unknown
// keys, then applies "dot.path=value" overrides in order.
ExperimentConfig config_from_json_text(const std::string& json_text,
                                       const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
std::string config_to_json_text(const ExperimentConfig& cfg);

}  // namespace mrco
