#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mrco/augment.hpp"
#include "mrco/config.hpp"
#include "mrco/dataset.hpp"
#include "mrco/encoder.hpp"
#include "mrco/meta_loop.hpp"
#include "mrco/reweighter.hpp"

namespace mrco {

// ---- splitting --------------------------------------------------------------

/// Label-stratified holdout: per class, round(fraction * count) examples go to
/// the meta side, at least 1 and at most count-1. Disjoint and exhaustive.
/// Throws when any class has fewer than 2 examples.
std::pair<Dataset, Dataset> split_meta(const Dataset& train, double meta_fraction,
                                       std::uint64_t seed);

// ---- metrics ----------------------------------------------------------------

enum class Metric { kAccuracy, kMcc };
Metric metric_from_name(const std::string& name);

/// counts[truth][predicted]
std::vector<std::vector<std::size_t>> confusion_matrix(
    const std::vector<std::size_t>& truth,
    const std::vector<std::size_t>& predicted, std::size_t n_classes);
double accuracy_from_confusion(const std::vector<std::vector<std::size_t>>& c);
/// Multiclass Matthews correlation; any degenerate denominator factor gives 0.
double mcc_from_confusion(const std::vector<std::vector<std::size_t>>& c);

/// argmax class, lowest index on ties; evaluation mode.
std::size_t predict_class(const EncoderParams& model,
                          const std::vector<std::size_t>& tokens);

struct EvalScores {
  double accuracy = 0.0;
  double mcc = 0.0;

  double get(Metric m) const { return m == Metric::kAccuracy ? accuracy : mcc; }
};

EvalScores evaluate_dataset(const EncoderParams& model, const Vocabulary& vocab,
                            std::size_t max_len, const Dataset& dataset);
double evaluate(const EncoderParams& model, const Vocabulary& vocab,
                std::size_t max_len, const Dataset& dataset, Metric metric);

// ---- synthetic benchmark ------------------------------------------------------

inline constexpr const char* kBenignTag = "benign";
inline constexpr const char* kFlippedTag = "flipped";

/// Token-pattern classification data: signals_in_text positions carry tokens
/// owned by the example's class, every other position holds shared filler.
Dataset make_synthetic(const SyntheticSpec& spec, std::size_t n_examples,
                       std::uint64_t seed, const std::string& name);

/// per_example noisy copies of each raw example: filler positions resample at
/// rate 1/2, signal positions survive. With probability corrupt_rate the copy
/// keeps its text but takes a wrong label (tagged kFlippedTag).
std::vector<AugmentedExample> make_synthetic_augmented(const Dataset& raw,
                                                       const SyntheticSpec& spec,
                                                       std::uint64_t seed);

// ---- checkpoints --------------------------------------------------------------

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

/// Binary container: magic "MRCOCKPT", u32 version, u32 count, then per tensor
/// u32 name length + bytes, u32 rank, u64 dims, f64 values. All little-endian.
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

std::vector<NamedTensor> encoder_named_tensors(const EncoderParams& model);
std::vector<NamedTensor> reweighter_named_tensors(const ReweightNet& net);
/// Rebuilds the encoder from tensor names and shapes alone.
EncoderParams encoder_from_checkpoint(const std::vector<NamedTensor>& tensors);

// ---- experiments ---------------------------------------------------------------

inline constexpr std::size_t kWeightHistogramBins = 20;

struct WeightRecord {
  std::size_t aug_id = 0;
  std::size_t origin_id = 0;
  std::string augmenter;
  double weight = 0.0;
};

struct RunResult {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed;  // final dev metric, one entry per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
  std::vector<std::vector<double>> dev_curves;  // per seed, per epoch
  std::vector<std::size_t> weight_histogram;  // kWeightHistogramBins over [0,1]
  std::vector<std::vector<WeightRecord>> per_seed_weights;  // reweighter methods
};

/// Recomputes mean/stddev from per_seed.
void finalize_stats(RunResult& r);

/// Trains cfg.method over every seed, writing into out_dir:
///   <method>_results.csv          method,seed,metric_name,value,epoch
///   <method>_weight_histogram.csv bin_low,bin_high,count (reweighter methods)
///   <method>_seed<k>_weights.tsv  per-sample final weights
///   <method>_seed<k>.ckpt, vocab.txt, effective_config.json, <method>_summary.csv
/// Results accumulated so far are flushed to disk before a seed failure
/// propagates.
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

/// Cartesian product over the non-empty sweep axes; each point runs in its own
/// subdirectory and lands as one row of <out_dir>/sweep.csv.
std::vector<RunResult> sweep(const ExperimentConfig& cfg,
                             const std::string& out_dir);

/// Real-text augmentation pipeline assembled from spec.names.
std::vector<AugmentedExample> build_configured_augmented(const Dataset& raw,
                                                         const AugmenterSpec& spec);

/// The raw training set a run uses: the synthetic generator when
/// cfg.data.train is empty, the TSV at that path otherwise.
Dataset load_training_set(const ExperimentConfig& cfg);

/// Augmented copies of `train` exactly as an in-process run builds them: the
/// synthetic corruption channel for generator data, the configured text
/// augmenters for file data. Unfiltered; a saved copy trains identically.
std::vector<AugmentedExample> augment_training_set(const Dataset& train,
                                                   const ExperimentConfig& cfg);

}  // namespace mrco
