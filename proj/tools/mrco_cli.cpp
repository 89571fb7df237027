// Exit codes: 0 success, 1 bad arguments or config, 2 runtime failure
// (including red verification checks).

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mrco/augment.hpp"
#include "mrco/config.hpp"
#include "mrco/dataset.hpp"
#include "mrco/encoder.hpp"
#include "mrco/harness.hpp"
#include "mrco/verify.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string seeds;
  bool quiet = false;
};

void add_config_opts(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path,
                  "JSON config file; defaults apply when omitted");
  cmd->add_option("--set", o.sets,
                  "dot.path=value override, applied in order after the file");
  cmd->add_option("--out-dir", o.out_dir,
                  "artifact directory (falls back to $MRK_OUT_DIR, then runs/)");
  cmd->add_flag("--quiet", o.quiet, "suppress the stdout summary");
}

std::string resolve_out_dir(const CommonOpts& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv("MRK_OUT_DIR"); env && *env) return env;
  return "runs";
}

mrco::ExperimentConfig load_effective(const CommonOpts& o) {
  std::vector<std::string> overrides = o.sets;
  if (!o.seeds.empty()) overrides.push_back("seeds=" + o.seeds);
  if (o.config_path.empty())
    return mrco::config_from_json_text("{}", overrides);
  return mrco::load_config(o.config_path, overrides);
}

std::string fmt4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_augment(const CommonOpts& o, const std::string& out_file) {
  mrco::ExperimentConfig cfg = load_effective(o);
  mrco::Dataset train = mrco::load_training_set(cfg);
  std::vector<mrco::AugmentedExample> aug =
      mrco::augment_training_set(train, cfg);

  namespace fs = std::filesystem;
  fs::path path = out_file.empty()
                      ? fs::path(resolve_out_dir(o)) / "augmented.tsv"
                      : fs::path(out_file);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  mrco::save_augmented(aug, path.string());
  if (!o.quiet)
    std::cout << aug.size() << " augmented samples from " << train.size()
              << " originals -> " << path.string() << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o) {
  mrco::ExperimentConfig cfg = load_effective(o);
  const std::string out = resolve_out_dir(o);
  mrco::RunResult r = mrco::run_experiment(cfg, out);
  if (!o.quiet) {
    std::cout << r.method << ", final dev " << cfg.metric << ":\n";
    for (std::size_t i = 0; i < r.seeds.size(); ++i)
      std::cout << "  seed " << r.seeds[i] << "  " << fmt4(r.per_seed[i])
                << "\n";
    std::cout << "  mean " << fmt4(r.mean) << "  std " << fmt4(r.stddev)
              << "\nartifacts in " << out << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonOpts& o) {
  mrco::ExperimentConfig cfg = load_effective(o);
  const std::string out = resolve_out_dir(o);
  std::vector<mrco::RunResult> points = mrco::sweep(cfg, out);
  if (!o.quiet) {
    for (std::size_t i = 0; i < points.size(); ++i)
      std::cout << "point " << i + 1 << "/" << points.size() << "  mean "
                << fmt4(points[i].mean) << "  std " << fmt4(points[i].stddev)
                << "\n";
    std::cout << "grid table in " << out << "/sweep.csv\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path,
             std::string vocab_path, std::size_t max_len) {
  namespace fs = std::filesystem;
  if (vocab_path.empty())
    vocab_path = (fs::path(ckpt).parent_path() / "vocab.txt").string();
  mrco::EncoderParams model =
      mrco::encoder_from_checkpoint(mrco::load_checkpoint(ckpt));
  mrco::Vocabulary vocab = mrco::Vocabulary::load(vocab_path);
  mrco::Dataset data = mrco::load_dataset(data_path);
  mrco::EvalScores s = mrco::evaluate_dataset(model, vocab, max_len, data);
  std::cout << "accuracy " << fmt4(s.accuracy) << "\nmcc " << fmt4(s.mcc)
            << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, bool quiet) {
  std::vector<mrco::CheckResult> results = mrco::gradient_suite(seed, trials);
  results.push_back(mrco::meta_gradient_check(seed));
  std::vector<mrco::CheckResult> ids = mrco::identity_checks(seed);
  results.insert(results.end(), ids.begin(), ids.end());

  const bool ok = mrco::all_passed(results);
  if (!quiet || !ok) std::cout << mrco::format_results(results);
  std::size_t n_pass = 0;
  for (const mrco::CheckResult& r : results) n_pass += r.passed ? 1 : 0;
  std::cout << n_pass << "/" << results.size() << " checks passed\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-reweighted contrastive text classification toolkit",
               "mrco"};
  app.require_subcommand(1);

  CommonOpts aug_o;
  std::string aug_out_file;
  CLI::App* c_augment = app.add_subcommand(
      "augment", "build the augmented training set and save it as TSV");
  add_config_opts(c_augment, aug_o);
  c_augment->add_option("--out", aug_out_file,
                        "output file (default <out-dir>/augmented.tsv)");

  CommonOpts train_o;
  CLI::App* c_train =
      app.add_subcommand("train", "run the configured method over its seeds");
  add_config_opts(c_train, train_o);
  c_train->add_option("--seeds", train_o.seeds,
                      "comma-separated seed list, overrides the config");

  CommonOpts sweep_o;
  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "grid over the configured hyperparameter axes");
  add_config_opts(c_sweep, sweep_o);
  c_sweep->add_option("--seeds", sweep_o.seeds,
                      "comma-separated seed list, overrides the config");

  std::string eval_ckpt, eval_data, eval_vocab;
  std::size_t eval_max_len = 32;
  CLI::App* c_eval =
      app.add_subcommand("eval", "score a saved checkpoint on a dataset");
  c_eval->add_option("--checkpoint", eval_ckpt, "encoder checkpoint")
      ->required();
  c_eval->add_option("--data", eval_data, "TSV dataset to score")->required();
  c_eval->add_option("--vocab", eval_vocab,
                     "vocabulary file (default vocab.txt next to the "
                     "checkpoint)");
  c_eval->add_option("--max-len", eval_max_len, "token truncation length");

  std::uint64_t gc_seed = 1;
  std::size_t gc_trials = 100;
  bool gc_quiet = false;
  CLI::App* c_gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference and identity verification suite");
  c_gradcheck->add_option("--seed", gc_seed, "base seed for the random trials");
  c_gradcheck->add_option("--trials", gc_trials, "trials per gradient check");
  c_gradcheck->add_flag("--quiet", gc_quiet,
                        "print the per-check table only on failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (c_augment->parsed()) return cmd_augment(aug_o, aug_out_file);
    if (c_train->parsed()) return cmd_train(train_o);
    if (c_sweep->parsed()) return cmd_sweep(sweep_o);
    if (c_eval->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_vocab, eval_max_len);
    if (c_gradcheck->parsed())
      return cmd_gradcheck(gc_seed, gc_trials, gc_quiet);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
