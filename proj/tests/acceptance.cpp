// Acceptance gate. Each criterion prints exactly one PASS/FAIL line; the
// process exits 0 only if every selected criterion passed. Run with a
// criterion name, or no argument for all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lasw_oracle.hpp"
#include "mrco/config.hpp"
#include "mrco/contrastive.hpp"
#include "mrco/harness.hpp"
#include "mrco/meta_loop.hpp"
#include "mrco/verify.hpp"

using namespace mrco;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / "mrco_acceptance" / tag;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// ---- criteria 1, 2, 5: the verification module ------------------------------

bool b_gradient_suite(std::string& detail) {
  auto results = gradient_suite(1, 100, 1e-5, 1e-4);
  double worst = 0;
  std::string worst_name;
  bool ok = !results.empty();
  for (const CheckResult& r : results) {
    ok = ok && r.passed;
    if (r.max_err >= worst) {
      worst = r.max_err;
      worst_name = r.name;
    }
  }
  if (!ok) std::fputs(format_results(results).c_str(), stdout);
  detail = fmt("%zu checks x 100 trials, worst rel err %.2e (%s), tol 1e-4",
               results.size(), worst, worst_name.c_str());
  return ok;
}

bool b_meta_gradient(std::string& detail) {
  CheckResult r = meta_gradient_check(1, 1e-3);
  bool ok = r.passed && r.seconds < 30.0;
  detail = fmt("%s, rel err %.2e, tol 1e-3, %.1fs of 30s", r.note.c_str(),
               r.max_err, r.seconds);
  return ok;
}

bool b_contrastive_identities(std::string& detail) {
  auto results = identity_checks(1);
  bool ok = all_passed(results) && results.size() == 3;
  if (!ok) std::fputs(format_results(results).c_str(), stdout);
  detail = fmt(
      "empty-queue err %.1e, two-candidate ln2 err %.1e, momentum err %.1e",
      results.size() > 0 ? results[0].max_err : -1.0,
      results.size() > 1 ? results[1].max_err : -1.0,
      results.size() > 2 ? results[2].max_err : -1.0);
  return ok;
}

// ---- criterion 3: collapse under joint descent, not under bilevel -----------

EncoderConfig micro_encoder_config() {
  EncoderConfig cfg;
  cfg.variant = EncoderVariant::kEmbedMeanMlp;
  cfg.vocab_size = 10;
  cfg.n_classes = 2;
  cfg.d_emb = 3;
  cfg.d_mlp = 3;
  return cfg;
}

ReweightConfig micro_reweight_config() {
  ReweightConfig cfg;
  cfg.n_classes = 2;
  cfg.d_h = 3;
  cfg.d_label = 2;
  cfg.d_hidden = 3;
  cfg.dropout_p = 0.0;
  return cfg;
}

MetaBatch micro_batch(Rng& rng) {
  std::uniform_int_distribution<std::size_t> tok(3, 9);
  auto tokens = [&] {
    std::vector<std::size_t> t(5);
    for (auto& x : t) x = tok(rng);
    return t;
  };
  MetaBatch mb;
  for (std::size_t i = 0; i < 3; ++i) {
    mb.task_raw.tokens.push_back(tokens());
    mb.task_raw.labels.push_back(i % 2);
    mb.task_raw.ids.push_back(i);
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      mb.task_aug.tokens.push_back(tokens());
      mb.task_aug.labels.push_back(i % 2);
      mb.task_aug.origin_ids.push_back(i);
    }
  for (std::size_t i = 0; i < 3; ++i) {
    mb.meta_raw.tokens.push_back(tokens());
    mb.meta_raw.labels.push_back(i % 2);
    mb.meta_raw.ids.push_back(100 + i);
  }
  return mb;
}

double mean_weight(const MetaBatch& batch, EncoderParams& model,
                   ReweightNet& net) {
  BatchForward fw =
      forward_batch(batch.task_raw, batch.task_aug, model, false);
  Rng r(0);
  auto wv =
      compute_weights(fw.aug_h, batch.task_aug.labels, net, false, r).values();
  double s = 0;
  for (double x : wv) s += x;
  return s / static_cast<double>(wv.size());
}

bool b_collapse(std::string& detail) {
  const double t0 = now_s();
  Rng rng(20);
  EncoderParams joint_model = EncoderParams::init(micro_encoder_config(), rng);
  ReweightNet joint_net = ReweightNet::init(micro_reweight_config(), rng);
  EncoderParams meta_model = joint_model.clone();
  ReweightNet meta_net = joint_net.clone();
  MetaBatch batch = micro_batch(rng);

  auto sgd = [](const std::vector<Tensor>& params, double lr) {
    for (Tensor p : params) {
      if (!p.has_grad()) continue;
      auto& v = p.leaf_values();
      const auto& g = p.grad();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
  };

  // minimizing the weighted task loss in all parameters at once lets the
  // reweighter zero the weights instead of learning
  int crossed_at = -1;
  for (int step = 0; step < 2000; ++step) {
    BatchForward fw =
        forward_batch(batch.task_raw, batch.task_aug, joint_model, false);
    Rng r(0);
    Tensor w = compute_weights(fw.aug_h, batch.task_aug.labels, joint_net,
                               false, r);
    Tensor l = task_loss_from(fw, w);
    zero_grads(joint_model.parameters());
    zero_grads(joint_net.parameters());
    ad::backward(l);
    sgd(joint_model.parameters(), 1e-3);
    sgd(joint_net.parameters(), 0.5);
    zero_grads(joint_model.parameters());
    zero_grads(joint_net.parameters());
    if (crossed_at < 0 && mean_weight(batch, joint_model, joint_net) < 0.05) {
      crossed_at = step + 1;
      break;
    }
  }
  double joint_end = mean_weight(batch, joint_model, joint_net);

  OptimizerState opt = OptimizerState::init(1e-3, 0.2, 1e-2);
  for (int step = 0; step < 2000; ++step)
    meta_step(batch, meta_model, meta_net, opt, rng, false);
  double meta_end = mean_weight(batch, meta_model, meta_net);

  double elapsed = now_s() - t0;
  bool ok = crossed_at > 0 && joint_end < 0.05 && meta_end >= 0.2 &&
            elapsed < 60.0;
  detail = fmt("joint mean(W) %.3f by step %d (<0.05), bilevel %.3f after "
               "2000 steps (>=0.2), %.1fs of 60s",
               joint_end, crossed_at, meta_end, elapsed);
  return ok;
}

// ---- criterion 4: queue policy equals the phase-by-phase reference ----------

bool b_lasw_oracle(std::string& detail) {
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> cap_dist(1, 8);
  std::uniform_int_distribution<std::size_t> batch_dist(0, 16);
  std::uniform_int_distribution<int> tau_dist(1, 5);
  std::uniform_real_distribution<double> w_dist(0.01, 0.99);

  const int n_trials = 1000;
  const int n_rounds = 10;
  int fifo_divergences = 0;
  double tag = 0;
  for (int trial = 0; trial < n_trials; ++trial) {
    std::size_t cap = cap_dist(rng);
    int tau = tau_dist(rng);

    std::vector<ClassQueue> impl(1);
    impl[0].class_id = 0;
    impl[0].capacity = cap;
    std::vector<ClassQueue> impl_fifo(1);
    impl_fifo[0].class_id = 0;
    impl_fifo[0].capacity = cap;
    lasw_oracle::Queue ref;
    ref.capacity = cap;

    for (int round = 0; round < n_rounds; ++round) {
      std::size_t b = batch_dist(rng);
      std::vector<std::vector<double>> reprs;
      std::vector<std::size_t> labels(b, 0);
      std::vector<double> weights;
      std::vector<lasw_oracle::Candidate> cands;
      for (std::size_t i = 0; i < b; ++i) {
        tag += 1.0;
        double w = w_dist(rng);
        reprs.push_back({tag});
        weights.push_back(w);
        cands.push_back({tag, w});
      }
      lasw_update(impl, reprs, labels, weights, tau);
      fifo_update(impl_fifo, reprs, labels, weights, tau);
      lasw_oracle::lasw_step(ref, cands, tau);

      lasw_oracle::Queue impl_as_ref;
      for (const QueueEntry& e : impl[0].entries)
        impl_as_ref.entries.push_back(
            {e.repr[0], e.weight_priority, e.lifetime});
      if (lasw_oracle::fingerprint(impl_as_ref) !=
          lasw_oracle::fingerprint(ref)) {
        detail = fmt("state mismatch at trial %d round %d (cap %zu tau %d)",
                     trial, round, cap, tau);
        return false;
      }
    }

    lasw_oracle::Queue fifo_as_ref;
    for (const QueueEntry& e : impl_fifo[0].entries)
      fifo_as_ref.entries.push_back({e.repr[0], e.weight_priority, e.lifetime});
    lasw_oracle::Queue impl_as_ref;
    for (const QueueEntry& e : impl[0].entries)
      impl_as_ref.entries.push_back({e.repr[0], e.weight_priority, e.lifetime});
    if (lasw_oracle::fingerprint(fifo_as_ref) !=
        lasw_oracle::fingerprint(impl_as_ref))
      ++fifo_divergences;
  }

  bool ok = fifo_divergences > 0;
  detail = fmt("%d trials x %d updates exactly equal, fifo diverged on %d "
               "trials",
               n_trials, n_rounds, fifo_divergences);
  return ok;
}

// ---- criteria 6, 7, 8: the synthetic benchmark ------------------------------

ExperimentConfig benchmark_config() {
  ExperimentConfig cfg = config_from_json_text("");
  cfg.method = Method::kMrco;
  cfg.metric = "accuracy";
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.aug_batch_size = 96;
  cfg.meta_batch_size = 64;
  cfg.main_lr = 1e-3;
  cfg.meta_lr = 0.1;
  cfg.reweight_lr = 0.01;
  cfg.meta_fraction = 0.2;
  cfg.lambda = 0.5;
  cfg.encoder.d_emb = 16;
  cfg.encoder.d_mlp = 16;
  cfg.max_len = 10;
  cfg.reweighter.d_label = 8;
  cfg.reweighter.d_hidden = 32;
  cfg.reweighter.dropout_p = 0.0;
  cfg.contrastive.n_neg = 16;
  cfg.contrastive.tau = 5;
  cfg.synthetic.n_train = 500;   // 500 raw
  cfg.synthetic.n_dev = 200;
  cfg.synthetic.per_example = 6;  // 3000 augmented
  cfg.synthetic.corrupt_rate = 0.3;  // 30% label flips
  cfg.synthetic.text_len = 8;
  cfg.synthetic.signals_in_text = 5;
  cfg.synthetic.signal_per_class = 3;
  return cfg;
}

bool b_weight_separation(std::string& detail) {
  const double t0 = now_s();
  ExperimentConfig cfg = benchmark_config();
  auto dir = scratch_dir("weight_separation");
  RunResult r = run_experiment(cfg, dir.string());

  int positive = 0;
  double mean_gap = 0;
  std::string per_seed;
  for (const auto& records : r.per_seed_weights) {
    double cb = 0, cf = 0;
    std::size_t nb = 0, nf = 0;
    for (const WeightRecord& w : records) {
      if (w.augmenter == kFlippedTag) {
        cf += w.weight;
        ++nf;
      } else {
        cb += w.weight;
        ++nb;
      }
    }
    if (nb == 0 || nf == 0 || nb + nf != 3000) {
      detail = fmt("expected 3000 weighted samples with both tags, got "
                   "%zu clean / %zu flipped",
                   nb, nf);
      return false;
    }
    double gap = cb / static_cast<double>(nb) - cf / static_cast<double>(nf);
    positive += gap > 0 ? 1 : 0;
    mean_gap += gap;
    per_seed += fmt("%+.3f ", gap);
  }
  mean_gap /= static_cast<double>(r.per_seed_weights.size());
  double elapsed = now_s() - t0;

  bool ok = r.per_seed_weights.size() == 5 && positive >= 4 &&
            mean_gap >= 0.05 && elapsed < 600.0;
  detail = fmt("clean-minus-flipped gaps %s-> %d/5 seeds positive, mean "
               "%.3f (>=0.05), %.0fs of 600s",
               per_seed.c_str(), positive, mean_gap, elapsed);
  return ok;
}

bool b_directional(std::string& detail) {
  ExperimentConfig cfg = benchmark_config();
  auto dir = scratch_dir("directional");

  RunResult full = run_experiment(cfg, (dir / "mrco").string());
  ExperimentConfig aug_cfg = cfg;
  aug_cfg.method = Method::kAug;
  RunResult aug = run_experiment(aug_cfg, (dir / "aug").string());
  ExperimentConfig nc_cfg = cfg;
  nc_cfg.method = Method::kMrcoNoContrastive;
  RunResult nc = run_experiment(nc_cfg, (dir / "nc").string());

  bool ok = full.mean >= aug.mean && full.mean >= nc.mean;
  detail = fmt("5-seed mean dev accuracy: mrco %.4f >= aug %.4f, mrco >= "
               "no-contrastive %.4f",
               full.mean, aug.mean, nc.mean);
  return ok;
}

bool b_determinism(std::string& detail) {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = benchmark_config();
  cfg.seeds = {1, 2};
  auto dir = scratch_dir("determinism");
  run_experiment(cfg, (dir / "a").string());
  run_experiment(cfg, (dir / "b").string());

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "a"))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());

  std::size_t compared = 0;
  for (const std::string& n : names) {
    if (!fs::exists(dir / "b" / n)) {
      detail = fmt("second run lacks %s", n.c_str());
      return false;
    }
    if (read_bytes(dir / "a" / n) != read_bytes(dir / "b" / n)) {
      detail = fmt("%s differs between identical runs", n.c_str());
      return false;
    }
    ++compared;
  }
  bool ok = compared >= 5;  // results, summary, histogram, weights, ckpts...
  detail = fmt("two identical runs, %zu artifacts byte-identical", compared);
  return ok;
}

// ---- criterion 9: the whole verification layer fits the time budget ---------

bool b_verification_runtime(std::string& detail) {
  const double t0 = now_s();
  std::string ignored;
  bool ok = b_gradient_suite(ignored);
  ok = b_meta_gradient(ignored) && ok;
  ok = b_collapse(ignored) && ok;
  ok = b_lasw_oracle(ignored) && ok;
  ok = b_contrastive_identities(ignored) && ok;
  double elapsed = now_s() - t0;
  ok = ok && elapsed < 300.0;
  detail = fmt("gradients, meta gradient, collapse, queue oracle and "
               "identities in %.1fs of 300s",
               elapsed);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    bool (*body)(std::string&);
  };
  const Criterion criteria[] = {
      {"gradient_suite", b_gradient_suite},
      {"meta_gradient", b_meta_gradient},
      {"collapse", b_collapse},
      {"lasw_oracle", b_lasw_oracle},
      {"contrastive_identities", b_contrastive_identities},
      {"weight_separation", b_weight_separation},
      {"directional", b_directional},
      {"determinism", b_determinism},
      {"verification_runtime", b_verification_runtime},
  };

  const std::string which = argc > 1 ? argv[1] : "all";
  bool matched = false, all_ok = true;
  for (const Criterion& c : criteria) {
    if (which != "all" && which != c.name) continue;
    matched = true;
    std::string detail;
    bool ok = false;
    try {
      ok = c.body(detail);
    } catch (const std::exception& e) {
      detail = fmt("exception: %s", e.what());
    }
    std::printf("%s %s (%s)\n", ok ? "PASS" : "FAIL", c.name, detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  if (!matched) {
    std::fprintf(stderr, "unknown criterion '%s'\n", which.c_str());
    return 2;
  }
  return all_ok ? 0 : 1;
}
