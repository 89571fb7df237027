#include "mrco/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "mrco/contrastive.hpp"
#include "mrco/encoder.hpp"
#include "mrco/meta_loop.hpp"
#include "mrco/reweighter.hpp"
#include "mrco/tensor.hpp"

namespace mrco {

namespace {

using ad::Rng;
using ad::Shape;
using ad::Tensor;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Tensor rand_param(const Shape& shape, Rng& rng, double lo = -1.0,
                  double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::param(shape, std::move(v));
}

/// Magnitude in [lo, hi], random sign: keeps inputs away from a kink at 0.
Tensor rand_away_from_zero(const Shape& shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::param(shape, std::move(v));
}

/// Fixed random linear functional turning any output into a scalar.
Tensor probe(const Tensor& out, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.3, 1.0);
  std::bernoulli_distribution sign(0.5);
  if (out.size() == 1)
    return ad::scale(ad::sum_all(out), sign(rng) ? mag(rng) : -mag(rng));
  std::vector<double> v(out.size());
  for (double& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return ad::sum_all(ad::mul(out, Tensor::from_values(out.shape(), v)));
}

struct SuiteBuilder {
  std::uint64_t seed;
  std::size_t trials;
  double step;
  double tolerance;
  std::vector<CheckResult> results;
  std::size_t check_index = 0;

  // one named check = `trials` independent draws of inputs + grad_check
  void run(const std::string& name,
           const std::function<ad::GradCheckReport(Rng&)>& one_trial) {
    CheckResult r;
    r.name = name;
    r.tolerance = tolerance;
    r.passed = true;
    double t0 = now_seconds();
    for (std::size_t t = 0; t < trials; ++t) {
      // per-(check, trial) stream; order independent
      Rng rng(seed ^ (0x9e3779b97f4a7c15ull * (check_index * 100003 + t + 1)));
      ad::GradCheckReport rep = one_trial(rng);
      r.max_err = std::max(r.max_err, rep.max_rel_err);
      r.passed = r.passed && rep.passed;
    }
    r.seconds = now_seconds() - t0;
    ++check_index;
    results.push_back(std::move(r));
  }

  // common case: scalar-valued function of independently drawn inputs
  void check(const std::string& name,
             const std::function<std::vector<Tensor>(Rng&)>& draw,
             const std::function<Tensor(const std::vector<Tensor>&, Rng&)>& f) {
    run(name, [&](Rng& rng) {
      std::vector<Tensor> points = draw(rng);
      // the probe and any constants are drawn before grad_check re-evaluates
      Rng inner(rng());
      auto g = [&](const std::vector<Tensor>& xs) {
        Rng fresh(inner);  // identical stream for every FD evaluation
        return f(xs, fresh);
      };
      return ad::grad_check(g, points, step, tolerance);
    });
  }
};

EncoderConfig tiny_encoder(EncoderVariant variant) {
  EncoderConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = 9;
  cfg.n_classes = 2;
  cfg.d_emb = 3;
  cfg.d_mlp = 3;
  cfg.n_filters = 2;
  cfg.widths = {2, 3};
  return cfg;
}

ReweightConfig tiny_reweighter() {
  ReweightConfig cfg;
  cfg.n_classes = 2;
  cfg.d_h = 3;
  cfg.d_label = 2;
  cfg.d_hidden = 3;
  cfg.dropout_p = 0.0;
  return cfg;
}

std::vector<std::size_t> rand_tokens(Rng& rng, std::size_t len,
                                     std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> dist(0, vocab - 1);
  std::vector<std::size_t> t(len);
  for (auto& x : t) x = dist(rng);
  return t;
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed, std::size_t trials,
                                        double step, double tolerance) {
  SuiteBuilder b{seed, trials, step, tolerance, {}, 0};

  auto one = [](Shape s) {
    return [s](Rng& rng) { return std::vector<Tensor>{rand_param(s, rng)}; };
  };
  auto two = [](Shape s) {
    return [s](Rng& rng) {
      return std::vector<Tensor>{rand_param(s, rng), rand_param(s, rng)};
    };
  };

  // ---- elementwise arithmetic
  b.check("add", two({2, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::add(x[0], x[1]), r);
  });
  b.check("sub", two({2, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::sub(x[0], x[1]), r);
  });
  b.check("mul", two({2, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::mul(x[0], x[1]), r);
  });
  b.check(
      "divide",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({2, 3}, rng),
                                   rand_away_from_zero({2, 3}, rng, 0.3, 2.0)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::divide(x[0], x[1]), r);
      });
  b.check("neg", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::neg(x[0]), r);
  });
  b.check("scale", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::scale(x[0], -1.7), r);
  });
  b.check("add_scalar", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::add_scalar(x[0], 0.37), r);
  });
  b.check(
      "scalar_mul",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({1}, rng),
                                   rand_param({2, 3}, rng)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::scalar_mul(x[0], x[1]), r);
      });

  // ---- shape and structure
  b.check(
      "matmul",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({2, 3}, rng),
                                   rand_param({3, 4}, rng)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::matmul(x[0], x[1]), r);
      });
  b.check("transpose", one({2, 4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::transpose(x[0]), r);
  });
  b.check("reshape", one({2, 6}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::reshape(x[0], {3, 4}), r);
  });
  b.check(
      "concat_vec",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({2}, rng), rand_param({3}, rng),
                                   rand_param({1}, rng)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::concat_vec(x), r);
      });
  b.check("slice_vec", one({6}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::slice_vec(x[0], 1, 3), r);
  });
  b.check("pad_vec", one({3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::pad_vec(x[0], 2, 7), r);
  });
  b.check(
      "stack_rows",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({4}, rng), rand_param({4}, rng),
                                   rand_param({4}, rng)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::stack_rows(x), r);
      });
  b.check("row", one({3, 4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::row(x[0], 1), r);
  });
  b.check("row_scatter", one({4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::row_scatter(x[0], 2, 5), r);
  });
  b.check("gather_rows", one({5, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    // repeated ids exercise gradient accumulation into one row
    return probe(ad::gather_rows(x[0], {4, 0, 4, 2}), r);
  });
  b.check("scatter_rows_sum", one({4, 3}),
          [](const std::vector<Tensor>& x, Rng& r) {
            return probe(ad::scatter_rows_sum(x[0], {1, 0, 1, 2}, 3), r);
          });

  // ---- reductions and broadcasts
  b.check("sum_all", one({2, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::sum_all(x[0]), r);
  });
  b.check("mean_all", one({2, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::mean_all(x[0]), r);
  });
  b.check("broadcast_scalar", one({1}),
          [](const std::vector<Tensor>& x, Rng& r) {
            return probe(ad::broadcast_scalar(x[0], {3, 2}), r);
          });
  b.check("sum_axis0", one({3, 4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::sum_axis0(x[0]), r);
  });
  b.check("mean_axis0", one({3, 4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::mean_axis0(x[0]), r);
  });
  b.check("broadcast_rows", one({4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::broadcast_rows(x[0], 3), r);
  });
  b.check(
      "max_axis0",
      [](Rng& rng) {
        // unique per-column argmax with a wide margin keeps FD valid
        Tensor t = rand_param({3, 4}, rng);
        std::vector<double> v = t.leaf_values();
        std::uniform_int_distribution<std::size_t> pick(0, 2);
        for (std::size_t c = 0; c < 4; ++c) v[pick(rng) * 4 + c] += 3.0;
        return std::vector<Tensor>{Tensor::param({3, 4}, v)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::max_axis0(x[0]), r);
      });

  // ---- nonlinearities
  b.check("sigmoid", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::sigmoid(x[0]), r);
  });
  b.check("tanh", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::tanh_t(x[0]), r);
  });
  b.check(
      "relu",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_away_from_zero({6}, rng, 0.05, 1.0)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::relu(x[0]), r);
      });
  b.check("exp", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::exp_t(x[0]), r);
  });
  b.check(
      "log",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({5}, rng, 0.2, 2.0)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::log_t(x[0]), r);
      });
  b.check(
      "sqrt",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({5}, rng, 0.2, 2.0)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::sqrt_t(x[0]), r);
      });
  b.check(
      "clamp",
      [](Rng& rng) {
        // stay 0.05 away from both clamp edges
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        std::vector<double> v(6);
        for (double& x : v)
          do {
            x = dist(rng);
          } while (std::abs(std::abs(x) - 0.5) < 0.05);
        return std::vector<Tensor>{Tensor::param({6}, v)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::clamp(x[0], -0.5, 0.5), r);
      });

  // ---- convolution plumbing
  b.check("im2col", one({5, 3}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::im2col(x[0], 2), r);
  });
  b.check("col2im", one({4, 6}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::col2im(x[0], 5, 3, 2), r);
  });

  // ---- composed helpers
  b.check("dot", two({4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::dot(x[0], x[1]), r);
  });
  b.check("at", one({5}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::at(x[0], 3), r);
  });
  b.check("softmax", one({4}), [](const std::vector<Tensor>& x, Rng& r) {
    return probe(ad::softmax_vec(x[0]), r);
  });
  b.check("cross_entropy", one({4}), [](const std::vector<Tensor>& x, Rng& r) {
    (void)r;
    return ad::cross_entropy_vec(x[0], 2);
  });
  b.check(
      "l2_normalize",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_away_from_zero({4}, rng, 0.3, 1.5)};
      },
      [](const std::vector<Tensor>& x, Rng& r) {
        return probe(ad::l2_normalize(x[0]), r);
      });
  b.check("dropout", one({6}), [](const std::vector<Tensor>& x, Rng& r) {
    // r restarts from the same state on every FD evaluation, so the mask is
    // a fixed function of the trial, not of the perturbation
    return probe(ad::dropout(x[0], 0.3, r, true), r);
  });

  // ---- composed model pieces
  b.check(
      "encoder_mlp",
      [](Rng& rng) {
        EncoderParams m = EncoderParams::init(
            tiny_encoder(EncoderVariant::kEmbedMeanMlp), rng);
        return m.parameters();
      },
      [](const std::vector<Tensor>& xs, Rng& r) {
        EncoderParams base = EncoderParams::init(
            tiny_encoder(EncoderVariant::kEmbedMeanMlp), r);
        EncoderParams m = base.with_parameters(xs);
        std::vector<std::size_t> tokens = rand_tokens(r, 4, 9);
        Tensor h = encode(tokens, m, false);
        return ad::cross_entropy_vec(class_logits(h, m), 1);
      });
  b.check(
      "encoder_cnn",
      [](Rng& rng) {
        EncoderParams m =
            EncoderParams::init(tiny_encoder(EncoderVariant::kTextCnn), rng);
        return m.parameters();
      },
      [](const std::vector<Tensor>& xs, Rng& r) {
        EncoderParams base =
            EncoderParams::init(tiny_encoder(EncoderVariant::kTextCnn), r);
        EncoderParams m = base.with_parameters(xs);
        std::vector<std::size_t> tokens = rand_tokens(r, 5, 9);
        Tensor h = encode(tokens, m, false);
        return ad::cross_entropy_vec(class_logits(h, m), 0);
      });
  b.check(
      "reweight_forward",
      [](Rng& rng) {
        ReweightNet net = ReweightNet::init(tiny_reweighter(), rng);
        std::vector<Tensor> points = net.parameters();
        points.push_back(rand_param({4, 3}, rng));  // h_hat comes along
        return points;
      },
      [](const std::vector<Tensor>& xs, Rng& r) {
        ReweightNet base = ReweightNet::init(tiny_reweighter(), r);
        std::vector<Tensor> ps(xs.begin(), xs.end() - 1);
        ReweightNet net = base.with_parameters(ps);
        Tensor w = compute_weights(xs.back(), {0, 1, 1, 0}, net, false, r);
        return probe(w, r);
      });
  b.check(
      "task_loss",
      [](Rng& rng) {
        EncoderParams m = EncoderParams::init(
            tiny_encoder(EncoderVariant::kEmbedMeanMlp), rng);
        ReweightNet net = ReweightNet::init(tiny_reweighter(), rng);
        std::vector<Tensor> points = m.parameters();
        for (const Tensor& p : net.parameters()) points.push_back(p);
        return points;
      },
      [](const std::vector<Tensor>& xs, Rng& r) {
        EncoderParams base = EncoderParams::init(
            tiny_encoder(EncoderVariant::kEmbedMeanMlp), r);
        ReweightNet net_base = ReweightNet::init(tiny_reweighter(), r);
        std::size_t n_enc = base.parameters().size();
        EncoderParams m = base.with_parameters(
            {xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(n_enc)});
        ReweightNet net = net_base.with_parameters(
            {xs.begin() + static_cast<std::ptrdiff_t>(n_enc), xs.end()});

        RawBatch raw;
        AugBatch aug;
        for (std::size_t i = 0; i < 2; ++i) {
          raw.tokens.push_back(rand_tokens(r, 4, 9));
          raw.labels.push_back(i % 2);
          raw.ids.push_back(i);
          aug.tokens.push_back(rand_tokens(r, 4, 9));
          aug.labels.push_back(i % 2);
          aug.origin_ids.push_back(i);
        }
        BatchForward fw = forward_batch(raw, aug, m, false);
        Tensor w = compute_weights(fw.aug_h, aug.labels, net, false, r);
        return task_loss_from(fw, w);
      });
  b.check(
      "contrastive_loss",
      [](Rng& rng) {
        return std::vector<Tensor>{rand_param({3}, rng), rand_param({3}, rng)};
      },
      [](const std::vector<Tensor>& xs, Rng& r) {
        ContrastiveConfig cc;
        cc.n_neg = 4;
        cc.temperature = 0.7;
        Rng init_rng(7);
        ContrastiveState state = ContrastiveState::init(
            EncoderParams::init(tiny_encoder(EncoderVariant::kEmbedMeanMlp),
                                init_rng),
            cc, 2);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (auto& q : state.queues)
          for (int k = 0; k < 3; ++k)
            q.entries.push_back({{dist(r), dist(r), dist(r)}, 0.5, 3});
        std::vector<std::vector<Tensor>> positives(2);
        for (std::size_t i = 0; i < 2; ++i)
          for (int k = 0; k < 2; ++k)
            positives[i].push_back(Tensor::from_values(
                {3}, {dist(r), dist(r), dist(r)}));
        return contrastive_loss(xs, {0, 1}, positives, state);
      });
  b.check(
      "final_objective",
      [](Rng& rng) {
        EncoderParams m = EncoderParams::init(
            tiny_encoder(EncoderVariant::kEmbedMeanMlp), rng);
        return m.parameters();
      },
      [](const std::vector<Tensor>& xs, Rng& r) {
        EncoderParams base = EncoderParams::init(
            tiny_encoder(EncoderVariant::kEmbedMeanMlp), r);
        EncoderParams m = base.with_parameters(xs);

        RawBatch raw;
        AugBatch aug;
        for (std::size_t i = 0; i < 2; ++i) {
          raw.tokens.push_back(rand_tokens(r, 4, 9));
          raw.labels.push_back(i % 2);
          raw.ids.push_back(i);
          aug.tokens.push_back(rand_tokens(r, 4, 9));
          aug.labels.push_back(i % 2);
          aug.origin_ids.push_back(i);
        }
        BatchForward fw = forward_batch(raw, aug, m, false);
        std::uniform_real_distribution<double> wdist(0.1, 0.9);
        Tensor w = Tensor::from_values({2}, {wdist(r), wdist(r)});
        Tensor task = task_loss_from(fw, w);

        ContrastiveConfig cc;
        cc.n_neg = 4;
        Rng init_rng(3);
        ContrastiveState state = ContrastiveState::init(
            EncoderParams::init(tiny_encoder(EncoderVariant::kEmbedMeanMlp),
                                init_rng),
            cc, 2);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (auto& q : state.queues)
          for (int k = 0; k < 3; ++k)
            q.entries.push_back({{dist(r), dist(r), dist(r)}, 0.5, 3});
        std::vector<Tensor> queries;
        std::vector<std::vector<Tensor>> positives(aug.size());
        for (std::size_t i = 0; i < aug.size(); ++i) {
          queries.push_back(ad::row(fw.aug_h, i));
          positives[i].push_back(
              Tensor::from_values({3}, {dist(r), dist(r), dist(r)}));
        }
        Tensor contrast = contrastive_loss(queries, aug.labels, positives, state);
        return ad::add(task, ad::scale(contrast, 0.5));
      });

  return b.results;
}

CheckResult meta_gradient_check(std::uint64_t seed, double tolerance) {
  CheckResult r;
  r.name = "meta_gradient";
  r.tolerance = tolerance;
  double t0 = now_seconds();

  Rng rng(seed);
  EncoderParams model =
      EncoderParams::init(tiny_encoder(EncoderVariant::kEmbedMeanMlp), rng);
  ReweightNet net = ReweightNet::init(tiny_reweighter(), rng);

  std::size_t n_params = 0;
  for (const Tensor& p : model.parameters()) n_params += p.size();
  for (const Tensor& p : net.parameters()) n_params += p.size();

  MetaBatch batch;
  for (std::size_t i = 0; i < 3; ++i) {
    batch.task_raw.tokens.push_back(rand_tokens(rng, 4, 9));
    batch.task_raw.labels.push_back(i % 2);
    batch.task_raw.ids.push_back(i);
    batch.meta_raw.tokens.push_back(rand_tokens(rng, 4, 9));
    batch.meta_raw.labels.push_back((i + 1) % 2);
    batch.meta_raw.ids.push_back(100 + i);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    batch.task_aug.tokens.push_back(rand_tokens(rng, 4, 9));
    batch.task_aug.labels.push_back(i % 2);
    batch.task_aug.origin_ids.push_back(i % 3);
  }

  double alpha = 0.2;
  auto f = [&](const std::vector<Tensor>& xs) {
    ReweightNet n2 = net.with_parameters(xs);
    BatchForward fw = forward_batch(batch.task_raw, batch.task_aug, model, false);
    Rng rw_rng(0);
    Tensor w = compute_weights(fw.aug_h, batch.task_aug.labels, n2, false, rw_rng);
    EncoderParams star = virtual_update(model, task_loss_from(fw, w), alpha);
    return batch_cross_entropy(batch.meta_raw, star, false);
  };
  ad::GradCheckReport rep = ad::grad_check(f, net.parameters(), 1e-5, tolerance);
  zero_grads(model.parameters());

  r.passed = rep.passed && n_params <= 200;
  r.max_err = rep.max_rel_err;
  r.seconds = now_seconds() - t0;
  r.note = std::to_string(n_params) + " params";
  return r;
}

std::vector<CheckResult> identity_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  {
    // no usable negatives: the loss is the exact constant 0
    CheckResult r;
    r.name = "empty_queue_zero_loss";
    r.tolerance = 0.0;
    double t0 = now_seconds();
    ContrastiveConfig cc;
    cc.n_neg = 4;
    Rng init_rng(1);
    ContrastiveState state = ContrastiveState::init(
        EncoderParams::init(tiny_encoder(EncoderVariant::kEmbedMeanMlp),
                            init_rng),
        cc, 2);
    std::vector<Tensor> queries = {Tensor::from_values({3}, {0.3, -0.4, 0.9})};
    std::vector<std::vector<Tensor>> positives = {
        {Tensor::from_values({3}, {0.1, 0.2, 0.3})}};
    Tensor loss = contrastive_loss(queries, {0}, positives, state);
    r.max_err = std::abs(loss.value());
    r.passed = loss.value() == 0.0;

    // a query with no positives is skipped even when negatives exist
    state.queues[0].entries.push_back({{1.0, 0.0, 0.0}, 0.5, 3});
    Tensor loss2 =
        contrastive_loss(queries, {0}, {std::vector<Tensor>{}}, state);
    r.max_err = std::max(r.max_err, std::abs(loss2.value()));
    r.passed = r.passed && loss2.value() == 0.0;
    r.seconds = now_seconds() - t0;
    out.push_back(std::move(r));
  }

  {
    // one positive, one negative, identical similarity: -log(1/2)
    CheckResult r;
    r.name = "equal_similarity_ln2";
    r.tolerance = 1e-12;
    double t0 = now_seconds();
    ContrastiveConfig cc;
    cc.n_neg = 4;
    cc.temperature = 0.6;
    Rng init_rng(2);
    ContrastiveState state = ContrastiveState::init(
        EncoderParams::init(tiny_encoder(EncoderVariant::kEmbedMeanMlp),
                            init_rng),
        cc, 2);
    std::vector<double> shared = {0.0, 1.0, 0.0};
    state.queues[1].entries.push_back({shared, 0.5, 3});
    std::vector<Tensor> queries = {Tensor::from_values({3}, {0.8, -0.2, 0.4})};
    std::vector<std::vector<Tensor>> positives = {
        {Tensor::from_values({3}, shared)}};
    Tensor loss = contrastive_loss(queries, {1}, positives, state);
    r.max_err = std::abs(loss.value() - std::log(2.0));
    r.passed = r.max_err <= r.tolerance;
    r.seconds = now_seconds() - t0;
    out.push_back(std::move(r));
  }

  {
    // the update is defined by the identity key' = key + (1-gamma)(query-key);
    // the stored result must equal that expression bit for bit. gamma = 0 must
    // be a verbatim copy (the identity form would round on extreme values).
    CheckResult r;
    r.name = "momentum_exact";
    r.tolerance = 0.0;
    double t0 = now_seconds();
    r.passed = true;
    for (double gamma : {0.0, 0.5, 0.9, 1.0}) {
      EncoderConfig cfg = tiny_encoder(EncoderVariant::kEmbedMeanMlp);
      EncoderParams query = EncoderParams::init(cfg, rng);
      EncoderParams key = EncoderParams::init(cfg, rng);
      EncoderParams before = key.clone();
      momentum_update(key, query, gamma);

      std::vector<Tensor> kp = key.parameters();
      std::vector<Tensor> bp = before.parameters();
      std::vector<Tensor> qp = query.parameters();
      for (std::size_t i = 0; i < kp.size(); ++i) {
        const auto& kv = kp[i].values();
        const auto& bv = bp[i].values();
        const auto& qv = qp[i].values();
        for (std::size_t j = 0; j < kv.size(); ++j) {
          double expect = gamma == 0.0
                              ? qv[j]
                              : bv[j] + (1.0 - gamma) * (qv[j] - bv[j]);
          r.max_err = std::max(r.max_err, std::abs(kv[j] - expect));
          r.passed = r.passed && kv[j] == expect;
        }
      }
    }
    r.seconds = now_seconds() - t0;
    out.push_back(std::move(r));
  }

  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.passed) return false;
  return true;
}

std::string format_results(const std::vector<CheckResult>& results) {
  std::string out;
  for (const CheckResult& r : results) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s %-24s max_err=%-12.3e tol=%-8.0e %.2fs%s%s\n",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.max_err,
                  r.tolerance, r.seconds, r.note.empty() ? "" : "  ",
                  r.note.c_str());
    out += buf;
  }
  return out;
}

}  // namespace mrco
