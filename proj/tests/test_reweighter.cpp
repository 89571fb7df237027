#include <doctest.h>

#include <algorithm>
#include <vector>

#include "mrco/reweighter.hpp"

using namespace mrco;

namespace {

ReweightConfig tiny_config() {
  ReweightConfig cfg;
  cfg.n_classes = 3;
  cfg.d_h = 5;
  cfg.d_label = 4;
  cfg.d_hidden = 6;
  cfg.dropout_p = 0.0;
  return cfg;
}

Tensor random_hidden(Rng& rng, std::size_t b, std::size_t d) {
  std::uniform_real_distribution<double> dist(-1.5, 1.5);
  std::vector<double> v(b * d);
  for (double& x : v) x = dist(rng);
  return Tensor::from_values({b, d}, std::move(v));
}

}  // namespace

TEST_CASE("zeroed net outputs one half for every sample") {
  Rng rng(1);
  ReweightNet net = ReweightNet::init(tiny_config(), rng);
  for (Tensor t : net.parameters())
    std::fill(t.leaf_values().begin(), t.leaf_values().end(), 0.0);
  Tensor h = random_hidden(rng, 4, 5);
  Tensor w = compute_weights(h, {0, 1, 2, 0}, net, false, rng);
  REQUIRE(w.shape() == ad::Shape{4});
  for (double x : w.values()) CHECK(x == doctest::Approx(0.5));
}

TEST_CASE("weights stay strictly inside (0,1) under extreme inputs") {
  Rng rng(2);
  ReweightConfig cfg = tiny_config();
  ReweightNet net = ReweightNet::init(cfg, rng);
  // blow up the output layer to force saturation in both directions
  for (double& v : net.w2.leaf_values()) v = 400.0;
  Tensor big = Tensor::from_values({2, 5}, {9e3, 9e3, 9e3, 9e3, 9e3,
                                            -9e3, -9e3, -9e3, -9e3, -9e3});
  Tensor w = compute_weights(big, {0, 1}, net, false, rng);
  for (double x : w.values()) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("identical inputs get identical weights in eval mode") {
  Rng rng(3);
  ReweightNet net = ReweightNet::init(tiny_config(), rng);
  std::vector<double> row{0.3, -0.2, 0.8, 0.1, -0.5};
  std::vector<double> two = row;
  two.insert(two.end(), row.begin(), row.end());
  Tensor h = Tensor::from_values({2, 5}, two);
  Tensor w1 = compute_weights(h, {1, 1}, net, false, rng);
  CHECK(w1.values()[0] == w1.values()[1]);
  Tensor w2 = compute_weights(h, {1, 1}, net, false, rng);
  CHECK(w1.values() == w2.values());  // pure function of inputs
}

TEST_CASE("changing one label moves only that row's weight") {
  Rng rng(4);
  ReweightNet net = ReweightNet::init(tiny_config(), rng);
  Tensor h = random_hidden(rng, 3, 5);
  Tensor wa = compute_weights(h, {0, 1, 2}, net, false, rng);
  Tensor wb = compute_weights(h, {0, 2, 2}, net, false, rng);
  CHECK(wa.values()[0] == wb.values()[0]);
  CHECK(wa.values()[1] != wb.values()[1]);
  CHECK(wa.values()[2] == wb.values()[2]);
}

TEST_CASE("label out of range is rejected") {
  Rng rng(5);
  ReweightNet net = ReweightNet::init(tiny_config(), rng);
  Tensor h = random_hidden(rng, 2, 5);
  CHECK_THROWS_AS(compute_weights(h, {0, 3}, net, false, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(compute_weights(h, {0}, net, false, rng),
                  std::invalid_argument);
}

TEST_CASE("mean weight gradient matches finite differences") {
  Rng rng(6);
  ReweightConfig cfg = tiny_config();
  ReweightNet net = ReweightNet::init(cfg, rng);
  Tensor h = random_hidden(rng, 4, 5);
  std::vector<std::size_t> labels{0, 1, 2, 1};

  auto rebuild = [&](const std::vector<Tensor>& xs) {
    ReweightNet n = net;
    n.label_embedding = xs[0];
    n.w1 = xs[1];
    n.b1 = xs[2];
    n.w2 = xs[3];
    n.b2 = xs[4];
    Rng r(0);
    return ad::mean_all(compute_weights(xs[5], labels, n, false, r));
  };
  std::vector<Tensor> points = net.parameters();
  points.push_back(h);  // gradient w.r.t. the hidden batch as well
  auto r = ad::grad_check(rebuild, points, 1e-5, 1e-4);
  CHECK_MESSAGE(r.passed, "max_rel_err=" << r.max_rel_err);
}

TEST_CASE("dropout only acts in train mode") {
  Rng rng(7);
  ReweightConfig cfg = tiny_config();
  cfg.dropout_p = 0.5;
  ReweightNet net = ReweightNet::init(cfg, rng);
  Tensor h = random_hidden(rng, 6, 5);
  std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};
  Tensor we1 = compute_weights(h, labels, net, false, rng);
  Tensor we2 = compute_weights(h, labels, net, false, rng);
  CHECK(we1.values() == we2.values());

  // distinct rng draws make the train-mode output differ from eval
  Rng ra(100), rb(101);
  Tensor wt1 = compute_weights(h, labels, net, true, ra);
  Tensor wt2 = compute_weights(h, labels, net, true, rb);
  CHECK(wt1.values() != wt2.values());
}

TEST_CASE("clone is independent") {
  Rng rng(8);
  ReweightNet net = ReweightNet::init(tiny_config(), rng);
  ReweightNet copy = net.clone();
  CHECK(copy.w1.values() == net.w1.values());
  copy.w1.leaf_values()[0] += 2.0;
  CHECK(copy.w1.values()[0] != net.w1.values()[0]);
}
