#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ernn/data.hpp"
#include "ernn/errors.hpp"
#include "ernn/train.hpp"
#include "support.hpp"

using namespace ernn;
using ernn::testing::gradcheck_case;

namespace {

const CellKind kAllKinds[] = {CellKind::vanilla_rnn, CellKind::ernn_toy, CellKind::ernn_exemplar,
                              CellKind::fastrnn};

ErnnParams small_model(CellKind kind, std::size_t K, std::uint64_t seed) {
  return ErnnParams::initialize(kind, default_activation(kind), {4, 2, 8, K, 2}, seed);
}

double max_abs_diff(const GradientSet& a, const GradientSet& b) {
  double m = 0.0;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i)
    for (std::size_t j = 0; j < ta[i].size(); ++j) m = std::max(m, std::abs(ta[i][j] - tb[i][j]));
  return m;
}

}  // namespace

TEST_CASE("softmax cross-entropy examples") {
  const auto eq = softmax_cross_entropy(DenseVector{0.3, 0.3}, 1);
  CHECK(eq.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(eq.dlogits[0] == doctest::Approx(0.5));
  CHECK(eq.dlogits[1] == doctest::Approx(-0.5));

  const auto big = softmax_cross_entropy(DenseVector{1000, 0}, 0);
  CHECK(std::isfinite(big.loss));
  CHECK(big.loss == doctest::Approx(0.0));
  CHECK(std::isfinite(softmax_cross_entropy(DenseVector{1000, 0}, 1).loss));

  Xoshiro256ss rng(41);
  for (int i = 0; i < 50; ++i) {
    const auto lg = softmax_cross_entropy(ernn::testing::random_vector(rng, 5, 10), 2);
    const double sum = std::accumulate(lg.dlogits.values().begin(), lg.dlogits.values().end(), 0.0);
    CHECK(std::abs(sum) <= 1e-15);
  }
  CHECK_THROWS_AS(softmax_cross_entropy(DenseVector{0, 0}, 2), std::out_of_range);
  CHECK_THROWS_AS(softmax_cross_entropy(DenseVector{0, 0}, -1), std::out_of_range);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  for (CellKind kind : kAllKinds) {
    const std::size_t K = kind == CellKind::ernn_toy || kind == CellKind::ernn_exemplar ? 2 : 1;
    const auto p = small_model(kind, K, 3);
    std::vector<double> x(16, 0.4);
    ForwardTape tape;
    forward_sequence(p, x, tape);
    const auto g = backward(p, tape, x, DenseVector(2));
    CHECK(g.norm() == 0.0);
  }
}

TEST_CASE("frozen tensors never receive gradient") {
  Xoshiro256ss rng(42);
  const auto c = gradcheck_case(rng, CellKind::fastrnn, Activation::relu);
  ForwardTape tape;
  forward_sequence(c.params, c.x, tape);
  const auto lg = softmax_cross_entropy(tape.logits, c.label);
  const auto g = backward(c.params, tape, c.x, lg.dlogits);
  CHECK(g.dU.frobenius_norm() == 0.0);
  CHECK(g.dV.frobenius_norm() > 0.0);

  // Even with a non-zero U gradient offered, Adam leaves FastRNN's U alone.
  auto p = c.params;
  auto fake = GradientSet::zeros_like(p);
  fake.dU.fill(1.0);
  auto state = AdamState::for_params(p);
  adam_step(p, fake, state, 0.1);
  CHECK(p.U.frobenius_norm() == 0.0);
}

TEST_CASE("gradient check: tanh cells") {
  Xoshiro256ss rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const CellKind kind = trial % 3 == 0   ? CellKind::vanilla_rnn
                          : trial % 3 == 1 ? CellKind::ernn_toy
                                           : CellKind::ernn_exemplar;
    const auto c = gradcheck_case(rng, kind, Activation::tanh);
    CAPTURE(trial);
    CHECK(finite_diff_gradcheck(c.params, c.x, c.label, 1e-6) <= 1e-5);
  }
}

TEST_CASE("gradient check: relu cells away from the kink") {
  Xoshiro256ss rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const CellKind kind = trial % 2 ? CellKind::fastrnn : CellKind::ernn_exemplar;
    const auto c = gradcheck_case(rng, kind, Activation::relu);
    CAPTURE(trial);
    CHECK(finite_diff_gradcheck(c.params, c.x, c.label, 1e-6) <= 1e-4);
  }
}

TEST_CASE("gradient check verdict is stable across step sizes") {
  Xoshiro256ss rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = gradcheck_case(rng, CellKind::ernn_exemplar, Activation::relu);
    const bool fine = finite_diff_gradcheck(c.params, c.x, c.label, 1e-6) <= 1e-4;
    const bool coarse = finite_diff_gradcheck(c.params, c.x, c.label, 1e-5) <= 1e-4;
    CHECK(fine == coarse);
  }
}

TEST_CASE("one-sided difference agrees and a 1% error is visible") {
  Xoshiro256ss rng(46);
  const auto c = gradcheck_case(rng, CellKind::ernn_toy, Activation::tanh);
  ForwardTape tape;
  forward_sequence(c.params, c.x, tape);
  const auto lg = softmax_cross_entropy(tape.logits, c.label);
  auto g = backward(c.params, tape, c.x, lg.dlogits);
  auto shifted = c.params;
  shifted.V(0, 0) += 1e-6;
  const double fd = (sample_loss(shifted, c.x, c.label) - sample_loss(c.params, c.x, c.label)) / 1e-6;
  const double a = g.dV(0, 0);
  CHECK(std::abs(a - fd) <= 1e-3 * std::abs(fd));
  CHECK(std::abs(1.01 * a - fd) > 1e-3 * std::abs(fd));
}

TEST_CASE("adam examples") {
  auto p = ErnnParams::zeros(CellKind::ernn_exemplar, Activation::relu, {1, 1, 1, 1, 2});
  auto state = AdamState::for_params(p);
  const auto before = p;
  adam_step(p, GradientSet::zeros_like(p), state, 0.01);
  CHECK(p == before);
  CHECK(state.step == 1);

  auto q = ErnnParams::zeros(CellKind::ernn_exemplar, Activation::relu, {1, 1, 1, 1, 2});
  auto qs = AdamState::for_params(q);
  auto g = GradientSet::zeros_like(q);
  g.dV(0, 0) = 1.0;
  adam_step(q, g, qs, 0.01);
  CHECK(q.V(0, 0) == doctest::Approx(-0.01 / (1.0 + 1e-8)).epsilon(1e-12));

  auto r = ErnnParams::zeros(CellKind::ernn_exemplar, Activation::relu, {1, 1, 1, 1, 2});
  auto rs = AdamState::for_params(r);
  adam_step(r, g, rs, 0.01);
  CHECK(r == q);

  g.dW(0, 0) = std::nan("");
  const auto frozen = r;
  CHECK_THROWS_AS(adam_step(r, g, rs, 0.01), DivergenceError);
  CHECK(r == frozen);
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  const auto ds = gen_random_walks(6, 8, 0.1, 1.0, 5);
  const auto p = small_model(CellKind::ernn_exemplar, 2, 7);
  std::vector<std::size_t> idx{3, 0, 11, 7, 5};
  auto expected = GradientSet::zeros_like(p);
  double loss = 0.0;
  for (std::size_t i : idx) {
    ForwardTape tape;
    forward_sequence(p, ds.sequence(i), tape);
    const auto lg = softmax_cross_entropy(tape.logits, ds.labels[i]);
    expected.add(backward(p, tape, ds.sequence(i), lg.dlogits));
    loss += lg.loss;
  }
  expected.scale(1.0 / idx.size());
  const auto bg = batch_gradient(p, ds, idx, 1);
  CHECK(max_abs_diff(bg.grad, expected) <= 1e-12);
  CHECK(bg.mean_loss == doctest::Approx(loss / idx.size()).epsilon(1e-14));

  const auto bg3 = batch_gradient(p, ds, idx, 3);
  CHECK(max_abs_diff(bg3.grad, bg.grad) == 0.0);
  CHECK(bg3.mean_loss == bg.mean_loss);
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.learning_rate = 0.04;
  c.lr_half_period = 3;
  CHECK(learning_rate_at(c, 0) == 0.04);
  CHECK(learning_rate_at(c, 2) == 0.04);
  CHECK(learning_rate_at(c, 3) == 0.02);
  CHECK(learning_rate_at(c, 7) == 0.01);
  c.lr_half_period = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("training loop") {
  const auto ds = gen_random_walks(40, 10, 0.1, 1.0, 3);
  const auto parts = split(ds, 0.5, 4);
  const auto init = ErnnParams::initialize(CellKind::ernn_toy, Activation::tanh, {6, 2, 10, 2, 2}, 5);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr_half_period = 2;
  cfg.threads = 1;

  SUBCASE("zero epochs leave the model unchanged") {
    cfg.epochs = 0;
    const auto r = train(init, parts.train, &parts.test, cfg);
    CHECK(r.params == init);
    CHECK(r.records.empty());
  }

  SUBCASE("records follow the schedule and runs reproduce") {
    cfg.epochs = 5;
    std::size_t calls = 0;
    const auto a = train(init, parts.train, &parts.test, cfg, [&](const EpochRecord&) { ++calls; });
    CHECK(calls == 5);
    REQUIRE(a.records.size() == 5);
    REQUIRE(a.checkpoints.size() == 5);
    for (const auto& rec : a.records) {
      CHECK(rec.lr == cfg.learning_rate * std::exp2(-static_cast<double>(rec.epoch / 2)));
      CHECK(rec.test_acc >= 0.0);
      CHECK(rec.test_acc <= 1.0);
    }
    CHECK(a.checkpoints.at(4) == a.params);
    CHECK_FALSE(a.diverged);

    cfg.threads = 3;
    const auto b = train(init, parts.train, &parts.test, cfg);
    for (std::size_t e = 0; e < 5; ++e) {
      CHECK(a.records[e].train_loss == b.records[e].train_loss);
      CHECK(a.records[e].test_acc == b.records[e].test_acc);
    }
    CHECK(a.params == b.params);

    cfg.seed = 99;
    const auto c = train(init, parts.train, &parts.test, cfg);
    CHECK_FALSE(c.params == a.params);
  }

  SUBCASE("checkpoints spill past the cap and read back") {
    cfg.epochs = 4;
    cfg.checkpoint_cap = 1;
    const auto r = train(init, parts.train, nullptr, cfg);
    CHECK(r.checkpoints.spilled() == 3);
    CHECK(r.checkpoints.at(3) == r.params);
    const auto all = r.checkpoints.all();
    CHECK(all.size() == 4);
    CHECK(std::isnan(r.records[0].test_acc));
  }

  SUBCASE("divergence stops training and reports the epoch") {
    cfg.epochs = 3;
    cfg.learning_rate = 1e300;
    auto wild = init;
    const auto r = train(wild, parts.train, nullptr, cfg);
    CHECK(r.diverged);
    CHECK_FALSE(r.message.empty());
    for (auto t : r.params.tensors())
      for (double v : t) CHECK(std::isfinite(v));
  }

  SUBCASE("shape mismatch is rejected") {
    const auto other = gen_random_walks(5, 7, 0.1, 1.0, 3);
    CHECK_THROWS_AS(train(init, other, nullptr, cfg), DimensionError);
  }
}

TEST_CASE("training reaches a separable toy problem") {
  const auto ds = gen_random_walks(100, 20, 0.1, 1.0, 8);
  const auto parts = split(ds, 0.5, 9);
  const auto init =
      ErnnParams::initialize(CellKind::ernn_exemplar, Activation::relu, {8, 2, 20, 1, 2}, 10);
  TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.epochs = 30;
  cfg.threads = 1;
  const auto r = train(init, parts.train, &parts.test, cfg);
  CHECK(r.records.back().train_loss < r.records.front().train_loss);
  CHECK(r.records.back().test_acc >= 0.9);
}

TEST_CASE("evaluate examples") {
  auto ds = gen_random_walks(5, 3, 0.1, 1.0, 2);
  // Constant logits: ties go to class 0, which is half of a balanced set.
  auto p = ErnnParams::zeros(CellKind::ernn_toy, Activation::tanh, {3, 2, 3, 1, 2});
  CHECK(evaluate(p, ds) == 0.5);

  // A bias that always names the right class when all labels agree.
  auto ones = ds;
  std::fill(ones.labels.begin(), ones.labels.end(), 1);
  p.classifier_bias = DenseVector{0.0, 1.0};
  CHECK(evaluate(p, ones) == 1.0);

  const auto trained = ErnnParams::initialize(CellKind::ernn_exemplar, Activation::relu,
                                              {4, 2, 3, 1, 2}, 3);
  std::vector<std::size_t> rev(ds.size());
  std::iota(rev.rbegin(), rev.rend(), std::size_t{0});
  CHECK(evaluate(trained, ds) == evaluate(trained, ds.subset(rev)));
  CHECK(mean_loss(trained, ds) == doctest::Approx(mean_loss(trained, ds.subset(rev))).epsilon(1e-14));
}

TEST_CASE("records CSV") {
  std::ostringstream out;
  const EpochRecord recs[] = {{0, 0.01, 0.5, 0.75, 12.0},
                              {1, 0.01, 0.25, std::nan(""), 13.5}};
  write_records_csv(out, recs);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,lr,train_loss,test_acc,wall_ms");
  std::getline(in, line);
  CHECK(line == "0,0.01,0.5,0.75,12");
  std::getline(in, line);
  CHECK(line == "1,0.01,0.25,,13.5");
}
