#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ernn/diagnostics.hpp"
#include "ernn/errors.hpp"
#include "ernn/fixed_point.hpp"
#include "support.hpp"

using namespace ernn;
using ernn::testing::random_matrix;
using ernn::testing::random_vector;

namespace {

std::vector<int> balanced_labels(std::size_t n, std::size_t classes) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  return labels;
}

}  // namespace

TEST_CASE("model distance trace") {
  const auto p = ErnnParams::initialize(CellKind::ernn_exemplar, Activation::relu, {3, 2, 4, 2, 2}, 1);
  const std::vector<ErnnParams> same(4, p);
  for (double d : model_distance_trace(same)) CHECK(d == 0.0);

  auto q = p;
  q.eta(2, 1) += 3.0;
  const std::vector<ErnnParams> two{p, q};
  const auto trace = model_distance_trace(two);
  CHECK(trace == std::vector<double>{3.0, 0.0});

  auto bigger = ErnnParams::initialize(CellKind::ernn_exemplar, Activation::relu, {4, 2, 4, 2, 2}, 1);
  const std::vector<ErnnParams> drift{p, bigger};
  CHECK_THROWS_AS(model_distance_trace(drift), DimensionError);
  CHECK_THROWS_AS(model_distance_trace(std::span<const ErnnParams>(same).first(1)),
                  std::invalid_argument);
}

TEST_CASE("property: distance trace ends at zero and is nonnegative") {
  Xoshiro256ss rng(51);
  std::vector<ErnnParams> cps;
  for (int e = 0; e < 6; ++e) {
    cps.push_back(
        ErnnParams::initialize(CellKind::ernn_toy, Activation::tanh, {3, 2, 5, 2, 2}, rng.next()));
  }
  const auto trace = model_distance_trace(cps);
  CHECK(trace.back() == 0.0);
  for (double d : trace) CHECK(d >= 0.0);
}

TEST_CASE("discriminability ratio examples") {
  // Two point masses: no intra-class spread.
  DenseMatrix states(6, 2);
  const auto labels = balanced_labels(6, 2);
  for (std::size_t i = 0; i < 6; ++i) states(i, 0) = labels[i] == 0 ? -1.0 : 2.0;
  CHECK(discriminability_ratio(states, labels, 2) == 0.0);

  // Hand example: class 0 at (0,0) and (2,0), class 1 at (10,1) and (10,-1).
  const DenseMatrix s{{0, 0}, {2, 0}, {10, 1}, {10, -1}};
  const std::vector<int> l{0, 0, 1, 1};
  CHECK(discriminability_ratio(s, l, 2) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));

  // Empty classes are ignored; one populated class is an error.
  CHECK(discriminability_ratio(s, l, 5) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  const std::vector<int> single{1, 1, 1, 1};
  CHECK_THROWS_AS(discriminability_ratio(s, single, 2), std::invalid_argument);
}

TEST_CASE("shuffled labels match the label-agnostic baseline") {
  // States carry no label information, so any labelling gives about the same ratio.
  Xoshiro256ss rng(52);
  const std::size_t N = 1000;
  const std::size_t n = 200;
  DenseMatrix states(N, n);
  for (auto& v : states.span()) v = rng.normal();
  auto labels = balanced_labels(N, 2);
  const double base = discriminability_ratio(states, labels, 2);
  rng.shuffle(std::span<int>(labels));
  const double shuffled = discriminability_ratio(states, labels, 2);
  CHECK(std::abs(shuffled - base) <= 0.1 * base);
}

TEST_CASE("property: ratio is invariant to scaling the states") {
  Xoshiro256ss rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t N = 20 + rng.below(50);
    const std::size_t C = 2 + rng.below(3);
    const DenseMatrix states = random_matrix(rng, N, 1 + rng.below(6));
    const auto labels = balanced_labels(N, C);
    const double a = discriminability_ratio(states, labels, C);
    const double b = discriminability_ratio(scale(3.0, states), labels, C);
    CHECK(std::abs(a - b) <= 1e-10 * a);
  }
}

TEST_CASE("discriminability trace on a model") {
  const auto ds = gen_random_walks(10, 5, 0.1, 1.0, 2);
  const auto p = ErnnParams::initialize(CellKind::ernn_toy, Activation::tanh, {4, 2, 5, 1, 2}, 3);
  const auto trace = discriminability_trace(p, ds);
  REQUIRE(trace.size() == 5);
  const auto h3 = hidden_states_at(p, ds, 2);
  CHECK(trace[2] == discriminability_ratio(h3, ds.labels, 2));
  const auto fwd = forward_sequence(p, std::vector<DenseVector>{
                                           DenseVector(ds.sequence(7).subspan(0, 2)),
                                           DenseVector(ds.sequence(7).subspan(2, 2)),
                                           DenseVector(ds.sequence(7).subspan(4, 2)),
                                           DenseVector(ds.sequence(7).subspan(6, 2)),
                                           DenseVector(ds.sequence(7).subspan(8, 2))});
  for (std::size_t j = 0; j < 4; ++j) CHECK(hidden_states_at(p, ds, 4)(7, j) == fwd.final_state[j]);
}

TEST_CASE("line fit and eta report") {
  const double xs[] = {1, 2, 3, 4};
  const double flat[] = {0.3, 0.3, 0.3, 0.3};
  const auto f0 = fit_line(xs, flat);
  CHECK(std::abs(f0.slope) <= 1e-15);
  CHECK(f0.intercept == doctest::Approx(0.3).epsilon(1e-14));

  auto p = ErnnParams::zeros(CellKind::ernn_toy, Activation::tanh, {2, 1, 30, 2, 2});
  for (std::size_t t = 0; t < 30; ++t) {
    p.eta(t, 0) = -0.0125 * static_cast<double>(t + 1) + 0.7;
    p.eta(t, 1) = 0.02;
  }
  const auto rep = eta_report(p);
  CHECK(rep.entries.size() == 60);
  CHECK(rep.entries[3].t == 2);
  CHECK(rep.entries[3].k == 2);
  CHECK(rep.entries[3].eta == 0.02);
  REQUIRE(rep.fits.size() == 2);
  CHECK(std::abs(rep.fits[0].slope + 0.0125) <= 1e-10);
  CHECK(std::abs(rep.fits[0].intercept - 0.7) <= 1e-10);
  CHECK(std::abs(rep.fits[1].slope) <= 1e-10);
  CHECK(std::abs(rep.fits[1].intercept - 0.02) <= 1e-10);
}

TEST_CASE("property: least-squares residuals are orthogonal to (1, t)") {
  Xoshiro256ss rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + rng.below(100);
    auto p = ErnnParams::zeros(CellKind::ernn_exemplar, Activation::relu, {2, 1, T, 3, 2});
    for (auto& v : p.eta.span()) v = rng.uniform(-1, 1);
    const auto rep = eta_report(p);
    for (std::size_t k = 0; k < 3; ++k) {
      double r1 = 0.0, rt = 0.0;
      for (std::size_t t = 1; t <= T; ++t) {
        const double r = p.eta(t - 1, k) - (rep.fits[k].slope * t + rep.fits[k].intercept);
        r1 += r;
        rt += r * static_cast<double>(t);
      }
      CHECK(std::abs(r1) <= 1e-8);
      CHECK(std::abs(rt) <= 1e-8);
    }
  }
}

TEST_CASE("contraction examples") {
  const auto ds = gen_random_walks(3, 4, 0.1, 1.0, 5);
  auto p = ErnnParams::initialize(CellKind::ernn_exemplar, Activation::relu, {3, 2, 4, 2, 2}, 6);
  p.eta.fill(0.0);
  for (const auto& s : contraction_report(p, ds, 6)) {
    CHECK(s.min == 1.0);
    CHECK(s.max == 1.0);
    CHECK(s.frac_below_one == 0.0);
  }

  // Linear σ with U = V = 0: J = −I, so the norm is |1 − η|.
  auto lin = ErnnParams::zeros(CellKind::ernn_exemplar, Activation::identity, {3, 2, 4, 1, 2});
  lin.W.fill(0.5);
  for (std::size_t t = 0; t < 4; ++t) lin.eta(t, 0) = 0.25 * static_cast<double>(t + 1);
  const auto stats = contraction_report(lin, ds, 6);
  REQUIRE(stats.size() == 4);
  for (const auto& s : stats) {
    const double expected = std::abs(1.0 - 0.25 * static_cast<double>(s.t));
    CHECK(s.mean == doctest::Approx(expected).epsilon(1e-10));
    CHECK(s.frac_below_one == (expected < 1.0 ? 1.0 : 0.0));
  }
  CHECK(contraction_norm(scale(-1.0, DenseMatrix::identity(2)), 1.5) ==
        doctest::Approx(0.5).epsilon(1e-12));

  auto rnn = ErnnParams::zeros(CellKind::vanilla_rnn, Activation::tanh, {3, 2, 4, 1, 2});
  ForwardTape tape;
  forward_sequence(rnn, ds.sequence(0), tape);
  CHECK_THROWS_AS(inner_jacobian(rnn, tape, 0, 0), std::invalid_argument);
}

TEST_CASE("inner Jacobian matches finite differences of the inner map") {
  Xoshiro256ss rng(55);
  for (CellKind kind : {CellKind::ernn_toy, CellKind::ernn_exemplar}) {
    auto p = ErnnParams::initialize(kind, Activation::tanh, {4, 2, 3, 2, 2}, rng.next());
    for (auto& v : p.eta.span()) v = rng.uniform(0.2, 0.8);
    std::vector<double> x(6);
    for (auto& v : x) v = rng.uniform(-1, 1);
    ForwardTape tape;
    forward_sequence(p, x, tape);
    const std::size_t t = 1, k = 1;
    const DenseVector xt{x[2], x[3]};
    const DenseVector h_prev(tape.start(t));
    // φ(h) − h with the timestep's inputs held fixed.
    ResidualSystem sys{4, [&](const DenseVector& h) {
                         DenseVector out(4);
                         if (kind == CellKind::ernn_toy) {
                           const DenseVector c =
                               add(add(matvec(p.V, h_prev), matvec(p.W, xt)), p.b);
                           for (std::size_t i = 0; i < 4; ++i) out[i] = std::tanh(h[i] + c[i]) - h[i];
                         } else {
                           const DenseVector q = add(add(matvec(p.V, h), matvec(p.W, xt)), p.b);
                           const DenseVector g = add(q, matvec(p.U, q));
                           for (std::size_t i = 0; i < 4; ++i) out[i] = std::tanh(g[i]) - h[i];
                         }
                         return out;
                       },
                       {}};
    const DenseMatrix fd = finite_difference_jacobian(sys, DenseVector(tape.state_before(t, k)));
    const DenseMatrix j = inner_jacobian(p, tape, t, k);
    CHECK(frobenius_distance(fd, j) <= 1e-8);
  }
}

TEST_CASE("inner residual report shrinks on a contracting toy model") {
  auto p = ErnnParams::initialize(CellKind::ernn_toy, Activation::tanh, {4, 2, 3, 3, 2}, 7);
  p.eta.fill(0.8);
  const auto ds = gen_random_walks(5, 3, 0.1, 1.0, 8);
  const auto rep = inner_residual_report(p, ds, 10);
  REQUIRE(rep.size() == 9);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(rep[3 * t + 1].mean < rep[3 * t].mean);
    CHECK(rep[3 * t + 2].mean < rep[3 * t + 1].mean);
  }
}

TEST_CASE("diagnostic CSV headers") {
  std::ostringstream h1, h2, eta, con;
  const double trace[] = {2.5, 0.0};
  write_h1_csv(h1, trace);
  CHECK(h1.str() == "epoch,distance\n0,2.5\n1,0\n");
  write_h2_csv(h2, trace);
  CHECK(h2.str() == "t,ratio\n1,2.5\n2,0\n");
  auto p = ErnnParams::zeros(CellKind::ernn_toy, Activation::tanh, {2, 1, 1, 2, 2});
  p.eta(0, 1) = 0.5;
  write_eta_csv(eta, eta_report(p));
  CHECK(eta.str() == "t,k,eta\n1,1,0\n1,2,0.5\n");
  const ContractionStat stats[] = {{1, 1, 0.5, 0.75, 1.0, 0.5}};
  write_contraction_csv(con, stats);
  CHECK(con.str() == "t,k,min,mean,max,frac_lt_1\n1,1,0.5,0.75,1,0.5\n");
}
