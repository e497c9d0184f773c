// Shared helpers for the unit tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "ernn/cells.hpp"
#include "ernn/linalg.hpp"
#include "ernn/rng.hpp"
#include "ernn/train.hpp"

namespace ernn::testing {

inline DenseMatrix random_matrix(Xoshiro256ss& rng, std::size_t r, std::size_t c,
                                 double scale = 1.0) {
  DenseMatrix m(r, c);
  for (auto& v : m.span()) v = rng.uniform(-scale, scale);
  return m;
}

inline DenseVector random_vector(Xoshiro256ss& rng, std::size_t n, double scale = 1.0) {
  DenseVector v(n);
  for (auto& e : v.span()) e = rng.uniform(-scale, scale);
  return v;
}

inline bool bitwise_equal(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0;
}

struct GradcheckCase {
  ErnnParams params;
  std::vector<double> x;
  int label = 0;
};

// Small random instance with n ≤ 6, T ≤ 6, K ≤ 3. For ReLU cells, draws are
// repeated until every pre-activation stays at least 1e-3 away from the kink.
inline GradcheckCase gradcheck_case(Xoshiro256ss& rng, CellKind kind, Activation act) {
  const bool single = kind == CellKind::vanilla_rnn || kind == CellKind::fastrnn;
  for (;;) {
    ModelShape s;
    s.hidden = 2 + rng.below(5);
    s.input = 1 + rng.below(3);
    s.steps = 1 + rng.below(6);
    s.inner = single ? 1 : 1 + rng.below(3);
    s.classes = 2 + rng.below(2);
    GradcheckCase c{ErnnParams::initialize(kind, act, s, rng.next()), {}, 0};
    for (auto& v : c.params.b.span()) v = rng.uniform(-0.5, 0.5);
    for (auto& v : c.params.eta.span()) v = rng.uniform(0.1, 0.9);
    for (auto& v : c.params.classifier_bias.span()) v = rng.uniform(-0.5, 0.5);
    c.x.resize(s.steps * s.input);
    for (auto& v : c.x) v = rng.uniform(-1.5, 1.5);
    c.label = static_cast<int>(rng.below(s.classes));
    if (act == Activation::relu) {
      ForwardTape tape;
      forward_sequence(c.params, c.x, tape);
      if (min_abs_preactivation(tape) < 1e-3) continue;
    }
    return c;
  }
}

}  // namespace ernn::testing
