#include "ernn/cells.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ernn/errors.hpp"
#include "ernn/rng.hpp"

namespace ernn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::vanilla_rnn: return "rnn";
    case CellKind::ernn_toy: return "ernn-toy";
    case CellKind::ernn_exemplar: return "ernn";
    case CellKind::fastrnn: return "fastrnn";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

CellKind parse_cell_kind(std::string_view s) {
  if (s == "rnn") return CellKind::vanilla_rnn;
  if (s == "ernn-toy") return CellKind::ernn_toy;
  if (s == "ernn") return CellKind::ernn_exemplar;
  if (s == "fastrnn") return CellKind::fastrnn;
  throw std::invalid_argument("unknown cell kind '" + std::string(s) + "'");
}

Activation default_activation(CellKind k) {
  return (k == CellKind::vanilla_rnn || k == CellKind::ernn_toy) ? Activation::tanh
                                                                  : Activation::relu;
}

bool is_trainable(CellKind kind, Tensor t) {
  switch (t) {
    case Tensor::U: return kind == CellKind::ernn_exemplar;
    case Tensor::eta: return kind != CellKind::vanilla_rnn;
    default: return true;
  }
}

ErnnParams ErnnParams::zeros(CellKind kind, Activation act, const ModelShape& s) {
  ErnnParams p;
  p.cell_kind = kind;
  p.activation = act;
  p.U = DenseMatrix(s.hidden, s.hidden);
  p.V = DenseMatrix(s.hidden, s.hidden);
  p.W = DenseMatrix(s.hidden, s.input);
  p.b = DenseVector(s.hidden);
  p.eta = DenseMatrix(s.steps, s.inner);
  p.classifier_weights = DenseMatrix(s.classes, s.hidden);
  p.classifier_bias = DenseVector(s.classes);
  return p;
}

ErnnParams ErnnParams::initialize(CellKind kind, Activation act, const ModelShape& s,
                                  std::uint64_t seed, double eta_init) {
  ErnnParams p = zeros(kind, act, s);
  Xoshiro256ss rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(s.hidden, 1)));
  auto draw = [&](std::span<double> xs) {
    for (double& x : xs) x = rng.uniform(-bound, bound);
  };
  // Draw U even when unused so the other tensors do not depend on the cell kind.
  draw(p.U.span());
  if (!is_trainable(kind, Tensor::U)) p.U.fill(0.0);
  draw(p.V.span());
  draw(p.W.span());
  draw(p.classifier_weights.span());
  p.eta.fill(eta_init);
  p.validate();
  return p;
}

ModelShape ErnnParams::shape() const {
  return {V.rows(), W.cols(), eta.rows(), eta.cols(), classifier_weights.rows()};
}

void ErnnParams::validate() const {
  const std::size_t n = V.rows();
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw DimensionError("ErnnParams: " + what);
  };
  need(n > 0, "hidden dimension must be positive");
  need(U.rows() == n && U.cols() == n, "U must be n×n");
  need(V.cols() == n, "V must be n×n");
  need(W.rows() == n && W.cols() > 0, "W must be n×d");
  need(b.size() == n, "b must have length n");
  need(eta.rows() > 0 && eta.cols() > 0, "eta must be T×K with T, K ≥ 1");
  need(classifier_weights.cols() == n && classifier_weights.rows() > 0, "cw must be C×n");
  need(classifier_bias.size() == classifier_weights.rows(), "cb must have length C");

  if (cell_kind == CellKind::fastrnn) {
    if (eta.cols() != 1) throw std::invalid_argument("fastrnn requires K = 1");
    for (double u : U.span())
      if (u != 0.0) throw std::invalid_argument("fastrnn requires U = 0");
  }
  if (cell_kind == CellKind::vanilla_rnn && eta.cols() != 1) {
    throw std::invalid_argument("vanilla rnn has no inner steps; K must be 1");
  }
  for (const auto& t : tensors()) {
    for (double v : t)
      if (!std::isfinite(v)) throw DivergenceError("ErnnParams: non-finite entry");
  }
}

std::array<std::span<double>, kTensorCount> ErnnParams::tensors() {
  return {U.span(), V.span(), W.span(), b.span(), eta.span(), classifier_weights.span(),
          classifier_bias.span()};
}

std::array<std::span<const double>, kTensorCount> ErnnParams::tensors() const {
  return {U.span(), V.span(), W.span(), b.span(), eta.span(), classifier_weights.span(),
          classifier_bias.span()};
}

std::size_t ErnnParams::parameter_count(bool include_eta) const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (!include_eta && i == static_cast<std::size_t>(Tensor::eta)) continue;
    total += tensors()[i].size();
  }
  return total;
}

void ForwardTape::reset(std::size_t steps, std::size_t inner, std::size_t hidden) {
  steps_ = steps;
  inner_ = inner;
  hidden_ = hidden;
  start_.assign(steps * hidden, 0.0);
  affine_.assign(steps * inner * hidden, 0.0);
  pre_.assign(steps * inner * hidden, 0.0);
  act_.assign(steps * inner * hidden, 0.0);
  state_.assign(steps * inner * hidden, 0.0);
}

double activate(Activation a, double x) noexcept {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
  }
  return x;
}

double activation_slope(Activation a, double pre, double out) noexcept {
  switch (a) {
    case Activation::tanh: return 1.0 - out * out;
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

namespace {

void apply_activation(Activation a, std::span<const double> pre, std::span<double> out) {
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate(a, pre[i]);
}

// Advances one timestep, writing slot `t` of the tape. `eta_row` holds the K
// step sizes of this timestep.
void cell_step(const ErnnParams& p, std::span<const double> eta_row,
               std::span<const double> h_prev, std::span<const double> x, ForwardTape& tape,
               std::size_t t) {
  const std::size_t n = tape.hidden();
  const std::size_t K = tape.inner();
  std::copy(h_prev.begin(), h_prev.end(), tape.start(t).begin());

  switch (p.cell_kind) {
    case CellKind::vanilla_rnn: {
      auto c = tape.affine(t, 0);
      kernel::gemv(p.V, h_prev, c);
      kernel::gemv(p.W, x, c, true);
      kernel::axpy(1.0, p.b.span(), c);
      std::copy(c.begin(), c.end(), tape.pre(t, 0).begin());
      apply_activation(p.activation, tape.pre(t, 0), tape.act(t, 0));
      auto act = tape.act(t, 0);
      std::copy(act.begin(), act.end(), tape.state(t, 0).begin());
      break;
    }
    case CellKind::ernn_toy: {
      auto c = tape.affine(t, 0);
      kernel::gemv(p.V, h_prev, c);
      kernel::gemv(p.W, x, c, true);
      kernel::axpy(1.0, p.b.span(), c);
      for (std::size_t k = 0; k < K; ++k) {
        if (k > 0) std::copy(c.begin(), c.end(), tape.affine(t, k).begin());
        auto hk = tape.state_before(t, k);
        auto g = tape.pre(t, k);
        for (std::size_t i = 0; i < n; ++i) g[i] = hk[i] + c[i];
        apply_activation(p.activation, g, tape.act(t, k));
        const double eta = eta_row[k];
        auto s = tape.act(t, k);
        auto h = tape.state(t, k);
        for (std::size_t i = 0; i < n; ++i) h[i] = (1.0 - eta) * hk[i] + eta * s[i];
      }
      break;
    }
    case CellKind::ernn_exemplar:
    case CellKind::fastrnn: {
      for (std::size_t k = 0; k < K; ++k) {
        auto hk = tape.state_before(t, k);
        auto q = tape.affine(t, k);
        kernel::gemv(p.V, hk, q);
        kernel::gemv(p.W, x, q, true);
        kernel::axpy(1.0, p.b.span(), q);
        auto g = tape.pre(t, k);
        kernel::gemv(p.U, q, g);
        kernel::axpy(1.0, q, g);
        apply_activation(p.activation, g, tape.act(t, k));
        const double eta = eta_row[k];
        auto s = tape.act(t, k);
        auto h = tape.state(t, k);
        for (std::size_t i = 0; i < n; ++i) h[i] = (1.0 - eta) * hk[i] + eta * s[i];
      }
      break;
    }
  }
}

void require_step_args(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x,
                       std::size_t t) {
  p.validate();
  if (h_prev.size() != p.V.rows()) throw DimensionError("h_prev length != hidden dimension");
  if (x.size() != p.W.cols()) throw DimensionError("x length != input dimension");
  if (t >= p.eta.rows()) throw DimensionError("timestep index beyond eta rows");
}

StepResult single_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x,
                       std::size_t t) {
  const std::size_t K = p.eta.cols();
  StepResult r;
  r.tape.reset(1, K, p.V.rows());
  cell_step(p, p.eta.row(t), h_prev.span(), x.span(), r.tape, 0);
  r.inner.reserve(K + 1);
  r.inner.emplace_back(h_prev);
  for (std::size_t k = 0; k < K; ++k) r.inner.emplace_back(r.tape.state(0, k));
  r.state = r.inner.back();
  return r;
}

void require_kind(const ErnnParams& p, std::initializer_list<CellKind> kinds, const char* op) {
  if (std::find(kinds.begin(), kinds.end(), p.cell_kind) == kinds.end()) {
    throw std::invalid_argument(std::string(op) + ": wrong cell kind '" +
                                std::string(to_string(p.cell_kind)) + "'");
  }
}

void require_k(const ErnnParams& p, std::size_t k_steps) {
  if (k_steps != p.eta.cols()) {
    throw DimensionError("k_steps " + std::to_string(k_steps) + " != K " +
                         std::to_string(p.eta.cols()));
  }
}

}  // namespace

DenseVector rnn_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x) {
  require_kind(p, {CellKind::vanilla_rnn}, "rnn_step");
  require_step_args(p, h_prev, x, 0);
  return single_step(p, h_prev, x, 0).state;
}

StepResult ernn_toy_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x,
                         std::size_t t, std::size_t k_steps) {
  require_kind(p, {CellKind::ernn_toy}, "ernn_toy_step");
  require_step_args(p, h_prev, x, t);
  require_k(p, k_steps);
  return single_step(p, h_prev, x, t);
}

StepResult ernn_exemplar_step(const ErnnParams& p, const DenseVector& h_prev,
                              const DenseVector& x, std::size_t t, std::size_t k_steps) {
  require_kind(p, {CellKind::ernn_exemplar, CellKind::fastrnn}, "ernn_exemplar_step");
  require_step_args(p, h_prev, x, t);
  require_k(p, k_steps);
  return single_step(p, h_prev, x, t);
}

DenseVector fastrnn_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x,
                         std::size_t t) {
  require_kind(p, {CellKind::fastrnn}, "fastrnn_step");
  return ernn_exemplar_step(p, h_prev, x, t, 1).state;
}

void forward_sequence(const ErnnParams& p, std::span<const double> x_flat, ForwardTape& tape) {
  const std::size_t n = p.V.rows();
  const std::size_t d = p.W.cols();
  const std::size_t T = p.eta.rows();
  const std::size_t K = p.eta.cols();
  if (tape.steps() != T || tape.inner() != K || tape.hidden() != n) tape.reset(T, K, n);
  const std::vector<double> zeros(n, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::span<const double> h_prev = t == 0 ? std::span<const double>(zeros) : tape.output(t - 1);
    cell_step(p, p.eta.row(t), h_prev, x_flat.subspan(t * d, d), tape, t);
  }
  if (tape.logits.size() != p.classifier_bias.size()) tape.logits = DenseVector(p.classifier_bias.size());
  kernel::gemv(p.classifier_weights, tape.final_state(), tape.logits.span());
  kernel::axpy(1.0, p.classifier_bias.span(), tape.logits.span());
}

ForwardResult forward_sequence(const ErnnParams& p, const std::vector<DenseVector>& x_seq) {
  p.validate();
  const std::size_t d = p.W.cols();
  if (x_seq.size() != p.eta.rows()) {
    throw DimensionError("forward_sequence: sequence length " + std::to_string(x_seq.size()) +
                         " != eta rows " + std::to_string(p.eta.rows()));
  }
  std::vector<double> flat;
  flat.reserve(x_seq.size() * d);
  for (const auto& x : x_seq) {
    if (x.size() != d) throw DimensionError("forward_sequence: input feature length mismatch");
    flat.insert(flat.end(), x.values().begin(), x.values().end());
  }
  ForwardResult r;
  forward_sequence(p, flat, r.tape);
  r.final_state = DenseVector(r.tape.final_state());
  r.logits = r.tape.logits;
  return r;
}

}  // namespace ernn
