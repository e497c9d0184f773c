#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ernn/linalg.hpp"

namespace ernn {

enum class Activation { tanh, relu, identity };

enum class CellKind {
  vanilla_rnn,    ///< h_t = tanh(V h_{t−1} + W x_t + b)
  ernn_toy,       ///< h = tanh(h + V h_{t−1} + W x_t + b), solved by K residual steps
  ernn_exemplar,  ///< g = (I+U)(V h + W x + b), h ← (1−η)h + ησ(g), K times
  fastrnn,        ///< exemplar with U ≡ 0 and K = 1
};

std::string_view to_string(Activation a);
std::string_view to_string(CellKind k);
/// Accepts "tanh", "relu", "identity" (alias "linear"). Throws std::invalid_argument.
Activation parse_activation(std::string_view s);
/// Accepts "rnn", "ernn-toy", "ernn", "fastrnn". Throws std::invalid_argument.
CellKind parse_cell_kind(std::string_view s);
/// tanh for the vanilla and toy cells, relu for the exemplar and FastRNN.
Activation default_activation(CellKind k);

struct ModelShape {
  std::size_t hidden = 0;   ///< n
  std::size_t input = 0;    ///< d
  std::size_t steps = 0;    ///< T
  std::size_t inner = 1;    ///< K
  std::size_t classes = 2;  ///< C

  bool operator==(const ModelShape&) const = default;
};

/// Index of each parameter tensor, in checkpoint and optimizer order.
enum class Tensor : std::size_t { U, V, W, b, eta, cw, cb };
inline constexpr std::size_t kTensorCount = 7;
inline constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
    "U", "V", "W", "b", "eta", "cw", "cb"};

/// Parameters of every cell kind. Tensors a cell does not use (U for the
/// vanilla, toy and FastRNN cells, η for the vanilla cell) are kept at their
/// initial values and never trained.
struct ErnnParams {
  CellKind cell_kind = CellKind::ernn_exemplar;
  Activation activation = Activation::relu;
  DenseMatrix U;                   ///< n×n
  DenseMatrix V;                   ///< n×n
  DenseMatrix W;                   ///< n×d
  DenseVector b;                   ///< n
  DenseMatrix eta;                 ///< T×K, η_t⁽ᵏ⁾ at (t−1, k−1)
  DenseMatrix classifier_weights;  ///< C×n
  DenseVector classifier_bias;     ///< C

  /// All-zero parameters of the given shape.
  static ErnnParams zeros(CellKind kind, Activation act, const ModelShape& shape);

  /// Fan-in uniform init: U, V, W and the classifier weights drawn from
  /// U[−1/√n, 1/√n]; biases zero; every η set to `eta_init`. U stays zero for
  /// cells that do not use it.
  static ErnnParams initialize(CellKind kind, Activation act, const ModelShape& shape,
                               std::uint64_t seed, double eta_init = 1e-2);

  ModelShape shape() const;

  /// Throws DimensionError on inconsistent shapes, std::invalid_argument on a
  /// broken cell contract (FastRNN with K ≠ 1 or U ≠ 0, vanilla RNN with
  /// K ≠ 1) and DivergenceError on non-finite entries.
  void validate() const;

  std::array<std::span<double>, kTensorCount> tensors();
  std::array<std::span<const double>, kTensorCount> tensors() const;

  /// Number of scalars, optionally excluding η.
  std::size_t parameter_count(bool include_eta = true) const;

  bool operator==(const ErnnParams&) const = default;
};

/// Whether a tensor receives gradient updates for this cell kind.
bool is_trainable(CellKind kind, Tensor t);

/// Per-sample record of the unrolled space-time graph. Indices are zero-based:
/// timestep t ∈ [0, T), inner step k ∈ [0, K) maps to h_{t+1}^{(k+1)}.
class ForwardTape {
public:
  ForwardTape() = default;
  ForwardTape(std::size_t steps, std::size_t inner, std::size_t hidden) { reset(steps, inner, hidden); }

  void reset(std::size_t steps, std::size_t inner, std::size_t hidden);

  std::size_t steps() const noexcept { return steps_; }
  std::size_t inner() const noexcept { return inner_; }
  std::size_t hidden() const noexcept { return hidden_; }

  /// h_t⁽⁰⁾ = h_{t−1}
  std::span<double> start(std::size_t t) noexcept { return slot(start_, t * hidden_); }
  std::span<const double> start(std::size_t t) const noexcept { return slot(start_, t * hidden_); }
  /// Affine input of the activation: V h⁽ᵏ⁻¹⁾ + W x + b (exemplar), V h_{t−1} + W x + b (toy, vanilla).
  std::span<double> affine(std::size_t t, std::size_t k) noexcept { return slot(affine_, at(t, k)); }
  std::span<const double> affine(std::size_t t, std::size_t k) const noexcept { return slot(affine_, at(t, k)); }
  /// Pre-activation g⁽ᵏ⁾.
  std::span<double> pre(std::size_t t, std::size_t k) noexcept { return slot(pre_, at(t, k)); }
  std::span<const double> pre(std::size_t t, std::size_t k) const noexcept { return slot(pre_, at(t, k)); }
  /// σ(g⁽ᵏ⁾).
  std::span<double> act(std::size_t t, std::size_t k) noexcept { return slot(act_, at(t, k)); }
  std::span<const double> act(std::size_t t, std::size_t k) const noexcept { return slot(act_, at(t, k)); }
  /// h⁽ᵏ⁾ after the residual blend.
  std::span<double> state(std::size_t t, std::size_t k) noexcept { return slot(state_, at(t, k)); }
  std::span<const double> state(std::size_t t, std::size_t k) const noexcept { return slot(state_, at(t, k)); }
  /// h⁽ᵏ⁻¹⁾, the input of inner step k.
  std::span<const double> state_before(std::size_t t, std::size_t k) const noexcept {
    return k == 0 ? start(t) : state(t, k - 1);
  }
  /// h_t = h_t⁽ᴷ⁾
  std::span<const double> output(std::size_t t) const noexcept { return state(t, inner_ - 1); }
  std::span<const double> final_state() const noexcept { return output(steps_ - 1); }

  DenseVector logits;

  bool operator==(const ForwardTape&) const = default;

private:
  std::size_t at(std::size_t t, std::size_t k) const noexcept { return (t * inner_ + k) * hidden_; }
  std::span<double> slot(std::vector<double>& v, std::size_t off) noexcept { return {v.data() + off, hidden_}; }
  std::span<const double> slot(const std::vector<double>& v, std::size_t off) const noexcept {
    return {v.data() + off, hidden_};
  }

  std::size_t steps_ = 0;
  std::size_t inner_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> start_;
  std::vector<double> affine_;
  std::vector<double> pre_;
  std::vector<double> act_;
  std::vector<double> state_;
};

double activate(Activation a, double x) noexcept;
/// σ'(g) given the pre-activation g and the output σ(g).
double activation_slope(Activation a, double pre, double out) noexcept;

struct StepResult {
  DenseVector state;               ///< h_t = h_t⁽ᴷ⁾
  std::vector<DenseVector> inner;  ///< h_t⁽⁰⁾ … h_t⁽ᴷ⁾
  ForwardTape tape;                ///< single-timestep tape
};

/// tanh(V h_prev + W x + b), using the params' activation.
DenseVector rnn_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x);

/// K residual steps toward h = tanh(h + V h_prev + W x + b) with the step
/// sizes of timestep `t` (zero-based).
StepResult ernn_toy_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x,
                         std::size_t t, std::size_t k_steps);

/// K blended steps h⁽ᵏ⁾ = (1−η)h⁽ᵏ⁻¹⁾ + η σ((I+U)(V h⁽ᵏ⁻¹⁾ + W x + b)).
StepResult ernn_exemplar_step(const ErnnParams& p, const DenseVector& h_prev,
                              const DenseVector& x, std::size_t t, std::size_t k_steps);

/// FastRNN: h = (1−η)h_prev + η σ(V h_prev + W x + b). Runs the exemplar code
/// path; requires cell_kind == fastrnn.
DenseVector fastrnn_step(const ErnnParams& p, const DenseVector& h_prev, const DenseVector& x,
                         std::size_t t);

/// Unrolls the configured cell over a flattened T×d input with h_0 = 0 and
/// fills `tape` (resized as needed) including the logits
/// classifier_weights · h_T + classifier_bias. Does not validate params.
void forward_sequence(const ErnnParams& p, std::span<const double> x_flat, ForwardTape& tape);

struct ForwardResult {
  DenseVector final_state;
  DenseVector logits;
  ForwardTape tape;
};

/// Checked version taking one DenseVector per timestep.
ForwardResult forward_sequence(const ErnnParams& p, const std::vector<DenseVector>& x_seq);

}  // namespace ernn
