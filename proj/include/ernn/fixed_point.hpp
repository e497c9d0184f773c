#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ernn/linalg.hpp"

namespace ernn {

/// f : ℝⁿ → ℝⁿ whose root we want. `jacobian` may be left empty, in which case
/// contraction checks fall back to central finite differences.
struct ResidualSystem {
  std::size_t dimension = 0;
  std::function<DenseVector(const DenseVector&)> residual;
  std::function<DenseMatrix(const DenseVector&)> jacobian;
};

enum class SolveStatus { converged, max_iterations, diverged };

struct SolveTrace {
  std::vector<DenseVector> iterates;     ///< z⁽⁰⁾ … z⁽ᵏ⁾
  std::vector<double> residual_norms;    ///< ‖f(z⁽ᵏ⁾)‖₂, one per iterate
  std::vector<double> contraction_norms; ///< ‖I + η⁽ᵏ⁾ f'(z⁽ᵏ⁾)‖₂, one per update (if recorded)
  bool converged = false;
  std::size_t iterations_used = 0;
  SolveStatus status = SolveStatus::max_iterations;
  std::string reason;
};

struct SolveResult {
  DenseVector solution;
  SolveTrace trace;
};

/// Residual-step iteration z⁽ᵏ⁺¹⁾ = z⁽ᵏ⁾ + η⁽ᵏ⁾ f(z⁽ᵏ⁾).
///
/// This is an inexact Newton step with s⁽ᵏ⁾ = η⁽ᵏ⁾ f(z⁽ᵏ⁾), whose linear-solve
/// error is r⁽ᵏ⁾ = (I + η⁽ᵏ⁾ f'(z⁽ᵏ⁾)) f(z⁽ᵏ⁾). When ‖I + η⁽ᵏ⁾ f'‖ < 1 near the
/// root the iterates converge linearly with that factor.
///
/// `etas` holds one step size per iteration (at least `max_iters` of them), or
/// a single value reused every iteration. Step sizes may be negative. Stops
/// once ‖f(z⁽ᵏ⁾)‖₂ ≤ tol or after `max_iters` updates. A non-finite residual
/// ends the solve with status `diverged`; it does not throw.
SolveResult inexact_newton_solve(const ResidualSystem& sys, const DenseVector& z0,
                                 std::span<const double> etas, std::size_t max_iters, double tol,
                                 bool record_contraction = false);

/// Central-difference Jacobian with step 1e-6·max(1, ‖z‖∞).
DenseMatrix finite_difference_jacobian(const ResidualSystem& sys, const DenseVector& z);

/// ‖I + η f'(z)‖₂. Callers compare the result against 1.
/// Throws DivergenceError if the Jacobian has non-finite entries.
double check_contraction(const ResidualSystem& sys, const DenseVector& z, double eta);

/// Root h of h = tanh(h + alpha), by bisection on g(h) = h − tanh(h + alpha)
/// over [min(0, tanh α) − 1, max(0, tanh α) + 1]. g is increasing, so the
/// root is unique, and since |g'| ≤ 1 the returned h has |g(h)| ≤ tol.
double phi_scalar(double alpha, double tol = 1e-12);

/// dΦ/dα = s / (1 − s) with s = sech²(Φ(α) + α). Unbounded as α → 0, so
/// alpha == 0 throws std::domain_error.
double phi_derivative(double alpha, double tol = 1e-12);

/// Solves (I − U) z = V h_prev + W x + b directly. Throws SingularMatrixError
/// when elimination meets a pivot below 1e-12.
DenseVector linear_fixed_point_exact(const DenseMatrix& u, const DenseMatrix& v,
                                     const DenseMatrix& w, const DenseVector& b,
                                     const DenseVector& h_prev, const DenseVector& x);

/// (I + U)(V h_prev + W x + b): first two terms of the Neumann series of (I − U)⁻¹.
DenseVector linear_fixed_point_approx(const DenseMatrix& u, const DenseMatrix& v,
                                      const DenseMatrix& w, const DenseVector& b,
                                      const DenseVector& h_prev, const DenseVector& x);

/// `count` evenly spaced points on [lo, hi], endpoints included.
std::vector<double> linspace(double lo, double hi, std::size_t count);

/// CSV `alpha,phi,dphi`. The dphi field is left empty at alpha == 0.
void write_phi_curve(std::ostream& out, std::span<const double> alphas, double tol = 1e-12);

}  // namespace ernn
