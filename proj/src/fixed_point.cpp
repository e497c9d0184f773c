#include "ernn/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "ernn/errors.hpp"

namespace ernn {

namespace {

DenseVector eval_residual(const ResidualSystem& sys, const DenseVector& z) {
  DenseVector r = sys.residual(z);
  if (r.size() != sys.dimension) {
    throw DimensionError("residual returned length " + std::to_string(r.size()) +
                         ", expected " + std::to_string(sys.dimension));
  }
  return r;
}

}  // namespace

SolveResult inexact_newton_solve(const ResidualSystem& sys, const DenseVector& z0,
                                 std::span<const double> etas, std::size_t max_iters, double tol,
                                 bool record_contraction) {
  if (z0.size() != sys.dimension) throw DimensionError("inexact_newton_solve: z0 length");
  if (etas.empty() || (etas.size() != 1 && etas.size() < max_iters)) {
    throw std::invalid_argument("inexact_newton_solve: need one step size or at least max_iters");
  }
  auto eta_at = [&](std::size_t k) { return etas.size() == 1 ? etas[0] : etas[k]; };

  SolveResult out{z0, {}};
  SolveTrace& trace = out.trace;
  DenseVector& z = out.solution;

  for (std::size_t k = 0;; ++k) {
    DenseVector r = eval_residual(sys, z);
    trace.iterates.push_back(z);
    if (!r.all_finite()) {
      trace.residual_norms.push_back(std::numeric_limits<double>::quiet_NaN());
      trace.status = SolveStatus::diverged;
      trace.reason = "non-finite residual at iteration " + std::to_string(k);
      break;
    }
    const double rn = r.norm();
    trace.residual_norms.push_back(rn);
    if (rn <= tol) {
      trace.status = SolveStatus::converged;
      trace.converged = true;
      break;
    }
    if (k == max_iters) {
      trace.status = SolveStatus::max_iterations;
      trace.reason = "reached max_iters with residual " + std::to_string(rn);
      break;
    }
    const double eta = eta_at(k);
    if (record_contraction) trace.contraction_norms.push_back(check_contraction(sys, z, eta));
    kernel::axpy(eta, r.span(), z.span());
  }
  trace.iterations_used = trace.iterates.size() - 1;
  return out;
}

DenseMatrix finite_difference_jacobian(const ResidualSystem& sys, const DenseVector& z) {
  const std::size_t n = sys.dimension;
  const double h = 1e-6 * std::max(1.0, z.max_abs());
  DenseMatrix jac(n, n);
  DenseVector zp = z;
  for (std::size_t j = 0; j < n; ++j) {
    zp[j] = z[j] + h;
    const DenseVector fp = eval_residual(sys, zp);
    zp[j] = z[j] - h;
    const DenseVector fm = eval_residual(sys, zp);
    zp[j] = z[j];
    for (std::size_t i = 0; i < n; ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

double check_contraction(const ResidualSystem& sys, const DenseVector& z, double eta) {
  DenseMatrix jac = sys.jacobian ? sys.jacobian(z) : finite_difference_jacobian(sys, z);
  if (jac.rows() != sys.dimension || jac.cols() != sys.dimension) {
    throw DimensionError("check_contraction: Jacobian has wrong shape");
  }
  if (!jac.all_finite()) throw DivergenceError("check_contraction: non-finite Jacobian entries");
  DenseMatrix m = scale(eta, jac);
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += 1.0;
  return spectral_norm(m).value;
}

double phi_scalar(double alpha, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("phi_scalar: tol must be positive");
  if (alpha == 0.0) return 0.0;
  const double t = std::tanh(alpha);
  double lo = std::min(0.0, t) - 1.0;
  double hi = std::max(0.0, t) + 1.0;
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = mid - std::tanh(mid + alpha);
    if (g == 0.0) return mid;
    (g < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double phi_derivative(double alpha, double tol) {
  if (alpha == 0.0) throw std::domain_error("phi_derivative: unbounded at alpha = 0");
  const double t = std::tanh(phi_scalar(alpha, tol) + alpha);
  const double t2 = t * t;
  return (1.0 - t2) / t2;
}

DenseVector linear_fixed_point_exact(const DenseMatrix& u, const DenseMatrix& v,
                                     const DenseMatrix& w, const DenseVector& b,
                                     const DenseVector& h_prev, const DenseVector& x) {
  if (!u.is_square()) throw DimensionError("linear_fixed_point_exact: U must be square");
  const DenseVector rhs = add(add(matvec(v, h_prev), matvec(w, x)), b);
  DenseMatrix a = scale(-1.0, u);
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1.0;
  return solve(a, rhs, 1e-12);
}

DenseVector linear_fixed_point_approx(const DenseMatrix& u, const DenseMatrix& v,
                                      const DenseMatrix& w, const DenseVector& b,
                                      const DenseVector& h_prev, const DenseVector& x) {
  const DenseVector rhs = add(add(matvec(v, h_prev), matvec(w, x)), b);
  return add(rhs, matvec(u, rhs));
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double span = hi - lo;
  const double denom = static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + span * static_cast<double>(i) / denom;
  out.back() = hi;
  return out;
}

void write_phi_curve(std::ostream& out, std::span<const double> alphas, double tol) {
  out << "alpha,phi,dphi\n" << std::setprecision(17);
  for (double a : alphas) {
    out << a << ',' << phi_scalar(a, tol) << ',';
    if (a != 0.0) out << phi_derivative(a, tol);
    out << '\n';
  }
}

}  // namespace ernn
