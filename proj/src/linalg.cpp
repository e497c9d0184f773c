#include "ernn/linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>
#include <string>

#include "ernn/errors.hpp"
#include "ernn/rng.hpp"

namespace ernn {

namespace {

bool finite_span(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

std::string shape(const DenseMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_same_length(const DenseVector& x, const DenseVector& y, const char* op) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(op) + ": length mismatch (" + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()) + ")");
  }
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch (" + shape(a) + " vs " + shape(b) +
                         ")");
  }
}

template <typename T>
T checked(T value, const char* op) {
  if (!value.all_finite()) throw DivergenceError(std::string(op) + ": non-finite result");
  return value;
}

}  // namespace

void DenseVector::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double DenseVector::norm() const { return std::sqrt(kernel::dot(data_, data_)); }

double DenseVector::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool DenseVector::all_finite() const { return finite_span(data_); }

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double DenseMatrix::frobenius_norm() const { return std::sqrt(kernel::dot(data_, data_)); }

bool DenseMatrix::all_finite() const { return finite_span(data_); }

DenseVector matvec(const DenseMatrix& a, const DenseVector& x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: matrix is " + shape(a) + " but vector has length " +
                         std::to_string(x.size()));
  }
  DenseVector y(a.rows());
  kernel::gemv(a, x.span(), y.span());
  return checked(std::move(y), "matvec");
}

DenseVector matvec_transposed(const DenseMatrix& a, const DenseVector& x) {
  if (a.rows() != x.size()) {
    throw DimensionError("matvec_transposed: matrix is " + shape(a) +
                         " but vector has length " + std::to_string(x.size()));
  }
  DenseVector y(a.cols());
  kernel::gemv_t(a, x.span(), y.span());
  return checked(std::move(y), "matvec_transposed");
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape(a) + " times " + shape(b));
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      kernel::axpy(aik, b.row(k), c.row(i));
    }
  }
  return checked(std::move(c), "matmul");
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

DenseVector add(const DenseVector& x, const DenseVector& y) { return axpy(1.0, x, y); }

DenseVector sub(const DenseVector& x, const DenseVector& y) { return axpy(-1.0, y, x); }

DenseVector scale(double alpha, const DenseVector& x) {
  DenseVector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = alpha * x[i];
  return checked(std::move(y), "scale");
}

DenseVector axpy(double alpha, const DenseVector& x, const DenseVector& y) {
  require_same_length(x, y, "axpy");
  DenseVector out = y;
  kernel::axpy(alpha, x.span(), out.span());
  return checked(std::move(out), "axpy");
}

double dot(const DenseVector& x, const DenseVector& y) {
  require_same_length(x, y, "dot");
  return kernel::dot(x.span(), y.span());
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix c = a;
  kernel::axpy(1.0, b.span(), c.span());
  return checked(std::move(c), "add");
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "sub");
  DenseMatrix c = a;
  kernel::axpy(-1.0, b.span(), c.span());
  return checked(std::move(c), "sub");
}

DenseMatrix scale(double alpha, const DenseMatrix& a) {
  DenseMatrix c = a;
  for (double& v : c.span()) v *= alpha;
  return checked(std::move(c), "scale");
}

namespace {

// One power-iteration run from a seeded start vector. Returns the estimate and
// whether A annihilated the start vector.
SpectralNormEstimate power_iteration(const DenseMatrix& a, std::size_t max_iters, double tol,
                                     std::uint64_t seed, bool& stalled) {
  const std::size_t n = a.cols();
  Xoshiro256ss rng(seed);
  std::vector<double> v(n), av(a.rows()), atav(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  double nv = std::sqrt(kernel::dot(v, v));
  for (double& x : v) x /= nv;

  SpectralNormEstimate est;
  double prev = -1.0;
  stalled = false;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    kernel::gemv(a, v, av);
    const double sigma = std::sqrt(kernel::dot(av, av));
    est.value = sigma;
    est.iterations = it;
    if (sigma == 0.0) {
      stalled = true;
      est.converged = true;
      return est;
    }
    if (prev >= 0.0 && std::abs(sigma - prev) <= tol * sigma) {
      est.converged = true;
      return est;
    }
    prev = sigma;
    kernel::gemv_t(a, av, atav);
    const double n2 = std::sqrt(kernel::dot(atav, atav));
    for (std::size_t i = 0; i < n; ++i) v[i] = atav[i] / n2;
  }
  return est;
}

}  // namespace

SpectralNormEstimate spectral_norm(const DenseMatrix& a, std::size_t max_iters, double tol) {
  if (!a.is_square()) throw DimensionError("spectral_norm: matrix is " + shape(a));
  if (max_iters == 0) throw std::invalid_argument("spectral_norm: max_iters must be >= 1");
  if (a.rows() == 0) return {0.0, 0, true};
  bool stalled = false;
  auto est = power_iteration(a, max_iters, tol, 0x5eed0001ULL, stalled);
  if (stalled) est = power_iteration(a, max_iters, tol, 0x5eed0002ULL, stalled);
  return est;
}

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_distance");
  double s = 0.0;
  auto x = a.span();
  auto y = b.span();
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

double euclidean_distance(const DenseVector& x, const DenseVector& y) {
  require_same_length(x, y, "euclidean_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

DenseVector solve(const DenseMatrix& a, const DenseVector& rhs, double min_pivot) {
  if (!a.is_square()) throw DimensionError("solve: matrix is " + shape(a));
  if (a.rows() != rhs.size()) throw DimensionError("solve: rhs length mismatch");
  const std::size_t n = a.rows();
  DenseMatrix m = a;
  DenseVector z = rhs;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
    if (std::abs(m(piv, col)) < min_pivot) {
      std::ostringstream msg;
      msg << "solve: singular matrix, pivot " << m(piv, col) << " in column " << col
          << " is below " << min_pivot;
      throw SingularMatrixError(msg.str());
    }
    if (piv != col) {
      std::swap_ranges(m.row(col).begin(), m.row(col).end(), m.row(piv).begin());
      std::swap(z[col], z[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m(r, col) / m(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m(r, c) -= f * m(col, c);
      z[r] -= f * z[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = z[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m(i, c) * z[c];
    z[i] = s / m(i, i);
  }
  return checked(std::move(z), "solve");
}

namespace kernel {

void gemv(const DenseMatrix& a, std::span<const double> x, std::span<double> y, bool accumulate) {
  assert(x.size() == a.cols() && y.size() == a.rows());
  const std::size_t cols = a.cols();
  const double* p = a.span().data();
  for (std::size_t i = 0; i < a.rows(); ++i, p += cols) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += p[j] * x[j];
    y[i] = accumulate ? y[i] + s : s;
  }
}

void gemv_t(const DenseMatrix& a, std::span<const double> x, std::span<double> y,
            bool accumulate) {
  assert(x.size() == a.rows() && y.size() == a.cols());
  if (!accumulate) std::fill(y.begin(), y.end(), 0.0);
  const std::size_t cols = a.cols();
  const double* p = a.span().data();
  for (std::size_t i = 0; i < a.rows(); ++i, p += cols) {
    const double xi = x[i];
    for (std::size_t j = 0; j < cols; ++j) y[j] += p[j] * xi;
  }
}

void ger(DenseMatrix& a, double alpha, std::span<const double> u, std::span<const double> v) {
  assert(u.size() == a.rows() && v.size() == a.cols());
  const std::size_t cols = a.cols();
  double* p = a.span().data();
  for (std::size_t i = 0; i < a.rows(); ++i, p += cols) {
    const double ui = alpha * u[i];
    for (std::size_t j = 0; j < cols; ++j) p[j] += ui * v[j];
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace kernel

}  // namespace ernn
