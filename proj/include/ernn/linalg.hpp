#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ernn {

/// Dense column vector of doubles.
class DenseVector {
public:
  DenseVector() = default;
  explicit DenseVector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  DenseVector(std::initializer_list<double> values) : data_(values) {}
  explicit DenseVector(std::vector<double> values) : data_(std::move(values)) {}
  explicit DenseVector(std::span<const double> values)
      : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v);
  double norm() const;
  double max_abs() const;
  bool all_finite() const;

  bool operator==(const DenseVector&) const = default;

private:
  std::vector<double> data_;
};

/// Row-major dense matrix of doubles.
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  void fill(double v);
  double frobenius_norm() const;
  bool all_finite() const;

  bool operator==(const DenseMatrix&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Pure operations. All throw DimensionError on shape mismatch and
// DivergenceError if the result contains a NaN or Inf.

DenseVector matvec(const DenseMatrix& a, const DenseVector& x);
/// Aᵀx
DenseVector matvec_transposed(const DenseMatrix& a, const DenseVector& x);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseVector add(const DenseVector& x, const DenseVector& y);
DenseVector sub(const DenseVector& x, const DenseVector& y);
DenseVector scale(double alpha, const DenseVector& x);
/// alpha·x + y
DenseVector axpy(double alpha, const DenseVector& x, const DenseVector& y);
double dot(const DenseVector& x, const DenseVector& y);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(double alpha, const DenseMatrix& a);

struct SpectralNormEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration on AᵀA. Stops when the relative
/// change between consecutive estimates drops to `tol`, or after `max_iters`
/// (then `converged` is false).
SpectralNormEstimate spectral_norm(const DenseMatrix& a, std::size_t max_iters = 10000,
                                   double tol = 1e-14);

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);
double euclidean_distance(const DenseVector& x, const DenseVector& y);

/// Solves A z = rhs by Gaussian elimination with partial pivoting. Throws
/// SingularMatrixError naming the column when a pivot falls below `min_pivot`.
DenseVector solve(const DenseMatrix& a, const DenseVector& rhs, double min_pivot = 1e-12);

// In-place kernels for the hot paths. No shape checks beyond debug asserts.
namespace kernel {

/// y = A x, or y += A x when `accumulate`.
void gemv(const DenseMatrix& a, std::span<const double> x, std::span<double> y,
          bool accumulate = false);
/// y = Aᵀ x, or y += Aᵀ x when `accumulate`.
void gemv_t(const DenseMatrix& a, std::span<const double> x, std::span<double> y,
            bool accumulate = false);
/// A += alpha · u vᵀ
void ger(DenseMatrix& a, double alpha, std::span<const double> u, std::span<const double> v);
/// y += alpha · x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);

}  // namespace kernel

}  // namespace ernn
