#include "kgtn/matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace kgtn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

// c (m x n) = a (m x p) * b (p x n), row-major. Every output entry sums its
// products in increasing k starting from zero, so the blocking and the
// instruction set never change the result bits.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__)
#define KGTN_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define KGTN_CLONES
#endif

using Lanes = double __attribute__((vector_size(32)));

KGTN_CLONES
void gemm(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t m,
          std::size_t p, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * p;
    const double* a1 = a0 + p;
    const double* a2 = a1 + p;
    const double* a3 = a2 + p;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      Lanes c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
      for (std::size_t k = 0; k < p; ++k) {
        Lanes b0, b1;
        std::memcpy(&b0, b + k * n + j, sizeof(Lanes));
        std::memcpy(&b1, b + k * n + j + 4, sizeof(Lanes));
        c00 += a0[k] * b0;
        c01 += a0[k] * b1;
        c10 += a1[k] * b0;
        c11 += a1[k] * b1;
        c20 += a2[k] * b0;
        c21 += a2[k] * b1;
        c30 += a3[k] * b0;
        c31 += a3[k] * b1;
      }
      double* d = c + i * n + j;
      std::memcpy(d, &c00, sizeof(Lanes));
      std::memcpy(d + 4, &c01, sizeof(Lanes));
      std::memcpy(d + n, &c10, sizeof(Lanes));
      std::memcpy(d + n + 4, &c11, sizeof(Lanes));
      std::memcpy(d + 2 * n, &c20, sizeof(Lanes));
      std::memcpy(d + 2 * n + 4, &c21, sizeof(Lanes));
      std::memcpy(d + 3 * n, &c30, sizeof(Lanes));
      std::memcpy(d + 3 * n + 4, &c31, sizeof(Lanes));
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        const double* ar = a + (i + r) * p;
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k) acc += ar[k] * b[k * n + j];
        c[(i + r) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    double* dst = c + i * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      const double av = a[i * p + k];
      const double* brow = b + k * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += av * brow[j];
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(rows, cols));
  }
}

Matrix Matrix::uninitialized(std::size_t rows, std::size_t cols) {
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_.resize(rows * cols);
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out = uninitialized(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw std::out_of_range("Matrix::gather_rows: row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a) + " * " + shape_string(b));
  }
  Matrix out = Matrix::uninitialized(a.rows(), b.cols());
  gemm(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ " + shape_string(a) + " * " +
                     shape_string(b) + "^T");
  }
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ " + shape_string(a) + "^T * " +
                     shape_string(b));
  }
  return matmul(transpose(a), b);
}

Matrix transpose(const Matrix& a) {
  Matrix out = Matrix::uninitialized(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = Matrix::uninitialized(a.rows(), a.cols());
  auto dst = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] + y[i];
  return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  auto dst = a.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return a;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = Matrix::uninitialized(a.rows(), a.cols());
  auto dst = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] - y[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = Matrix::uninitialized(a.rows(), a.cols());
  auto dst = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] * s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = Matrix::uninitialized(a.rows(), a.cols());
  auto dst = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] * y[i];
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ " + shape_string(a) + " | " +
                     shape_string(b));
  }
  Matrix out = Matrix::uninitialized(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw ShapeError("slice_cols: bad column range");
  Matrix out = Matrix::uninitialized(a.rows(), end - begin);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(i);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
              src.begin() + static_cast<std::ptrdiff_t>(end), out.row(i).begin());
  }
  return out;
}

double sum(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

KGTN_CLONES
bool all_finite(const Matrix& a) {
  // A value is non-finite iff its exponent bits are all set; adding one exponent ulp then carries into
  // the sign bit. Only and/add/or, so the loop vectorizes on baseline SSE2.
  constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
  constexpr std::uint64_t kExponentUlp = 0x0010000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : a.data()) bad |= (std::bit_cast<std::uint64_t>(v) & kExponent) + kExponentUlp;
  return (bad >> 63) == 0;
}

}  // namespace kgtn
