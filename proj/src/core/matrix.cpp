#include "core/matrix.hpp"

#include <cmath>
#include <string>

#include "core/rng.hpp"

namespace lstr {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                     " vs " + std::to_string(b.rows) + ")");
  }
  Matrix out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols != x.size()) throw ShapeError("matvec: dimension mismatch");
  Vector out(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Vector matvec_t(const Matrix& a, const Vector& x) {
  if (a.rows != x.size()) throw ShapeError("matvec_t: dimension mismatch");
  Vector out(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* arow = a.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) out[j] += arow[j] * xi;
  }
  return out;
}

void add_outer(Matrix& acc, const Vector& u, const Vector& v, double scale) {
  if (acc.rows != u.size() || acc.cols != v.size()) {
    throw ShapeError("add_outer: dimension mismatch");
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ui = scale * u[i];
    if (ui == 0.0) continue;
    double* arow = acc.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) arow[j] += ui * v[j];
  }
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(const Vector& v) { return std::sqrt(dot(v, v)); }

double linf_norm(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

void axpy(double a, const Vector& x, Vector& y) {
  if (x.size() != y.size()) throw ShapeError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale_vec(Vector& v, double a) {
  for (double& x : v) x *= a;
}

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.data); }

double scalar_variance(const Matrix& m) {
  if (m.data.empty()) throw ShapeError("scalar_variance: empty matrix");
  double mean = 0.0;
  for (double x : m.data) mean += x;
  mean /= static_cast<double>(m.data.size());
  double var = 0.0;
  for (double x : m.data) var += (x - mean) * (x - mean);
  return var / static_cast<double>(m.data.size());
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  if (!(std > 0.0)) throw std::invalid_argument("gaussian_init: std must be > 0");
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.next_gaussian(0.0, std);
  return m;
}

namespace {

// Modified Gram-Schmidt with one re-orthogonalization pass over the columns
// of a Gaussian draw; degenerate columns are redrawn.
Matrix orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m = gaussian_init(rows, cols, 1.0, rng);
  for (std::size_t j = 0; j < cols; ++j) {
    for (;;) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < j; ++p) {
          double proj = 0.0;
          for (std::size_t i = 0; i < rows; ++i) proj += m(i, p) * m(i, j);
          for (std::size_t i = 0; i < rows; ++i) m(i, j) -= proj * m(i, p);
        }
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < rows; ++i) norm += m(i, j) * m(i, j);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t i = 0; i < rows; ++i) m(i, j) /= norm;
        break;
      }
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = rng.next_gaussian();
    }
  }
  return m;
}

}  // namespace

Matrix orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("orthogonal_init: empty shape");
  if (rows >= cols) return orthonormal_columns(rows, cols, rng);
  Matrix t = orthonormal_columns(cols, rows, rng);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = t(j, i);
  return m;
}

}  // namespace lstr
