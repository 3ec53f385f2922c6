#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lstr {

using Vector = std::vector<double>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Every weight and batched activation in
// the project lives in this type; 64-bit precision throughout so that
// finite-difference gradient checks stay meaningful.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix identity(std::size_t n);

// a (m x n) times x (n) -> m
Vector matvec(const Matrix& a, const Vector& x);
// a^T (n x m) times x (m) -> n, without forming the transpose
Vector matvec_t(const Matrix& a, const Vector& x);
// acc += scale * u * v^T, acc is |u| x |v|
void add_outer(Matrix& acc, const Vector& u, const Vector& v, double scale = 1.0);

double dot(const Vector& a, const Vector& b);
double l2_norm(const Vector& v);
double linf_norm(const Vector& v);
void axpy(double a, const Vector& x, Vector& y);  // y += a * x
void scale_vec(Vector& v, double a);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// Population variance over every entry of the matrix (divides by the count).
double scalar_variance(const Matrix& m);

class Rng;

// i.i.d. N(0, std^2) entries; std must be strictly positive.
Matrix gaussian_init(std::size_t rows, std::size_t cols, double std, Rng& rng);

// QR-style init via modified Gram-Schmidt of a Gaussian draw. Columns are
// orthonormal when rows >= cols, rows otherwise.
Matrix orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace lstr
