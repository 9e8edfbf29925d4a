#pragma once

#include <cmath>
#include <random>

#include "turnpike/system_model.hpp"

namespace fx {

using turnpike::DescriptorPlant;
using turnpike::LtiPlant;
using turnpike::Matrix;
using turnpike::Vector;

inline const double kSqrt2 = std::sqrt(2.0);
inline const double kSqrt3 = std::sqrt(3.0);

// 2x2 example: A = diag(2, -1), B = [1; 1], C = [0, sqrt 3].
inline LtiPlant example_abc(bool f_equals_c = false) {
  LtiPlant p;
  p.A = Matrix(2, 2);
  p.A << 2, 0, 0, -1;
  p.B = Matrix(2, 1);
  p.B << 1, 1;
  p.C = Matrix(1, 2);
  p.C << 0, kSqrt3;
  p.F = Matrix(1, 2);
  if (f_equals_c)
    p.F = p.C;
  else
    p.F << kSqrt3, 0;
  return p;
}

inline Matrix p_plus_abc() {
  Matrix P(2, 2);
  P << 64, -16, -16, 13;
  return P / 9.0;
}

inline Matrix a_plus_abc() {
  Matrix A(2, 2);
  A << -10.0 / 3, 1.0 / 3, -16.0 / 3, -2.0 / 3;
  return A;
}

// E = diag(1, 0), A = diag(1, -1), B = [1; 1], C = [1, 0], F = [1, 0].
inline DescriptorPlant reference_dae() {
  DescriptorPlant p;
  p.E = Matrix::Zero(2, 2);
  p.E(0, 0) = 1;
  p.A = Matrix::Zero(2, 2);
  p.A(0, 0) = 1;
  p.A(1, 1) = -1;
  p.B = Matrix::Ones(2, 1);
  p.C = Matrix::Zero(1, 2);
  p.C(0, 0) = 1;
  p.F = Matrix::Zero(1, 2);
  p.F(0, 0) = 1;
  return p;
}

// Scalar gDRE solution of the reference DAE with S1 = 1, tau = t1 - t.
inline double reference_p1(double tau) {
  double e = std::exp(-2 * kSqrt2 * tau);
  return 1 + kSqrt2 - 2 * kSqrt2 * e / (1 + e);
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Matrix random_matrix(std::mt19937& g, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = d(g);
  return M;
}

inline Matrix random_orthogonal(std::mt19937& g, Eigen::Index n) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(g, n, n));
  return qr.householderQ();
}

// Truncated Taylor series with scaling and squaring, for cross-checks only.
inline Matrix expm_series(const Matrix& M) {
  int s = 0;
  double nrm = M.cwiseAbs().rowwise().sum().maxCoeff();
  while (nrm > 0.5) {
    nrm /= 2;
    ++s;
  }
  Matrix X = M / std::pow(2.0, s);
  Matrix term = Matrix::Identity(M.rows(), M.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * X / k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

// Composite Simpson rule for matrix-valued integrands.
template <class F>
Matrix simpson(const F& f, double a, double b, int n) {
  if (n % 2) ++n;
  double h = (b - a) / n;
  Matrix acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

}  // namespace fx
