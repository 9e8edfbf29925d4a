#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "turnpike/errors.hpp"

namespace turnpike {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Tolerances {
  double ode_rel = 1e-8;
  double ode_abs = 1e-10;
  double residual = 1e-8;
  // Unset means machine epsilon times the larger matrix dimension.
  std::optional<double> rank_rel;
  double psd_slack = 1e-9;

  double rank_tol(Eigen::Index rows, Eigen::Index cols) const {
    if (rank_rel) return *rank_rel;
    return std::numeric_limits<double>::epsilon() *
           static_cast<double>(std::max<Eigen::Index>({rows, cols, 1}));
  }

  void validate() const {
    auto bad = [](double v) { return !(v > 0.0) || !std::isfinite(v); };
    if (bad(ode_rel) || bad(ode_abs) || bad(residual) || bad(psd_slack) ||
        (rank_rel && bad(*rank_rel)))
      throw InputError("tolerances must be finite and strictly positive");
  }
};

inline bool all_finite(const Matrix& M) { return M.allFinite(); }

inline void require_square(const Matrix& M, const char* what) {
  if (M.rows() != M.cols())
    throw InputError(std::string(what) + ": matrix must be square, got " +
                     std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
}

inline Matrix sym(const Matrix& M) { return 0.5 * (M + M.transpose()); }

inline double norm2(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

inline double sigma_min(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

inline double cond2(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

// Matrix exponential. Backed by Eigen's scaling-and-squaring Pade routine.
inline Matrix expm(const Matrix& M) {
  require_square(M, "expm");
  if (M.size() == 0) return M;
  if (!all_finite(M)) throw InputError("expm: non-finite entries");
  Matrix E = M.exp();
  return E;
}

inline int rank_svd(const Matrix& M, const Tolerances& tol = {}) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& s = svd.singularValues();
  if (s(0) == 0.0) return 0;
  double cut = tol.rank_tol(M.rows(), M.cols()) * s(0);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

inline Eigen::VectorXcd eigenvalues(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, false);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("eigenvalue iteration did not converge");
  return es.eigenvalues();
}

inline double spectral_abscissa(const Matrix& M) {
  require_square(M, "spectral_abscissa");
  if (M.size() == 0) return -std::numeric_limits<double>::infinity();
  return eigenvalues(M).real().maxCoeff();
}

inline double min_eig_sym(const Matrix& M) {
  require_square(M, "min_eig_sym");
  if (M.size() == 0) return std::numeric_limits<double>::infinity();
  double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputError("min_eig_sym: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// Solves A X + X A* + Q = 0 by Kronecker vectorization.
inline Matrix solve_lyapunov(const Matrix& A, const Matrix& Q, const Tolerances& tol = {}) {
  require_square(A, "solve_lyapunov");
  require_square(Q, "solve_lyapunov");
  const Eigen::Index n = A.rows();
  if (Q.rows() != n) throw InputError("solve_lyapunov: dimension mismatch");
  if (n == 0) return Matrix(0, 0);
  if (spectral_abscissa(A) >= 0.0)
    throw NumericalFailure("solve_lyapunov: coefficient matrix is not stable");
  const Matrix I = Matrix::Identity(n, n);
  Matrix K = Matrix::Zero(n * n, n * n);
  // vec(A X) = (I kron A) vec X, vec(X A*) = (A kron I) vec X
  for (Eigen::Index j = 0; j < n; ++j) K.block(j * n, j * n, n, n) = A;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) += A(i, j) * I;
  Eigen::FullPivLU<Matrix> lu(K);
  if (!lu.isInvertible())
    throw NumericalFailure("solve_lyapunov: singular Kronecker system");
  Vector q = Eigen::Map<const Vector>(Q.data(), n * n);
  Vector x = lu.solve(-q);
  Matrix X = sym(Eigen::Map<const Matrix>(x.data(), n, n));
  double res = (A * X + X * A.transpose() + Q).norm();
  if (res > tol.residual * (1.0 + X.norm()))
    throw NumericalFailure("solve_lyapunov: residual " + std::to_string(res) +
                           " exceeds tolerance");
  return X;
}

inline double care_residual(const Matrix& A, const Matrix& R, const Matrix& Q, const Matrix& P) {
  return (A.transpose() * P + P * A - P * R * P + Q).norm();
}

namespace detail {

// Orthonormal basis of the stable invariant subspace of H via the matrix sign
// function: sign(H) = -I on that subspace.
inline Matrix stable_subspace(const Matrix& H, Eigen::Index dim) {
  const Eigen::Index N = H.rows();
  Matrix Z = H;
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Matrix> lu(Z);
    double det = std::abs(lu.determinant());
    double c = (det > 0.0 && std::isfinite(det)) ? std::pow(det, -1.0 / static_cast<double>(N))
                                                 : 1.0;
    Matrix Zn = 0.5 * (c * Z + lu.inverse() / c);
    if (!Zn.allFinite()) throw NumericalFailure("sign iteration diverged");
    double d = (Zn - Z).norm();
    Z = Zn;
    if (d <= 1e-13 * Z.norm()) break;
  }
  Eigen::JacobiSVD<Matrix> svd(Z + Matrix::Identity(N, N), Eigen::ComputeFullV);
  return svd.matrixV().rightCols(dim);
}

}  // namespace detail

// Stabilizing solution of A*P + PA - PRP + Q = 0 from the stable invariant
// subspace of the Hamiltonian [[A, -R], [-Q, -A*]].
inline Matrix solve_care(const Matrix& A, const Matrix& R, const Matrix& Q,
                         const Tolerances& tol = {}) {
  require_square(A, "solve_care");
  const Eigen::Index n = A.rows();
  if (R.rows() != n || R.cols() != n || Q.rows() != n || Q.cols() != n)
    throw InputError("solve_care: dimension mismatch");
  if (n == 0) return Matrix(0, 0);
  Matrix H(2 * n, 2 * n);
  H << A, -R, -Q, -A.transpose();

  for (const auto& l : eigenvalues(H))
    if (std::abs(l.real()) <= 1e-9 * (1.0 + std::abs(l)))
      throw AssumptionViolation("stabilizing ARE solution",
                                "Hamiltonian has eigenvalues on the imaginary axis");

  Matrix X = detail::stable_subspace(H, n);
  Matrix X11 = X.topRows(n), X21 = X.bottomRows(n);
  if (cond2(X11) > 1e12)
    throw AssumptionViolation("stabilizing ARE solution",
                              "stable subspace is not a graph (X11 singular)");
  Matrix P = sym(X11.transpose().partialPivLu().solve(X21.transpose()).transpose());

  // Newton (Kleinman) refinement from the stabilizing initial guess.
  double res = care_residual(A, R, Q, P);
  for (int it = 0; it < 8 && res > 1e-15 * (1.0 + P.norm()) * (1.0 + A.norm()); ++it) {
    Matrix Ak = A - R * P;
    if (spectral_abscissa(Ak) >= 0.0) break;
    Matrix Pn;
    try {
      Tolerances loose = tol;
      loose.residual = 1e-6;
      Pn = solve_lyapunov(Ak.transpose(), P * R * P + Q, loose);
    } catch (const Error&) {
      break;
    }
    double rn = care_residual(A, R, Q, Pn);
    if (!(rn < res)) break;
    P = Pn;
    res = rn;
  }

  if (res > tol.residual * (1.0 + P.norm()))
    throw NumericalFailure("solve_care: residual " + std::to_string(res) + " exceeds tolerance");
  if (spectral_abscissa(A - R * P) >= 0.0)
    throw AssumptionViolation("stabilizing ARE solution", "closed loop is not stable");
  return P;
}

inline Matrix solve_are_stabilizing(const Matrix& A, const Matrix& B, const Matrix& C,
                                    const Tolerances& tol = {}) {
  require_square(A, "solve_are_stabilizing");
  if (B.rows() != A.rows() || C.cols() != A.rows())
    throw InputError("solve_are_stabilizing: dimension mismatch");
  return solve_care(A, B * B.transpose(), C.transpose() * C, tol);
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with Hairer's continuous extension.

class DenseOutput {
public:
  struct Step {
    double t, h;
    Vector r1, r2, r3, r4, r5;
  };

  double t_begin() const { return t0_; }
  double t_end() const { return t1_; }

  Vector operator()(double t) const {
    if (steps_.empty()) return y0_;
    double lo = std::min(t0_, t1_), hi = std::max(t0_, t1_);
    double span = hi - lo;
    if (t < lo - 1e-12 * (1.0 + span) || t > hi + 1e-12 * (1.0 + span))
      throw InputError("dense output evaluated outside the integration interval");
    // Steps are stored in integration order; s = (t - t0) * dir increases.
    double s = (t - t0_) * dir_;
    auto it = std::upper_bound(starts_.begin(), starts_.end(), s);
    std::size_t k = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin() - 1);
    const Step& st = steps_[k];
    double th = (t - st.t) / st.h;
    th = std::clamp(th, 0.0, 1.0);
    double th1 = 1.0 - th;
    return st.r1 + th * (st.r2 + th1 * (st.r3 + th * (st.r4 + th1 * st.r5)));
  }

private:
  template <class F>
  friend class DormandPrince;
  friend struct OdeBuilder;
  double t0_ = 0, t1_ = 0, dir_ = 1;
  Vector y0_;
  std::vector<Step> steps_;
  std::vector<double> starts_;
};

struct OdeTrajectory {
  std::vector<double> t;  // grid nodes in integration order
  std::vector<Vector> y;
  std::shared_ptr<const DenseOutput> dense;
  long steps = 0;
  long rejected = 0;
};

using OdeField = std::function<Vector(double, const Vector&)>;
using OdeProjector = std::function<void(Vector&)>;

struct OdeBuilder {
  static std::shared_ptr<DenseOutput> make(double t0, double t1, const Vector& y0) {
    auto d = std::make_shared<DenseOutput>();
    d->t0_ = t0;
    d->t1_ = t1;
    d->dir_ = t1 >= t0 ? 1.0 : -1.0;
    d->y0_ = y0;
    return d;
  }
  static void push(DenseOutput& d, DenseOutput::Step st) {
    d.starts_.push_back((st.t - d.t0_) * d.dir_);
    d.steps_.push_back(std::move(st));
  }
};

inline std::string fmt_time(double t) {
  std::ostringstream os;
  os.precision(10);
  os << t;
  return os.str();
}

// Integrates y' = f(t, y) from t0 to t1 (either direction). Output samples are
// taken on `grid` uniform nodes including both endpoints; steps are shortened
// to end on them, so samples are step values rather than interpolants.
inline OdeTrajectory integrate_ode(const OdeField& f, const Vector& y0, double t0, double t1,
                                   const Tolerances& tol, int grid,
                                   const OdeProjector& project = {}) {
  if (t0 == t1) throw InputError("integrate_ode: empty interval");
  if (grid < 2) throw InputError("integrate_ode: grid needs at least two nodes");
  if (!y0.allFinite()) throw InputError("integrate_ode: non-finite initial value");
  tol.validate();

  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                   a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                   d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                   d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  auto dense = OdeBuilder::make(t0, t1, y0);

  Vector y = y0;
  if (project) project(y);
  double t = t0;
  Vector k1 = f(t, y);
  if (!k1.allFinite()) throw NumericalFailure("integrate_ode: non-finite field at t = " + fmt_time(t));

  auto scale = [&](const Vector& a, const Vector& b) {
    return (tol.ode_abs + tol.ode_rel * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
  };
  auto rms = [](const Vector& v) {
    return v.size() == 0 ? 0.0 : std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
  };

  // Initial step (Hairer & Wanner, II.4).
  double h;
  {
    Vector sc = scale(y, y);
    double dn0 = rms(y.cwiseQuotient(sc)), dn1 = rms(k1.cwiseQuotient(sc));
    double h0 = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * dn0 / dn1;
    h0 = std::min(h0, span);
    Vector k2 = f(t + dir * h0, y + dir * h0 * k1);
    double dn2 = rms((k2 - k1).cwiseQuotient(sc)) / h0;
    double mx = std::max(dn1, dn2);
    double h1 = mx <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / mx, 1.0 / 5);
    h = std::min({100 * h0, h1, span});
  }

  OdeTrajectory out;
  out.t.resize(grid);
  out.y.resize(grid);
  auto node = [&](int k) {
    return k == grid - 1 ? t1 : t0 + (t1 - t0) * static_cast<double>(k) / (grid - 1);
  };
  out.t[0] = t0;
  out.y[0] = y;
  const long max_steps = 2000000;
  int next = 1;  // steps are clipped so that every output node is a step end
  Vector k2, k3, k4, k5, k6, k7, y1;
  while (next < grid) {
    if (out.steps + out.rejected > max_steps)
      throw NumericalFailure("integrate_ode: step budget exhausted at t = " + fmt_time(t));
    const double gap = std::abs(node(next) - t);
    const bool land = h >= gap * (1.0 - 1e-12);
    const double hh = land ? gap : h;
    if (hh < 1e-14 * std::max(1.0, std::abs(t)))
      throw NumericalFailure("integrate_ode: step size underflow at t = " + fmt_time(t));
    const double hs = dir * hh;
    const double tn = land ? node(next) : t + hs;
    k2 = f(t + c2 * hs, y + hs * (a21 * k1));
    k3 = f(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    k4 = f(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    k5 = f(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    k6 = f(tn, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    y1 = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    k7 = f(tn, y1);
    Vector errv = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = rms(errv.cwiseQuotient(scale(y, y1)));
    if (!std::isfinite(err) || !y1.allFinite()) {
      h = 0.1 * hh;
      ++out.rejected;
      continue;
    }
    if (err <= 1.0) {
      DenseOutput::Step st;
      st.t = t;
      st.h = hs;
      st.r1 = y;
      st.r2 = y1 - y;
      st.r3 = hs * k1 - st.r2;
      st.r4 = st.r2 - hs * k7 - st.r3;
      st.r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      OdeBuilder::push(*dense, std::move(st));
      t = tn;
      y = y1;
      if (project) {
        project(y);
        k1 = f(t, y);
      } else {
        k1 = k7;
      }
      ++out.steps;
      if (land) {
        out.t[next] = t;
        out.y[next] = y;
        ++next;
      }
      double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      // A step shortened to hit a node does not shrink the step size.
      h = land ? std::max(h, hh * fac) : hh * fac;
    } else {
      h = hh * std::max(0.2, 0.9 * std::pow(err, -0.2));
      ++out.rejected;
    }
  }
  out.dense = dense;
  return out;
}

inline Vector flatten(const Matrix& M) { return Eigen::Map<const Vector>(M.data(), M.size()); }

inline Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace turnpike
