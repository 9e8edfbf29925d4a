#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "turnpike/numerics.hpp"

namespace turnpike {

struct LtiPlant {
  Matrix A, B, C, F;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index k() const { return C.rows(); }
  Matrix S() const { return F.transpose() * F; }

  void validate() const {
    require_square(A, "LtiPlant.A");
    if (B.rows() != n()) throw InputError("LtiPlant: B must have n rows");
    if (C.cols() != n()) throw InputError("LtiPlant: C must have n columns");
    if (F.cols() != n()) throw InputError("LtiPlant: F must have n columns");
    if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !F.allFinite())
      throw InputError("LtiPlant: non-finite coefficient");
  }
};

struct SemiExplicitPartition {
  Eigen::Index d = 0;
  Matrix A11, A12, A21, A22, B1, B2, C1, C2, S1, F1;
};

struct DescriptorPlant {
  Matrix E, A, B, C, F;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index k() const { return C.rows(); }

  static DescriptorPlant from_lti(const LtiPlant& p) {
    return {Matrix::Identity(p.n(), p.n()), p.A, p.B, p.C, p.F};
  }

  void validate_dims() const {
    require_square(A, "DescriptorPlant.A");
    require_square(E, "DescriptorPlant.E");
    if (E.rows() != n()) throw InputError("DescriptorPlant: E and A differ in size");
    if (B.rows() != n()) throw InputError("DescriptorPlant: B must have n rows");
    if (C.cols() != n()) throw InputError("DescriptorPlant: C must have n columns");
    if (F.cols() != n()) throw InputError("DescriptorPlant: F must have n columns");
    if (!E.allFinite() || !A.allFinite() || !B.allFinite() || !C.allFinite() || !F.allFinite())
      throw InputError("DescriptorPlant: non-finite coefficient");
  }

  // d such that E = diag(I_d, 0) exactly, or -1.
  Eigen::Index semi_explicit_d() const {
    const Eigen::Index nn = n();
    Eigen::Index d = 0;
    while (d < nn && E(d, d) == 1.0) ++d;
    for (Eigen::Index i = 0; i < nn; ++i)
      for (Eigen::Index j = 0; j < nn; ++j) {
        double want = (i == j && i < d) ? 1.0 : 0.0;
        if (E(i, j) != want) return -1;
      }
    return d;
  }

  void validate() const {
    validate_dims();
    if (semi_explicit_d() < 0)
      throw AssumptionViolation("semi-explicit form", "E must equal diag(I_d, 0) exactly");
  }

  SemiExplicitPartition partition() const {
    validate();
    SemiExplicitPartition p;
    const Eigen::Index d = semi_explicit_d(), a = n() - d;
    p.d = d;
    p.A11 = A.topLeftCorner(d, d);
    p.A12 = A.topRightCorner(d, a);
    p.A21 = A.bottomLeftCorner(a, d);
    p.A22 = A.bottomRightCorner(a, a);
    p.B1 = B.topRows(d);
    p.B2 = B.bottomRows(a);
    p.C1 = C.leftCols(d);
    p.C2 = C.rightCols(a);
    p.F1 = F.leftCols(d);
    p.S1 = p.F1.transpose() * p.F1;
    return p;
  }
};

struct StructuralReport {
  bool regular = false;
  bool impulse_controllable = false;
  bool impulse_free = false;
  bool finite_dynamics_stable = false;
  bool f_compatible = false;
  std::vector<std::string> notes;

  bool all() const {
    return regular && impulse_controllable && impulse_free && finite_dynamics_stable &&
           f_compatible;
  }
};

inline constexpr std::uint32_t kRegularitySeed = 20240607u;

// Invertibility of sE - A at five seeded shifts drawn from [-10, 10].
inline bool check_pencil_regular(const Matrix& E, const Matrix& A, const Tolerances& tol = {},
                                 std::uint32_t seed = kRegularitySeed) {
  require_square(E, "check_pencil_regular");
  require_square(A, "check_pencil_regular");
  if (E.rows() != A.rows()) throw InputError("check_pencil_regular: size mismatch");
  const Eigen::Index n = A.rows();
  if (n == 0) return true;
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (int sample = 0; sample < 5; ++sample) {
    // Resample a few times when the shift lands near a finite eigenvalue.
    for (int attempt = 0; attempt < 4; ++attempt) {
      double s = dist(gen);
      Matrix M = s * E - A;
      if (rank_svd(M, tol) == n) return true;
    }
  }
  return false;
}

inline bool check_impulse_controllable(const Matrix& E, const Matrix& A, const Matrix& B,
                                       const Tolerances& tol = {}) {
  const Eigen::Index n = A.rows(), m = B.cols();
  if (E.rows() != n || E.cols() != n || B.rows() != n)
    throw InputError("check_impulse_controllable: dimension mismatch");
  Matrix M = Matrix::Zero(2 * n, 2 * n + m);
  M.topLeftCorner(n, n) = E;
  M.bottomLeftCorner(n, n) = A;
  M.block(n, n, n, n) = E;
  M.bottomRightCorner(n, m) = B;
  return rank_svd(M, tol) == n + rank_svd(E, tol);
}

inline bool check_impulse_free(const Matrix& E, const Matrix& A, const Tolerances& tol = {}) {
  const Eigen::Index n = A.rows();
  if (E.rows() != n || E.cols() != n) throw InputError("check_impulse_free: dimension mismatch");
  Matrix M = Matrix::Zero(2 * n, 2 * n);
  M.topLeftCorner(n, n) = E;
  M.bottomLeftCorner(n, n) = A;
  M.bottomRightCorner(n, n) = E;
  return rank_svd(M, tol) == n + rank_svd(E, tol);
}

inline Matrix schur_complement(const SemiExplicitPartition& p, const Tolerances& tol = {}) {
  if (p.A22.rows() == 0) return p.A11;
  if (rank_svd(p.A22, tol) < p.A22.rows())
    throw AssumptionViolation("impulse-freeness", "A22 is singular");
  return p.A11 - p.A12 * p.A22.partialPivLu().solve(p.A21);
}

inline bool check_finite_dynamics_stable(const SemiExplicitPartition& p,
                                         const Tolerances& tol = {}) {
  Matrix Sc = schur_complement(p, tol);
  if (Sc.size() == 0) return true;
  return spectral_abscissa(Sc) < 0.0;
}

inline bool check_F_compatible(const Matrix& E, const Matrix& F) {
  DescriptorPlant probe{E, Matrix::Zero(E.rows(), E.cols()), Matrix::Zero(E.rows(), 0),
                        Matrix::Zero(0, E.cols()), F};
  Eigen::Index d = probe.semi_explicit_d();
  if (d < 0) throw AssumptionViolation("semi-explicit form", "E must equal diag(I_d, 0) exactly");
  if (F.cols() != E.cols()) throw InputError("check_F_compatible: F must have n columns");
  Eigen::Index a = E.cols() - d;
  if (a == 0 || F.rows() == 0) return true;
  return F.rightCols(a).cwiseAbs().maxCoeff() <= 1e-12;
}

// Impulse-freeness and finite-dynamics stability are properties of the
// closed loop; pass A_closed (= A - BB*P) to evaluate them there. Without it
// the open-loop pair (E, A) is used.
inline StructuralReport structural_report(const DescriptorPlant& plant,
                                          const Tolerances& tol = {},
                                          const Matrix* A_closed = nullptr,
                                          std::uint32_t seed = kRegularitySeed) {
  plant.validate_dims();
  StructuralReport r;
  r.regular = check_pencil_regular(plant.E, plant.A, tol, seed);
  if (!r.regular) r.notes.push_back("pencil (E, A) is singular at all sampled shifts");
  r.impulse_controllable = check_impulse_controllable(plant.E, plant.A, plant.B, tol);
  if (!r.impulse_controllable) r.notes.push_back("rank test for impulse controllability fails");

  const Matrix& Aloop = A_closed ? *A_closed : plant.A;
  const char* loop = A_closed ? "closed loop" : "open loop";
  if (Aloop.rows() != plant.n() || Aloop.cols() != plant.n())
    throw InputError("structural_report: closed-loop matrix has wrong size");
  r.impulse_free = check_impulse_free(plant.E, Aloop, tol);
  if (!r.impulse_free) r.notes.push_back(std::string("rank test for impulse-freeness fails (") +
                                         loop + ")");
  Eigen::Index d = plant.semi_explicit_d();
  if (d < 0) {
    r.notes.push_back("E is not of the form diag(I_d, 0); partition-based checks skipped");
    return r;
  }
  if (r.impulse_free) {
    DescriptorPlant looped = plant;
    looped.A = Aloop;
    r.finite_dynamics_stable = check_finite_dynamics_stable(looped.partition(), tol);
    if (!r.finite_dynamics_stable)
      r.notes.push_back(std::string("finite dynamics are not stable (") + loop + ")");
  } else {
    r.notes.push_back("finite-dynamics stability needs A22 invertible; not evaluated");
  }
  r.f_compatible = check_F_compatible(plant.E, plant.F);
  if (!r.f_compatible) r.notes.push_back("F acts on algebraic variables");
  return r;
}

}  // namespace turnpike
