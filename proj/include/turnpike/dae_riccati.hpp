#pragma once

#include <memory>
#include <string>
#include <vector>

#include "turnpike/riccati_flow.hpp"
#include "turnpike/system_model.hpp"

namespace turnpike {

struct FastBlock {
  Matrix P2, K2;
};

namespace detail {

// Symmetric real solutions of A*P + PA - PRP + Q = 0 obtained from invariant
// subspaces of the Hamiltonian spanned by eigenvector subsets (small blocks only).
inline std::vector<Matrix> care_branches(const Matrix& A, const Matrix& R, const Matrix& Q,
                                         const Tolerances& tol) {
  const Eigen::Index a = A.rows();
  std::vector<Matrix> out;
  Matrix H(2 * a, 2 * a);
  H << A, -R, -Q, -A.transpose();
  Eigen::EigenSolver<Matrix> es(H);
  if (es.info() != Eigen::Success) return out;
  const Eigen::Index N = 2 * a;
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    if (__builtin_popcount(mask) != a) continue;
    Eigen::MatrixXcd X(N, a);
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < N; ++i)
      if (mask & (1u << i)) X.col(c++) = es.eigenvectors().col(i);
    Eigen::MatrixXcd X11 = X.topRows(a), X21 = X.bottomRows(a);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(X11);
    const auto& sv = svd.singularValues();
    if (sv(a - 1) <= 1e-10 * sv(0)) continue;
    Eigen::MatrixXcd Pc = X11.transpose().partialPivLu().solve(X21.transpose()).transpose();
    if (Pc.imag().cwiseAbs().maxCoeff() > 1e-8 * (1.0 + Pc.real().norm())) continue;
    Matrix P = sym(Pc.real());
    if (care_residual(A, R, Q, P) > tol.residual * (1.0 + P.norm())) continue;
    bool dup = false;
    for (const auto& q : out)
      if ((q - P).norm() <= 1e-9 * (1.0 + P.norm())) dup = true;
    if (!dup) out.push_back(P);
  }
  return out;
}

}  // namespace detail

// Ordered candidates for the fast block: the stabilizing solution first,
// followed by the remaining symmetric branches for blocks of size <= 2.
inline std::vector<Matrix> fast_block_candidates(const Matrix& A22, const Matrix& B2,
                                                 const Matrix& C2, const Tolerances& tol = {}) {
  const Eigen::Index a = A22.rows();
  if (a == 0) return {Matrix(0, 0)};
  const Matrix R = B2 * B2.transpose(), Q = C2.transpose() * C2;
  std::vector<Matrix> out;
  try {
    out.push_back(solve_care(A22, R, Q, tol));
  } catch (const Error&) {
  }
  if (a <= 2) {
    for (const auto& P : detail::care_branches(A22, R, Q, tol)) {
      bool dup = false;
      for (const auto& q : out)
        if ((q - P).norm() <= 1e-9 * (1.0 + P.norm())) dup = true;
      if (!dup) out.push_back(P);
    }
  }
  return out;
}

inline Matrix fast_block_K2(const Matrix& A22, const Matrix& B2, const Matrix& P2) {
  return A22.transpose() - P2 * B2 * B2.transpose();
}

// In the normal form A22 = -I the reduced cost is indefinite once the largest
// singular value of C2 B2 exceeds one.
inline void check_fast_block_definiteness(const Matrix& A22, const Matrix& B2, const Matrix& C2) {
  const Eigen::Index a = A22.rows();
  if (a == 0 || C2.rows() == 0 || B2.cols() == 0) return;
  if ((A22 + Matrix::Identity(a, a)).cwiseAbs().maxCoeff() > 1e-14) return;
  double s = norm2(C2 * B2);
  if (s > 1.0)
    throw AssumptionViolation("reduced cost definiteness",
                              "largest singular value of C2 B2 is " + std::to_string(s) + " > 1");
}

inline FastBlock solve_fast_block(const Matrix& A22, const Matrix& B2, const Matrix& C2,
                                  const Tolerances& tol = {}) {
  check_fast_block_definiteness(A22, B2, C2);
  for (const auto& P2 : fast_block_candidates(A22, B2, C2, tol)) {
    Matrix K2 = fast_block_K2(A22, B2, P2);
    if (rank_svd(K2, tol) == K2.rows()) return {P2, K2};
  }
  throw AssumptionViolation("fast block", "no symmetric fast-block solution with invertible K2");
}

struct ReducedCoefficients {
  Matrix A_tilde, R_tilde, Q_tilde;
  Matrix G;     // R_tilde = G G*
  Matrix M, N;  // P21 = M P1 + N
};

inline ReducedCoefficients reduced_coefficients(const SemiExplicitPartition& p, const Matrix& P2,
                                                const Tolerances& tol = {}) {
  const Eigen::Index d = p.d, a = p.A22.rows();
  ReducedCoefficients rc;
  if (a == 0) {
    rc.M = Matrix::Zero(0, d);
    rc.N = Matrix::Zero(0, d);
    rc.G = p.B1;
  } else {
    Matrix K2 = fast_block_K2(p.A22, p.B2, P2);
    if (rank_svd(K2, tol) < a) throw AssumptionViolation("fast block", "K2 is singular");
    auto lu = K2.fullPivLu();
    rc.M = -lu.solve(p.A12.transpose() - P2 * p.B2 * p.B1.transpose());
    rc.N = -lu.solve(P2 * p.A21 + p.C2.transpose() * p.C1);
    rc.G = p.B1 + rc.M.transpose() * p.B2;
  }
  rc.R_tilde = rc.G * rc.G.transpose();
  rc.A_tilde = p.A11 + rc.M.transpose() * p.A21 - rc.G * p.B2.transpose() * rc.N;
  rc.Q_tilde = sym(p.C1.transpose() * p.C1 + p.A21.transpose() * rc.N +
                   rc.N.transpose() * p.A21 - rc.N.transpose() * p.B2 * p.B2.transpose() * rc.N);
  if (d > 0 && min_eig_sym(rc.Q_tilde) < -tol.psd_slack)
    throw AssumptionViolation("reduced cost definiteness", "Q_tilde is indefinite");
  return rc;
}

inline Matrix gare_residual_matrix(const DescriptorPlant& plant, const Matrix& P) {
  return plant.A.transpose() * P + P.transpose() * plant.A -
         P.transpose() * plant.B * plant.B.transpose() * P + plant.C.transpose() * plant.C;
}

struct GareSolution {
  SemiExplicitPartition part;
  Matrix P1, P21, P2, K2;
  Matrix P_plus;  // [[P1, 0], [P21, P2]]
  Matrix A_plus;
  Matrix Ap1, Ap12, Ap21, Ap2;
  Matrix A_bar, B_bar, C_bar;
  double lambda_bar = 0.0;
  double residual = 0.0;
  ReducedCoefficients reduced;
  Matrix W_bar;
  std::vector<std::string> notes;

  Matrix assemble(const Matrix& P1t) const {
    const Eigen::Index d = part.d, a = P2.rows();
    Matrix P = Matrix::Zero(d + a, d + a);
    P.topLeftCorner(d, d) = P1t;
    P.bottomLeftCorner(a, d) = reduced.M * P1t + reduced.N;
    P.bottomRightCorner(a, a) = P2;
    return P;
  }

  // Reduced closed-loop data packaged for the ODE closed forms.
  AreSolution reduced_are() const { return {P1, A_bar, lambda_bar, 0.0}; }
  GramianSet reduced_gramian() const { return {W_bar, A_bar}; }
};

inline GareSolution solve_gare(const DescriptorPlant& plant, const Tolerances& tol = {}) {
  plant.validate();
  if (!check_pencil_regular(plant.E, plant.A, tol))
    throw AssumptionViolation("regularity", "pencil (E, A) is not regular");
  if (!check_impulse_controllable(plant.E, plant.A, plant.B, tol))
    throw AssumptionViolation("impulse controllability", "rank test fails");
  if (!check_F_compatible(plant.E, plant.F))
    throw AssumptionViolation("F compatibility", "F acts on algebraic variables");

  const SemiExplicitPartition part = plant.partition();
  const Eigen::Index d = part.d, a = part.A22.rows();
  check_fast_block_definiteness(part.A22, part.B2, part.C2);
  std::vector<Matrix> cands = fast_block_candidates(part.A22, part.B2, part.C2, tol);
  if (cands.empty())
    throw AssumptionViolation("fast block", "no symmetric solution of the fast-block equation");

  std::string last_failure = "no candidate";
  for (std::size_t ci = 0; ci < cands.size(); ++ci) {
    const Matrix& P2 = cands[ci];
    GareSolution g;
    g.part = part;
    g.P2 = P2;
    try {
      g.K2 = fast_block_K2(part.A22, part.B2, P2);
      if (a > 0 && rank_svd(g.K2, tol) < a) {
        last_failure = "K2 singular";
        continue;
      }
      g.reduced = reduced_coefficients(part, P2, tol);
      g.P1 = d > 0 ? solve_care(g.reduced.A_tilde, g.reduced.R_tilde, g.reduced.Q_tilde, tol)
                   : Matrix(0, 0);
      g.P21 = g.reduced.M * g.P1 + g.reduced.N;
      g.P_plus = g.assemble(g.P1);
      g.A_plus = plant.A - plant.B * plant.B.transpose() * g.P_plus;
      g.Ap1 = g.A_plus.topLeftCorner(d, d);
      g.Ap12 = g.A_plus.topRightCorner(d, a);
      g.Ap21 = g.A_plus.bottomLeftCorner(a, d);
      g.Ap2 = g.A_plus.bottomRightCorner(a, a);
      if (a > 0 && rank_svd(g.Ap2, tol) < a) {
        last_failure = "closed loop is not impulse-free";
        continue;
      }
      if (a > 0) {
        auto lu = g.Ap2.partialPivLu();
        g.A_bar = g.Ap1 - g.Ap12 * lu.solve(g.Ap21);
        g.B_bar = part.B1 - g.Ap12 * lu.solve(part.B2);
        g.C_bar = part.C1 - part.C2 * lu.solve(g.Ap21);
      } else {
        g.A_bar = g.Ap1;
        g.B_bar = part.B1;
        g.C_bar = part.C1;
      }
      g.lambda_bar = spectral_abscissa(g.A_bar);
      if (d > 0 && !(g.lambda_bar < 0.0)) {
        last_failure = "finite dynamics of the closed loop are not stable";
        continue;
      }
      g.residual = gare_residual_matrix(plant, g.P_plus).norm();
      if (g.residual > tol.residual * (1.0 + g.P_plus.norm())) {
        last_failure = "gARE residual " + std::to_string(g.residual);
        continue;
      }
      g.W_bar = d > 0 ? solve_lyapunov(g.A_bar, g.B_bar * g.B_bar.transpose(), tol)
                      : Matrix(0, 0);
      if (ci > 0) g.notes.push_back("fast block: stabilizing branch rejected, using alternative");
      return g;
    } catch (const AssumptionViolation& e) {
      last_failure = e.what();
    } catch (const NumericalFailure& e) {
      last_failure = e.what();
    }
  }
  throw AssumptionViolation("stabilizing gARE solution", last_failure);
}

struct GdreSolution {
  double t1 = 0.0;
  std::vector<double> grid;
  std::vector<Matrix> P1, P21;
  Matrix P2, Q_tilde, A_tilde, R_tilde;
  Matrix S1;
  double residual = 0.0;
  std::shared_ptr<const DenseOutput> dense;
  const GareSolution* gare = nullptr;

  Matrix P1_at(double t) const {
    const Eigen::Index d = S1.rows();
    if (t >= t1) return S1;
    return sym(unflatten((*dense)(t), d, d));
  }
  Matrix P_at(double t) const { return gare->assemble(P1_at(t)); }
};

// The GareSolution must outlive the returned object.
inline GdreSolution solve_gdre(const DescriptorPlant& plant, const GareSolution& gare, double t1,
                               int grid, const Tolerances& tol = {}) {
  if (!(t1 > 0.0)) throw InputError("solve_gdre: t1 must be positive");
  const auto& rc = gare.reduced;
  const Eigen::Index d = gare.part.d;
  GdreSolution out;
  out.t1 = t1;
  out.gare = &gare;
  out.P2 = gare.P2;
  out.Q_tilde = rc.Q_tilde;
  out.A_tilde = rc.A_tilde;
  out.R_tilde = rc.R_tilde;
  out.S1 = gare.part.S1;
  if (d > 0 && min_eig_sym(rc.Q_tilde) < -tol.psd_slack)
    throw AssumptionViolation("reduced cost definiteness", "Q_tilde is indefinite");

  const Matrix At = rc.A_tilde, Rt = rc.R_tilde, Qt = rc.Q_tilde;
  auto field = [&](double, const Vector& y) -> Vector {
    return flatten(dre_rhs(At, Rt, Qt, unflatten(y, d, d)));
  };
  auto project = [d](Vector& y) { y = flatten(sym(unflatten(y, d, d))); };
  OdeTrajectory tr;
  try {
    tr = integrate_ode(field, flatten(out.S1), t1, 0.0, tol, grid, project);
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(std::string("solve_gdre: ") + e.what());
  }
  out.dense = tr.dense;
  for (int k = 0; k < grid; ++k) {
    int r = grid - 1 - k;
    out.grid.push_back(k == 0 ? 0.0 : (k == grid - 1 ? t1 : tr.t[r]));
    Matrix P1 = k == grid - 1 ? out.S1 : sym(unflatten(tr.y[r], d, d));
    out.P1.push_back(P1);
    out.P21.push_back(rc.M * P1 + rc.N);
  }

  // -d/dt (E*P) = A*P + P*A - P*BB*P + C*C on all blocks.
  const Matrix E = plant.E;
  out.residual = riccati_fd_residual(
      out.grid, [&](double t) -> Matrix { return E.transpose() * out.P_at(t); },
      [&](double t) -> Matrix { return -gare_residual_matrix(plant, out.P_at(t)); });
  if (out.residual > 10.0 * tol.ode_rel)
    throw NumericalFailure("solve_gdre: gDRE residual " + std::to_string(out.residual) +
                           " exceeds 10x the integration tolerance");
  return out;
}

struct StructuredDelta {
  ClosedForms reduced;  // on (A_bar, W_bar, S1 - P1)
  Matrix coupling;      // -Ap2^{-*} Ap12^*
  Eigen::Index n = 0;

  Matrix P_delta1(double t) const { return reduced.delta(t); }

  Matrix P_delta(double t) const {
    const Eigen::Index d = coupling.cols(), a = coupling.rows();
    Matrix D1 = P_delta1(t);
    Matrix P = Matrix::Zero(d + a, d + a);
    P.topLeftCorner(d, d) = D1;
    P.bottomLeftCorner(a, d) = coupling * D1;
    return P;
  }
};

inline bool check_dae_convergence_condition(const GareSolution& gare, const Matrix& S1,
                                            const Tolerances& tol = {}) {
  return check_convergence_condition(S1, gare.reduced_are(), gare.reduced_gramian(), tol);
}

inline StructuredDelta structured_delta(const GareSolution& gare, const Matrix& S1, double t1,
                                        const Tolerances& tol = {}) {
  if (!check_dae_convergence_condition(gare, S1, tol))
    throw AssumptionViolation("finite dynamics convergence condition",
                              "I + W_bar (S1 - P1) is singular");
  StructuredDelta sd;
  AreSolution ra = gare.reduced_are();
  GramianSet rg = gare.reduced_gramian();
  sd.reduced = ClosedForms{ra, rg, sliding_terminal(S1, ra, rg, tol), t1};
  const Eigen::Index a = gare.Ap2.rows();
  sd.coupling = a > 0 ? Matrix(-gare.Ap2.transpose().partialPivLu().solve(gare.Ap12.transpose()))
                      : Matrix(0, gare.part.d);
  sd.n = gare.part.d + a;
  return sd;
}

struct DecoupledClosedLoop {
  Matrix A1_hat, A2_hat;
};

inline DecoupledClosedLoop decoupled_closed_loop(const GareSolution& gare,
                                                 const Matrix& P_delta1) {
  DecoupledClosedLoop dc;
  const Eigen::Index a = gare.Ap2.rows(), d = gare.part.d;
  dc.A1_hat = gare.A_bar - gare.B_bar * gare.B_bar.transpose() * P_delta1;
  if (a == 0) {
    dc.A2_hat = Matrix(0, d);
    return dc;
  }
  auto lu = gare.Ap2.partialPivLu();
  dc.A2_hat = -lu.solve(gare.Ap21) +
              lu.solve(gare.part.B2 * gare.B_bar.transpose() * P_delta1);
  return dc;
}

inline DecoupledClosedLoop decoupled_closed_loop(const GareSolution& gare,
                                                 const StructuredDelta& delta, double t) {
  return decoupled_closed_loop(gare, delta.P_delta1(t));
}

}  // namespace turnpike
