#pragma once

#include <memory>
#include <vector>

#include "turnpike/numerics.hpp"
#include "turnpike/system_model.hpp"

namespace turnpike {

struct AreSolution {
  Matrix P_plus;
  Matrix A_plus;  // A - BB*P_plus
  double lambda = 0.0;
  double residual = 0.0;
};

inline AreSolution solve_are(const LtiPlant& plant, const Tolerances& tol = {}) {
  plant.validate();
  AreSolution a;
  a.P_plus = solve_are_stabilizing(plant.A, plant.B, plant.C, tol);
  const Matrix R = plant.B * plant.B.transpose();
  a.A_plus = plant.A - R * a.P_plus;
  a.lambda = spectral_abscissa(a.A_plus);
  a.residual = care_residual(plant.A, R, plant.C.transpose() * plant.C, a.P_plus);
  return a;
}

inline Matrix dre_rhs(const Matrix& A, const Matrix& R, const Matrix& Q, const Matrix& P) {
  // -P' = A*P + PA - PRP + Q
  return -(A.transpose() * P + P * A - P * R * P + Q);
}

struct DreSolution {
  double t1 = 0.0;
  std::vector<double> grid;  // ascending in [0, t1]
  std::vector<Matrix> P;
  Matrix S;
  double residual = 0.0;  // see riccati_fd_residual
  std::shared_ptr<const DenseOutput> dense;

  Matrix at(double t) const {
    const Eigen::Index n = S.rows();
    if (t >= t1) return S;
    return sym(unflatten((*dense)(t), n, n));
  }
};

// Backward difference (P(t_{k+1}) - P(t_k)) / h on the output grid compared with
// the interval mean of the right-hand side (4-point Gauss-Legendre on the dense
// solution), so that the quadrature adds no truncation error of its own.
// Scaled by 1 + |P| + |rhs|; maximum over all grid intervals. eval(t) returns
// the differentiated quantity, rhs(t) its derivative as given by the equation.
template <class RhsFn, class EvalFn>
double riccati_fd_residual(const std::vector<double>& grid, const EvalFn& eval, const RhsFn& rhs) {
  static constexpr double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                   0.8611363115940526};
  static constexpr double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                   0.3478548451374538};
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    double a = grid[k], b = grid[k + 1], h = b - a;
    Matrix Pa = eval(a), Pb = eval(b);
    Matrix mean = Matrix::Zero(Pa.rows(), Pa.cols());
    double fscale = 0.0;
    for (int q = 0; q < 4; ++q) {
      Matrix f = rhs(a + 0.5 * h * (gx[q] + 1.0));
      mean += 0.5 * gw[q] * f;
      fscale = std::max(fscale, f.norm());
    }
    double scale = 1.0 + std::max(Pa.norm(), Pb.norm()) + fscale;
    worst = std::max(worst, ((Pb - Pa) / h - mean).norm() / scale);
  }
  return worst;
}

inline DreSolution solve_dre(const LtiPlant& plant, double t1, int grid, const Tolerances& tol = {}) {
  plant.validate();
  if (!(t1 > 0.0)) throw InputError("solve_dre: t1 must be positive");
  const Eigen::Index n = plant.n();
  const Matrix R = plant.B * plant.B.transpose();
  const Matrix Q = plant.C.transpose() * plant.C;
  const Matrix A = plant.A;
  DreSolution out;
  out.t1 = t1;
  out.S = plant.S();
  auto field = [&](double, const Vector& y) -> Vector {
    return flatten(dre_rhs(A, R, Q, unflatten(y, n, n)));
  };
  auto project = [n](Vector& y) {
    Matrix P = unflatten(y, n, n);
    y = flatten(sym(P));
  };
  OdeTrajectory tr;
  try {
    tr = integrate_ode(field, flatten(out.S), t1, 0.0, tol, grid, project);
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(std::string("solve_dre: finite-time escape or breakdown; ") + e.what());
  }
  out.dense = tr.dense;
  out.grid.resize(grid);
  out.P.resize(grid);
  for (int k = 0; k < grid; ++k) {
    int r = grid - 1 - k;
    out.grid[k] = tr.t[r];
    out.P[k] = sym(unflatten(tr.y[r], n, n));
  }
  out.grid.front() = 0.0;
  out.grid.back() = t1;
  out.P.back() = out.S;
  out.residual = riccati_fd_residual(
      out.grid, [&](double t) { return out.at(t); },
      [&](double t) { return dre_rhs(A, R, Q, out.at(t)); });
  return out;
}

// Whether the feedback u = -B*P x stabilizes the plant.
inline bool is_stabilizing(const LtiPlant& plant, const Matrix& P) {
  return spectral_abscissa(plant.A - plant.B * plant.B.transpose() * P) < 0.0;
}

struct GramianSet {
  Matrix W;
  Matrix A_plus;

  Matrix at(double tau) const {
    Matrix Et = expm(tau * A_plus);
    return W - Et * W * Et.transpose();
  }
};

inline GramianSet gramians(const AreSolution& are, const Matrix& B, const Tolerances& tol = {}) {
  if (!(are.lambda < 0.0))
    throw AssumptionViolation("stabilizing ARE solution", "closed loop is not stable");
  return {solve_lyapunov(are.A_plus, B * B.transpose(), tol), are.A_plus};
}

// Bracket I + W(tau) D is treated as singular when its smallest singular value
// is at the rounding level of the terms that form it.
inline double bracket_threshold(const Matrix& W, const Matrix& D, const Tolerances& tol) {
  return tol.rank_tol(D.rows(), D.cols()) * (1.0 + norm2(W) * norm2(D));
}

struct SlidingTerminal {
  Matrix Delta;  // S - P_plus
  GramianSet gram;
  Tolerances tol;
  double K_sup = 0.0;

  Matrix bracket(double tau) const {
    return Matrix::Identity(Delta.rows(), Delta.cols()) + gram.at(tau) * Delta;
  }

  Matrix at(double tau) const {
    Matrix Wt = gram.at(tau);
    Matrix Bk = Matrix::Identity(Delta.rows(), Delta.cols()) + Wt * Delta;
    if (sigma_min(Bk) <= bracket_threshold(Wt, Delta, tol))
      throw AssumptionViolation("convergence condition",
                                "bracket I + W(tau)(S - P+) singular at tau = " + fmt_time(tau));
    return Bk.transpose().partialPivLu().solve(Delta.transpose()).transpose();
  }
};

inline SlidingTerminal sliding_terminal(const Matrix& S, const AreSolution& are,
                                        const GramianSet& gram, const Tolerances& tol = {}) {
  SlidingTerminal st{S - are.P_plus, gram, tol, 0.0};
  const Matrix I = Matrix::Identity(S.rows(), S.cols());
  Matrix Binf = I + gram.W * st.Delta;
  double k0 = norm2(st.Delta);
  if (sigma_min(Binf) <= bracket_threshold(gram.W, st.Delta, tol)) {
    st.K_sup = std::numeric_limits<double>::infinity();
  } else {
    Matrix Sinf = Binf.transpose().partialPivLu().solve(st.Delta.transpose()).transpose();
    st.K_sup = std::max(k0, norm2(Sinf));
  }
  return st;
}

inline bool check_convergence_condition(const Matrix& S, const AreSolution& are,
                                        const GramianSet& gram, const Tolerances& tol = {}) {
  Matrix D = S - are.P_plus;
  Matrix Bk = Matrix::Identity(S.rows(), S.cols()) + gram.W * D;
  return sigma_min(Bk) > bracket_threshold(gram.W, D, tol);
}

// Closed-form evaluators of the finite-horizon problem on [0, t1].
struct ClosedForms {
  AreSolution are;
  GramianSet gram;
  SlidingTerminal sliding;
  double t1 = 0.0;

  Matrix E(double tau) const { return expm(tau * are.A_plus); }

  Matrix delta(double t) const {
    double tau = t1 - t;
    Matrix Et = E(tau);
    return Et.transpose() * sliding.at(tau) * Et;
  }

  Matrix U(double t) const {
    double tau = t1 - t;
    const Eigen::Index n = are.A_plus.rows();
    return expm(-tau * are.A_plus) *
           (Matrix::Identity(n, n) + gram.at(tau) * sliding.Delta);
  }

  // U(t) U(s)^{-1}
  Matrix forward(double t, double s) const {
    return E(t - s) - gram.at(t - s) * E(t1 - t).transpose() * sliding.at(t1 - s) * E(t1 - s);
  }

  // U(t)^{-*} U(s)^*
  Matrix backward(double t, double s) const {
    return E(s - t).transpose() -
           E(t1 - t).transpose() * sliding.at(t1 - t) * E(t1 - s) * gram.at(s - t);
  }
};

inline ClosedForms closed_forms(const LtiPlant& plant, const AreSolution& are, double t1,
                                const Tolerances& tol = {}) {
  GramianSet g = gramians(are, plant.B, tol);
  SlidingTerminal s = sliding_terminal(plant.S(), are, g, tol);
  return {are, g, s, t1};
}

inline Matrix delta_formula(const Matrix& S, const AreSolution& are, const GramianSet& gram,
                            double t, double t1, const Tolerances& tol = {}) {
  return ClosedForms{are, gram, sliding_terminal(S, are, gram, tol), t1}.delta(t);
}

inline Matrix fundamental_solution_U(const Matrix& S, const AreSolution& are,
                                     const GramianSet& gram, double t, double t1,
                                     const Tolerances& tol = {}) {
  return ClosedForms{are, gram, sliding_terminal(S, are, gram, tol), t1}.U(t);
}

inline Matrix transition_forward(double t, double s, const Matrix& S, const AreSolution& are,
                                 const GramianSet& gram, double t1, const Tolerances& tol = {}) {
  if (t > t1 || s > t1) throw InputError("transition_forward: times must not exceed t1");
  return ClosedForms{are, gram, sliding_terminal(S, are, gram, tol), t1}.forward(t, s);
}

inline Matrix transition_backward(double t, double s, const Matrix& S, const AreSolution& are,
                                  const GramianSet& gram, double t1, const Tolerances& tol = {}) {
  if (t > t1 || s > t1) throw InputError("transition_backward: times must not exceed t1");
  return ClosedForms{are, gram, sliding_terminal(S, are, gram, tol), t1}.backward(t, s);
}

}  // namespace turnpike
