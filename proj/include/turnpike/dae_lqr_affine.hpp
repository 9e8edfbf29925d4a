#pragma once

#include <functional>
#include <string>
#include <vector>

#include "turnpike/dae_riccati.hpp"
#include "turnpike/lqr_affine.hpp"

namespace turnpike {

struct DaeSteady {
  Vector x_s, u_s, x_s1, w_s, p_s;
  Vector w1_const;  // Abar^{-*} Cbar* y_c
  Vector w2_const;  // Ap2^{-*} C2* y_c
  double residual = 0.0;      // |A x_s + B u_s|
  double kkt_adjoint = 0.0;   // |A* p_s + C*(C x_s - y_c)|
  double kkt_input = 0.0;     // |u_s + B* p_s|
};

namespace detail {

// Pieces shared by the steady state, the feedforward and the trajectory.
struct DaeAffineData {
  Matrix Ap2_inv, Ap2_invT;
  Matrix BbBbT, BbB2T;
  Vector cc;      // Ap2^{-*} C2* y_c
  Vector Cby;     // Cbar* y_c
  Matrix w2_map;  // -Ap2^{-*} Ap12*
};

inline DaeAffineData dae_affine_data(const GareSolution& g, const Vector& y_c) {
  const auto& p = g.part;
  const Eigen::Index a = g.Ap2.rows(), d = p.d;
  DaeAffineData D;
  if (a > 0) {
    D.Ap2_inv = g.Ap2.inverse();
    D.Ap2_invT = D.Ap2_inv.transpose();
    D.cc = D.Ap2_invT * (p.C2.transpose() * y_c);
    D.w2_map = -D.Ap2_invT * g.Ap12.transpose();
  } else {
    D.Ap2_inv = D.Ap2_invT = Matrix(0, 0);
    D.cc = Vector(0);
    D.w2_map = Matrix(0, d);
  }
  D.BbBbT = g.B_bar * g.B_bar.transpose();
  D.BbB2T = g.B_bar * p.B2.transpose();
  D.Cby = g.C_bar.transpose() * y_c;
  return D;
}

// x2 from x1 and w1 given the finite-dynamics deviation P_delta1.
inline Vector dae_x2(const GareSolution& g, const DaeAffineData& D, const Matrix& Pd1,
                     const Vector& x1, const Vector& w1) {
  const auto& p = g.part;
  if (g.Ap2.rows() == 0) return Vector(0);
  Vector Bw = g.B_bar.transpose() * w1 + p.B2.transpose() * D.cc;
  return -D.Ap2_inv * ((g.Ap21 - p.B2 * g.B_bar.transpose() * Pd1) * x1) + D.Ap2_inv * (p.B2 * Bw);
}

}  // namespace detail

inline DaeSteady dae_steady_state(const DescriptorPlant& plant, const GareSolution& g,
                                  const Vector& y_c, const Tolerances& tol = {}) {
  if (y_c.size() != plant.k()) throw InputError("dae_steady_state: y_c has wrong length");
  const auto& p = g.part;
  const Eigen::Index d = p.d;
  auto D = detail::dae_affine_data(g, y_c);
  DaeSteady s;
  if (d > 0) {
    s.w1_const = g.A_bar.transpose().partialPivLu().solve(D.Cby);
    Vector Bw = g.B_bar.transpose() * s.w1_const + p.B2.transpose() * D.cc;
    s.x_s1 = g.A_bar.partialPivLu().solve(g.B_bar * Bw);
  } else {
    s.w1_const = Vector(0);
    s.x_s1 = Vector(0);
  }
  s.w2_const = D.cc;
  Vector x2 = detail::dae_x2(g, D, Matrix::Zero(d, d), s.x_s1, s.w1_const);
  s.x_s.resize(plant.n());
  s.x_s << s.x_s1, x2;
  s.w_s.resize(plant.n());
  s.w_s << s.w1_const, D.w2_map * s.w1_const + D.cc;
  s.p_s = g.P_plus * s.x_s + s.w_s;
  s.u_s = -plant.B.transpose() * s.p_s;
  s.residual = (plant.A * s.x_s + plant.B * s.u_s).norm();
  s.kkt_adjoint =
      (plant.A.transpose() * s.p_s + plant.C.transpose() * (plant.C * s.x_s - y_c)).norm();
  s.kkt_input = (s.u_s + plant.B.transpose() * s.p_s).norm();
  double scale = 1.0 + plant.A.norm() + plant.B.norm() + plant.C.norm() + y_c.norm() +
                 s.x_s.norm() + s.p_s.norm();
  double bound = std::max(1e-10, 100 * tol.rank_tol(plant.n(), plant.n())) * scale;
  if (std::max({s.residual, s.kkt_adjoint}) > bound)
    throw NumericalFailure("dae_steady_state: steady residual exceeds tolerance");
  return s;
}

struct DaeFeedforward {
  std::vector<double> grid;
  std::vector<Vector> w1, w2;
  std::shared_ptr<const DenseOutput> dense;  // w1
  Vector w1_terminal;
  double t1 = 0.0;

  Vector w1_at(double t) const { return t >= t1 ? w1_terminal : Vector((*dense)(t)); }
};

using DeltaFn = std::function<Matrix(double)>;

// Backward integration of
//   -w1' = (Abar* - Pd1 Bbar Bbar*) w1 - Cbar* y_c - Pd1 Bbar B2* cc,  w1(t1) = -F1* y_e,
// with w2 = -Ap2^{-*} Ap12* w1 + cc.
inline DaeFeedforward dae_feedforward(const GareSolution& g, const DeltaFn& Pd1, const Vector& y_c,
                                      const Vector& y_e, double t1, int grid,
                                      const Tolerances& tol = {}) {
  const auto& p = g.part;
  if (y_e.size() != p.F1.rows()) throw InputError("dae_feedforward: y_e has wrong length");
  auto D = detail::dae_affine_data(g, y_c);
  const Eigen::Index d = p.d;
  DaeFeedforward out;
  out.t1 = t1;
  out.w1_terminal = -p.F1.transpose() * y_e;
  const Matrix AbT = g.A_bar.transpose();
  const Vector src = D.BbB2T * D.cc;
  auto field = [&](double t, const Vector& w) -> Vector {
    Matrix P = Pd1(t);
    return -(AbT * w - P * (D.BbBbT * w) - D.Cby - P * src);
  };
  OdeTrajectory tr;
  if (d > 0) {
    tr = integrate_ode(field, out.w1_terminal, t1, 0.0, tol, grid);
    out.dense = tr.dense;
  }
  for (int k = 0; k < grid; ++k) {
    double t = k == grid - 1 ? t1 : (k == 0 ? 0.0 : tr.t.empty() ? 0.0 : tr.t[grid - 1 - k]);
    Vector w1 = d > 0 ? (k == grid - 1 ? out.w1_terminal : tr.y[grid - 1 - k]) : Vector(0);
    out.grid.push_back(d > 0 ? t : t1 * k / (grid - 1.0));
    out.w1.push_back(w1);
    out.w2.push_back(D.w2_map * w1 + D.cc);
  }
  return out;
}

struct DaeTrajectory {
  std::vector<double> grid;
  std::vector<Vector> x1, x2, x, u, w1, w2, y;
  double cost = 0.0;
  double algebraic_residual = 0.0;  // max node |A21 x1 + A22 x2 + B2 u|
  std::vector<std::string> notes;
  std::string provenance;
};

inline DaeTrajectory dae_optimal_trajectory(const DescriptorPlant& plant, const Vector& x0,
                                            const Vector& y_c, const Vector& y_e, double t1,
                                            int grid, const Tolerances& tol = {}) {
  plant.validate();
  if (x0.size() != plant.n()) throw InputError("dae_optimal_trajectory: x0 has wrong length");
  if (y_c.size() != plant.k()) throw InputError("dae_optimal_trajectory: y_c has wrong length");
  if (y_e.size() != plant.F.rows())
    throw InputError("dae_optimal_trajectory: y_e has wrong length");
  GareSolution g = solve_gare(plant, tol);
  GdreSolution gd = solve_gdre(plant, g, t1, grid, tol);
  const auto& p = g.part;
  const Eigen::Index d = p.d;
  const Matrix P1p = g.P1;
  DeltaFn Pd1 = [&](double t) -> Matrix { return gd.P1_at(t) - P1p; };

  DaeFeedforward ff = dae_feedforward(g, Pd1, y_c, y_e, t1, grid, tol);
  auto D = detail::dae_affine_data(g, y_c);
  const Vector src = D.BbB2T * D.cc;
  auto field = [&](double t, const Vector& x1) -> Vector {
    Matrix P = Pd1(t);
    return (g.A_bar - D.BbBbT * P) * x1 - D.BbBbT * ff.w1_at(t) - src;
  };
  Vector x10 = x0.head(d);
  OdeTrajectory xs = d > 0 ? integrate_ode(field, x10, 0.0, t1, tol, grid) : OdeTrajectory{};

  DaeTrajectory out;
  out.provenance = "P1: backward reduced DRE integration; w1: backward integration; "
                   "x1: forward integration; x2: algebraic reconstruction";
  out.grid = gd.grid;
  double scale = 1.0;
  for (int k = 0; k < grid; ++k) {
    double t = out.grid[k];
    Vector x1 = d > 0 ? xs.y[k] : Vector(0);
    Vector w1 = ff.w1[k];
    Vector x2 = detail::dae_x2(g, D, Pd1(t), x1, w1);
    Vector x(plant.n()), w(plant.n());
    x << x1, x2;
    w << w1, ff.w2[k];
    Vector u = -plant.B.transpose() * (gd.P_at(t) * x + w);
    out.x1.push_back(x1);
    out.x2.push_back(x2);
    out.x.push_back(x);
    out.w1.push_back(w1);
    out.w2.push_back(ff.w2[k]);
    out.u.push_back(u);
    out.y.push_back(plant.C * x);
    Vector alg = p.A21 * x1 + p.A22 * x2 + p.B2 * u;
    out.algebraic_residual = std::max(out.algebraic_residual, alg.size() ? alg.norm() : 0.0);
    scale = std::max(scale, x.norm() + u.norm());
  }
  if (x0.size() > d && (x0.tail(x0.size() - d) - out.x2.front()).norm() > 1e-12)
    out.notes.push_back("x2(0) taken from the algebraic relation; supplied value ignored");
  if (out.algebraic_residual > 1e-8 * scale)
    throw NumericalFailure("dae_optimal_trajectory: algebraic residual " +
                           std::to_string(out.algebraic_residual));
  out.cost = quadratic_cost(out.grid, out.x, out.u, plant.C, plant.F, y_c, y_e);
  return out;
}

inline TurnpikeReport dae_turnpike_report(const DaeTrajectory& traj, const DaeSteady& steady,
                                          double lambda_bar) {
  std::vector<double> dx, du;
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    dx.push_back((traj.x[k] - steady.x_s).norm());
    du.push_back((traj.u[k] - steady.u_s).norm());
  }
  TurnpikeReport r = turnpike_fit(traj.grid, dx, du, lambda_bar);
  r.x_s = steady.x_s;
  r.u_s = steady.u_s;
  return r;
}

}  // namespace turnpike
