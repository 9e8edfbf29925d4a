#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "turnpike/riccati_flow.hpp"

namespace turnpike {

struct SteadyState {
  Vector x_s, u_s, w_s, lambda_s;
  double kkt_state = 0.0;    // |A x_s + B u_s|
  double kkt_adjoint = 0.0;  // |A* lambda_s + C*(C x_s - y_c)|
  double kkt_input = 0.0;    // |u_s + B* lambda_s|
};

inline SteadyState steady_state(const LtiPlant& plant, const AreSolution& are, const Vector& y_c,
                                const Tolerances& tol = {}) {
  plant.validate();
  if (y_c.size() != plant.k()) throw InputError("steady_state: y_c has wrong length");
  if (!(are.lambda < 0.0))
    throw AssumptionViolation("stabilizing ARE solution", "closed loop is not stable");
  auto lu = are.A_plus.partialPivLu();
  auto luT = are.A_plus.transpose().partialPivLu();
  SteadyState s;
  Vector Cy = plant.C.transpose() * y_c;
  s.w_s = luT.solve(Cy);
  s.x_s = lu.solve(plant.B * (plant.B.transpose() * s.w_s));
  s.u_s = -plant.B.transpose() * (are.P_plus * s.x_s + s.w_s);
  s.lambda_s = are.P_plus * s.x_s + s.w_s;
  s.kkt_state = (plant.A * s.x_s + plant.B * s.u_s).norm();
  s.kkt_adjoint =
      (plant.A.transpose() * s.lambda_s + plant.C.transpose() * (plant.C * s.x_s - y_c)).norm();
  s.kkt_input = (s.u_s + plant.B.transpose() * s.lambda_s).norm();
  double scale = 1.0 + plant.A.norm() + plant.B.norm() + plant.C.norm() + y_c.norm() +
                 s.x_s.norm() + s.lambda_s.norm();
  double bound = std::max(1e-10, 100 * tol.rank_tol(plant.n(), plant.n())) * scale;
  if (std::max({s.kkt_state, s.kkt_adjoint, s.kkt_input}) > bound)
    throw NumericalFailure("steady_state: KKT residual exceeds tolerance");
  return s;
}

// Closed forms of the feedforward and its homogeneous/particular parts.
struct FeedforwardForms {
  ClosedForms cf;
  Matrix A_plus_inv;
  Vector Fy, Cy;  // F* y_e and C* y_c

  Vector w_h(double t) const {
    double tau = cf.t1 - t;
    const Eigen::Index n = Fy.size();
    Matrix Et = cf.E(tau);
    Matrix St = cf.sliding.at(tau);
    return -Et.transpose() * ((Matrix::Identity(n, n) - St * cf.gram.at(tau)) * Fy);
  }

  Vector w_p(double t) const {
    double tau = cf.t1 - t;
    const Eigen::Index n = Cy.size();
    const Matrix I = Matrix::Identity(n, n);
    Matrix Et = cf.E(tau);
    Matrix St = cf.sliding.at(tau);
    const Matrix& W = cf.gram.W;
    Matrix Ainv = A_plus_inv, AinvT = A_plus_inv.transpose();
    Matrix inner = Ainv * (I - Et) * W - Et * W * (I - Et.transpose()) * AinvT;
    return AinvT * ((I - Et.transpose()) * Cy) - Et.transpose() * (St * (inner * Cy));
  }

  Vector w(double t) const { return w_h(t) + w_p(t); }
};

inline FeedforwardForms feedforward_forms(const LtiPlant& plant, const ClosedForms& cf,
                                          const Vector& y_c, const Vector& y_e) {
  if (y_c.size() != plant.k()) throw InputError("feedforward: y_c has wrong length");
  if (y_e.size() != plant.F.rows()) throw InputError("feedforward: y_e has wrong length");
  return {cf, cf.are.A_plus.inverse(), plant.F.transpose() * y_e, plant.C.transpose() * y_c};
}

struct FeedforwardTrajectory {
  std::vector<double> grid;
  std::vector<Vector> w, w_h, w_p;
  std::vector<Vector> w_integrated;
  double max_discrepancy = 0.0;  // closed forms vs backward integration
};

// Backward integration of -w' = (A - BB*P)* w - C* y_c, w(t1) = -F* y_e.
inline OdeTrajectory integrate_feedforward(const LtiPlant& plant, const DreSolution& dre,
                                           const Vector& y_c, const Vector& y_e, int grid,
                                           const Tolerances& tol) {
  const Matrix R = plant.B * plant.B.transpose();
  const Vector Cy = plant.C.transpose() * y_c;
  const Matrix At = plant.A.transpose();
  auto field = [&](double t, const Vector& w) -> Vector {
    Matrix P = dre.at(t);
    return -(At * w - P * (R * w) - Cy);
  };
  return integrate_ode(field, -plant.F.transpose() * y_e, dre.t1, 0.0, tol, grid);
}

inline FeedforwardTrajectory feedforward(const LtiPlant& plant, const ClosedForms& cf,
                                         const DreSolution& dre, const Vector& y_c,
                                         const Vector& y_e, int grid, const Tolerances& tol = {}) {
  FeedforwardForms ff = feedforward_forms(plant, cf, y_c, y_e);
  FeedforwardTrajectory out;
  OdeTrajectory integ = integrate_feedforward(plant, dre, y_c, y_e, grid, tol);
  for (int k = 0; k < grid; ++k) {
    double t = k == grid - 1 ? cf.t1 : cf.t1 * static_cast<double>(k) / (grid - 1);
    out.grid.push_back(t);
    out.w_h.push_back(ff.w_h(t));
    out.w_p.push_back(ff.w_p(t));
    out.w.push_back(out.w_h.back() + out.w_p.back());
    out.w_integrated.push_back(integ.y[grid - 1 - k]);
    out.max_discrepancy =
        std::max(out.max_discrepancy, (out.w.back() - out.w_integrated.back()).norm());
  }
  out.w.back() = -plant.F.transpose() * y_e;
  return out;
}

struct OptimalTrajectory {
  std::vector<double> grid;
  std::vector<Vector> x, u, y, w;
  double cost = 0.0;
  std::string provenance;
};

inline double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) s += 0.5 * (t[k + 1] - t[k]) * (f[k] + f[k + 1]);
  return s;
}

inline double quadratic_cost(const std::vector<double>& grid, const std::vector<Vector>& x,
                             const std::vector<Vector>& u, const Matrix& C, const Matrix& F,
                             const Vector& y_c, const Vector& y_e) {
  std::vector<double> run(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    run[k] = 0.5 * (C * x[k] - y_c).squaredNorm() + 0.5 * u[k].squaredNorm();
  return trapezoid(grid, run) + 0.5 * (F * x.back() - y_e).squaredNorm();
}

inline OptimalTrajectory optimal_trajectory(const LtiPlant& plant, const Vector& x0,
                                            const Vector& y_c, const Vector& y_e, double t1,
                                            int grid, const Tolerances& tol = {}) {
  plant.validate();
  if (x0.size() != plant.n()) throw InputError("optimal_trajectory: x0 has wrong length");
  if (y_c.size() != plant.k()) throw InputError("optimal_trajectory: y_c has wrong length");
  if (y_e.size() != plant.F.rows()) throw InputError("optimal_trajectory: y_e has wrong length");
  DreSolution dre = solve_dre(plant, t1, grid, tol);
  const Matrix R = plant.B * plant.B.transpose();

  std::optional<FeedforwardForms> ff;
  std::shared_ptr<const DenseOutput> w_dense;
  std::string prov = "P: backward DRE integration; ";
  try {
    AreSolution are = solve_are(plant, tol);
    GramianSet g = gramians(are, plant.B, tol);
    if (check_convergence_condition(plant.S(), are, g, tol)) {
      ff = feedforward_forms(plant, closed_forms(plant, are, t1, tol), y_c, y_e);
      prov += "w: closed forms";
    }
  } catch (const AssumptionViolation&) {
  }
  if (!ff) {
    w_dense = integrate_feedforward(plant, dre, y_c, y_e, 2, tol).dense;
    prov += "w: backward integration";
  }
  auto w_at = [&](double t) -> Vector {
    if (t >= t1) return -plant.F.transpose() * y_e;
    return ff ? ff->w(t) : (*w_dense)(t);
  };

  auto field = [&](double t, const Vector& x) -> Vector {
    Matrix P = dre.at(t);
    return plant.A * x - R * (P * x + w_at(t));
  };
  OdeTrajectory xs = integrate_ode(field, x0, 0.0, t1, tol, grid);

  OptimalTrajectory out;
  out.provenance = prov + "; x: forward closed-loop integration";
  out.grid = dre.grid;
  for (int k = 0; k < grid; ++k) {
    double t = out.grid[k];
    Vector w = w_at(t);
    const Vector& x = xs.y[k];
    out.x.push_back(x);
    out.w.push_back(w);
    out.u.push_back(-plant.B.transpose() * (dre.P[k] * x + w));
    out.y.push_back(plant.C * x);
  }
  out.cost = quadratic_cost(out.grid, out.x, out.u, plant.C, plant.F, y_c, y_e);
  return out;
}

struct StateDecomposition {
  std::vector<double> grid;
  std::vector<Vector> x_h, transient, g;
  Vector x_s;
};

inline StateDecomposition decompose_state(const OptimalTrajectory& traj, const ClosedForms& cf,
                                          const SteadyState& steady, const Vector& x0) {
  StateDecomposition d;
  d.grid = traj.grid;
  d.x_s = steady.x_s;
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    double t = traj.grid[k];
    Vector xh = cf.forward(t, 0.0) * x0;
    Vector tr = cf.E(t) * steady.x_s;
    d.x_h.push_back(xh);
    d.transient.push_back(tr);
    d.g.push_back(traj.x[k] - xh - steady.x_s + tr);
  }
  return d;
}

struct TurnpikeReport {
  Vector x_s, u_s;
  double lambda_hat = 0.0;   // fitted decay rate
  double lambda_head = 0.0;  // one-sided slope of the initial layer
  double lambda_tail = 0.0;  // one-sided slope of the terminal layer (in t1 - t)
  double rate = 0.0;         // rate used for the envelope
  double C_hat = 0.0;
  double C_hat_u = 0.0;
  double max_violation = 0.0;  // max of dist / envelope over all nodes
  bool envelope_holds = false;
  bool degenerate = false;
  std::vector<double> grid, dist_x, dist_u, envelope;
};

namespace detail {

inline double log_slope(const std::vector<double>& s, const std::vector<double>& d) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(d[k] >= 1e-14)) continue;
    double l = std::log(d[k]);
    sx += s[k];
    sy += l;
    sxx += s[k] * s[k];
    sxy += s[k] * l;
    ++cnt;
  }
  double den = cnt * sxx - sx * sx;
  if (cnt < 2 || !(den > 0)) return std::numeric_limits<double>::quiet_NaN();
  return (cnt * sxy - sx * sy) / den;
}

}  // namespace detail

// One-sided least-squares slopes of log|x - x_s| over the initial window
// [0, t1/4] (against t) and the terminal window [3t1/4, t1] (against t1 - t).
// lambda_hat is the steeper of the decaying slopes: polynomial factors of a
// non-normal closed loop flatten such slopes but never steepen them.
// The envelope uses the slower of the initial-layer slope and the supplied
// rate; C_hat (and C_hat_u for the input) is the largest ratio inside the two
// boundary windows, inflated by 1.05, and the envelope is checked at every
// node. A non-decaying initial layer means no turnpike.
inline TurnpikeReport turnpike_fit(const std::vector<double>& grid,
                                   const std::vector<double>& dist_x,
                                   const std::vector<double>& dist_u, double lambda) {
  if (grid.size() < 16) throw InputError("turnpike_report: grid needs at least 16 nodes");
  if (dist_x.size() != grid.size() || dist_u.size() != grid.size())
    throw InputError("turnpike_report: sample count mismatch");
  TurnpikeReport r;
  r.grid = grid;
  r.dist_x = dist_x;
  r.dist_u = dist_u;
  const double t0 = grid.front(), t1 = grid.back(), T = t1 - t0;
  const double head = t0 + 0.25 * T, tail = t0 + 0.75 * T;

  double mx = *std::max_element(dist_x.begin(), dist_x.end());
  double mu = *std::max_element(dist_u.begin(), dist_u.end());
  if (mx < 1e-14 && mu < 1e-14) {
    r.degenerate = true;
    r.envelope_holds = true;
    r.lambda_hat = r.lambda_head = r.lambda_tail = r.rate = lambda;
    r.envelope.assign(grid.size(), 0.0);
    return r;
  }

  std::vector<double> hs, hd, ts, td;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] <= head) {
      hs.push_back(grid[k] - t0);
      hd.push_back(dist_x[k]);
    }
    if (grid[k] >= tail) {
      ts.push_back(t1 - grid[k]);
      td.push_back(dist_x[k]);
    }
  }
  r.lambda_head = detail::log_slope(hs, hd);
  r.lambda_tail = detail::log_slope(ts, td);
  if (std::isnan(r.lambda_head)) r.lambda_head = lambda;
  if (r.lambda_head < 0.0 && r.lambda_tail < 0.0)
    r.lambda_hat = std::min(r.lambda_head, r.lambda_tail);
  else
    r.lambda_hat = r.lambda_head;
  r.rate = std::max(r.lambda_head, lambda);

  auto env = [&](double t) {
    double s = t - t0;
    return std::exp(r.rate * s) + std::exp(r.rate * (T - s));
  };
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] > head && grid[k] < tail) continue;
    double e = env(grid[k]);
    r.C_hat = std::max(r.C_hat, dist_x[k] / e);
    r.C_hat_u = std::max(r.C_hat_u, dist_u[k] / e);
  }
  r.C_hat *= 1.05;
  r.C_hat_u *= 1.05;

  for (std::size_t k = 0; k < grid.size(); ++k) {
    double e = env(grid[k]);
    r.envelope.push_back(r.C_hat * e);
    double vx = r.C_hat > 0 ? dist_x[k] / (r.C_hat * e) : (dist_x[k] > 0 ? INFINITY : 0.0);
    double vu = r.C_hat_u > 0 ? dist_u[k] / (r.C_hat_u * e) : (dist_u[k] > 0 ? INFINITY : 0.0);
    r.max_violation = std::max({r.max_violation, vx, vu});
  }
  r.envelope_holds = r.lambda_head < 0.0 && r.rate < 0.0 && r.max_violation <= 1.0;
  return r;
}

inline TurnpikeReport turnpike_report(const OptimalTrajectory& traj, const SteadyState& steady,
                                      double lambda) {
  std::vector<double> dx, du;
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    dx.push_back((traj.x[k] - steady.x_s).norm());
    du.push_back((traj.u[k] - steady.u_s).norm());
  }
  TurnpikeReport r = turnpike_fit(traj.grid, dx, du, lambda);
  r.x_s = steady.x_s;
  r.u_s = steady.u_s;
  return r;
}

}  // namespace turnpike
