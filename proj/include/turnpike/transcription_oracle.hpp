#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <vector>

#include "turnpike/system_model.hpp"

namespace turnpike {

// Implicit-midpoint transcription. Unknowns are the differential states x1 at
// the N+1 nodes, followed by the algebraic states z and inputs v at the N
// interval midpoints:
//   (x1_{j+1} - x1_j)/h = A11 xbar_j + A12 z_j + B1 v_j
//                     0 = A21 xbar_j + A22 z_j + B2 v_j,   xbar_j = (x1_j + x1_{j+1})/2.
// Running cost: trapezoid on node states for ODEs, midpoint rule for DAEs.
struct DiscretizedLQ {
  int N = 0;
  double h = 0.0;
  Eigen::Index d = 0, a = 0, m = 0;
  Eigen::SparseMatrix<double> H, G;
  Vector g, b;
  double constant = 0.0;  // cost offset so that J = z*Hz/2 + g*z + constant

  Eigen::Index nvars() const { return d * (N + 1) + (a + m) * N; }
  Eigen::Index X(int j) const { return d * j; }
  Eigen::Index Z(int j) const { return d * (N + 1) + (a + m) * j; }
  Eigen::Index V(int j) const { return Z(j) + a; }
};

struct OracleSolution {
  std::vector<double> grid;
  std::vector<Vector> x, u;  // node values
  std::vector<Vector> u_mid;
  double cost = 0.0;
  double kkt_residual = 0.0;
  double algebraic_residual = 0.0;  // max over midpoints
};

inline DiscretizedLQ transcribe(const DescriptorPlant& plant, const Vector& x0, const Vector& y_c,
                                const Vector& y_e, double t1, int N) {
  plant.validate();
  if (N < 50) throw InputError("oracle: N must be at least 50");
  if (!(t1 > 0.0)) throw InputError("oracle: t1 must be positive");
  if (x0.size() != plant.n()) throw InputError("oracle: x0 has wrong length");
  if (y_c.size() != plant.k()) throw InputError("oracle: y_c has wrong length");
  if (y_e.size() != plant.F.rows()) throw InputError("oracle: y_e has wrong length");
  const SemiExplicitPartition p = plant.partition();
  DiscretizedLQ q;
  q.N = N;
  q.h = t1 / N;
  q.d = p.d;
  q.a = p.A22.rows();
  q.m = plant.m();
  const double h = q.h;
  const Eigen::Index d = q.d, a = q.a, m = q.m, nv = q.nvars();
  using T = Eigen::Triplet<double>;
  std::vector<T> hs, gs;
  q.g = Vector::Zero(nv);

  auto add_block = [](std::vector<T>& out, Eigen::Index r0, Eigen::Index c0, const Matrix& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j)
        if (M(i, j) != 0.0) out.emplace_back(r0 + i, c0 + j, M(i, j));
  };

  const Matrix C1tC1 = p.C1.transpose() * p.C1;
  if (a == 0) {
    for (int j = 0; j <= N; ++j) {
      double wgt = h * ((j == 0 || j == N) ? 0.5 : 1.0);
      add_block(hs, q.X(j), q.X(j), wgt * C1tC1);
      q.g.segment(q.X(j), d) -= wgt * p.C1.transpose() * y_c;
    }
    q.constant += 0.5 * t1 * y_c.squaredNorm();
  } else {
    // Midpoint output C1 xbar + C2 z; [x1_j, x1_{j+1}, z_j] weighted by (1/2, 1/2, 1).
    for (int j = 0; j < N; ++j) {
      Matrix L(p.C1.rows(), 2 * d + a);
      L << 0.5 * p.C1, 0.5 * p.C1, p.C2;
      Matrix Hj = h * L.transpose() * L;
      Vector gj = -h * L.transpose() * y_c;
      Eigen::Index idx[3] = {q.X(j), q.X(j + 1), q.Z(j)};
      Eigen::Index sz[3] = {d, d, a};
      Eigen::Index off[3] = {0, d, 2 * d};
      for (int r = 0; r < 3; ++r) {
        q.g.segment(idx[r], sz[r]) += gj.segment(off[r], sz[r]);
        for (int c = 0; c < 3; ++c)
          add_block(hs, idx[r], idx[c], Hj.block(off[r], off[c], sz[r], sz[c]));
      }
    }
    q.constant += 0.5 * t1 * y_c.squaredNorm();
  }
  for (int j = 0; j < N; ++j) add_block(hs, q.V(j), q.V(j), h * Matrix::Identity(m, m));
  add_block(hs, q.X(N), q.X(N), p.F1.transpose() * p.F1);
  q.g.segment(q.X(N), d) -= p.F1.transpose() * y_e;
  q.constant += 0.5 * y_e.squaredNorm();

  const Eigen::Index nc = d + N * (d + a);
  q.b = Vector::Zero(nc);
  add_block(gs, 0, q.X(0), Matrix::Identity(d, d));
  q.b.head(d) = x0.head(d);
  const Matrix Id = Matrix::Identity(d, d);
  for (int j = 0; j < N; ++j) {
    Eigen::Index r = d + j * (d + a);
    add_block(gs, r, q.X(j + 1), Id / h - 0.5 * p.A11);
    add_block(gs, r, q.X(j), -Id / h - 0.5 * p.A11);
    add_block(gs, r, q.Z(j), -p.A12);
    add_block(gs, r, q.V(j), -p.B1);
    add_block(gs, r + d, q.X(j + 1), 0.5 * p.A21);
    add_block(gs, r + d, q.X(j), 0.5 * p.A21);
    add_block(gs, r + d, q.Z(j), p.A22);
    add_block(gs, r + d, q.V(j), p.B2);
  }
  q.H.resize(nv, nv);
  q.H.setFromTriplets(hs.begin(), hs.end());
  q.G.resize(nc, nv);
  q.G.setFromTriplets(gs.begin(), gs.end());
  return q;
}

inline OracleSolution solve_discretized(const DescriptorPlant& plant, const DiscretizedLQ& q) {
  const Eigen::Index nv = q.nvars(), nc = q.G.rows();
  using T = Eigen::Triplet<double>;
  std::vector<T> ks;
  ks.reserve(q.H.nonZeros() + 2 * q.G.nonZeros());
  for (int k = 0; k < q.H.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q.H, k); it; ++it)
      ks.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < q.G.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q.G, k); it; ++it) {
      ks.emplace_back(nv + it.row(), it.col(), it.value());
      ks.emplace_back(it.col(), nv + it.row(), it.value());
    }
  Eigen::SparseMatrix<double> K(nv + nc, nv + nc);
  K.setFromTriplets(ks.begin(), ks.end());
  Vector rhs(nv + nc);
  rhs << -q.g, q.b;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success)
    throw AssumptionViolation("structural assumptions (oracle)", "KKT system is rank deficient");
  Vector sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite())
    throw NumericalFailure("oracle: KKT solve failed");

  OracleSolution out;
  out.kkt_residual = (K * sol - rhs).norm() / (1.0 + rhs.norm() + sol.norm());
  if (out.kkt_residual > 1e-9) throw NumericalFailure("oracle: KKT residual exceeds tolerance");
  Vector z = sol.head(nv);
  out.cost = 0.5 * z.dot(q.H * z) + q.g.dot(z) + q.constant;

  const SemiExplicitPartition p = plant.partition();
  const int N = q.N;
  const Eigen::Index d = q.d, a = q.a, m = q.m;
  std::vector<Vector> zm;
  for (int j = 0; j < N; ++j) {
    out.u_mid.push_back(z.segment(q.V(j), m));
    zm.push_back(z.segment(q.Z(j), a));
    Vector xb = 0.5 * (z.segment(q.X(j), d) + z.segment(q.X(j + 1), d));
    Vector alg = p.A21 * xb + p.A22 * zm.back() + p.B2 * out.u_mid.back();
    if (alg.size()) out.algebraic_residual = std::max(out.algebraic_residual, alg.norm());
  }
  auto node_avg = [&](const std::vector<Vector>& mid, int j) -> Vector {
    if (j == 0) return 1.5 * mid[0] - 0.5 * mid[1];
    if (j == N) return 1.5 * mid[N - 1] - 0.5 * mid[N - 2];
    return 0.5 * (mid[j - 1] + mid[j]);
  };
  const bool a22_inv = a > 0 && rank_svd(p.A22, Tolerances{}) == a;
  Eigen::PartialPivLU<Matrix> a22lu;
  if (a22_inv) a22lu.compute(p.A22);
  for (int j = 0; j <= N; ++j) {
    out.grid.push_back(j == N ? q.h * N : q.h * j);
    Vector x1 = z.segment(q.X(j), d);
    Vector u = node_avg(out.u_mid, j);
    Vector x2 = a == 0 ? Vector(0)
                : a22_inv ? Vector(-a22lu.solve(p.A21 * x1 + p.B2 * u))
                          : node_avg(zm, j);
    Vector x(d + a);
    x << x1, x2;
    out.x.push_back(x);
    out.u.push_back(u);
  }
  return out;
}

inline OracleSolution transcribe_and_solve(const DescriptorPlant& plant, const Vector& x0,
                                           const Vector& y_c, const Vector& y_e, double t1,
                                           int N, const Tolerances& tol = {}) {
  if (plant.semi_explicit_d() < plant.n()) {
    if (!check_pencil_regular(plant.E, plant.A, tol))
      throw AssumptionViolation("regularity", "pencil (E, A) is not regular");
    if (!check_impulse_controllable(plant.E, plant.A, plant.B, tol))
      throw AssumptionViolation("impulse controllability", "rank test fails");
  }
  return solve_discretized(plant, transcribe(plant, x0, y_c, y_e, t1, N));
}

inline OracleSolution transcribe_and_solve(const LtiPlant& plant, const Vector& x0,
                                           const Vector& y_c, const Vector& y_e, double t1,
                                           int N, const Tolerances& tol = {}) {
  return transcribe_and_solve(DescriptorPlant::from_lti(plant), x0, y_c, y_e, t1, N, tol);
}

}  // namespace turnpike
