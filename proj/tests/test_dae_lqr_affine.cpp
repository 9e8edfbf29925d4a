#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "turnpike/dae_lqr_affine.hpp"

using namespace turnpike;

namespace {

// The reference DAE eliminates to x1' = x1 + u with x2 = u, an ODE problem in x1.
LtiPlant reference_reduced() {
  LtiPlant q;
  q.A = q.B = q.C = q.F = Matrix::Ones(1, 1);
  return q;
}

std::pair<Vector, Vector> static_optimum(const DescriptorPlant& p, const Vector& y_c) {
  const Eigen::Index n = p.n(), m = p.m();
  Matrix K = Matrix::Zero(2 * n + m, 2 * n + m);
  K.block(0, 0, n, n) = p.C.transpose() * p.C;
  K.block(0, n + m, n, n) = p.A.transpose();
  K.block(n, n, m, m).setIdentity();
  K.block(n, n + m, m, n) = p.B.transpose();
  K.block(n + m, 0, n, n) = p.A;
  K.block(n + m, n, n, m) = p.B;
  Vector rhs = Vector::Zero(2 * n + m);
  rhs.head(n) = p.C.transpose() * y_c;
  Vector z = K.fullPivLu().solve(rhs);
  return {z.head(n), z.segment(n, m)};
}

}  // namespace

TEST(DaeSteadyState, Reference) {
  auto p = fx::reference_dae();
  auto g = solve_gare(p);
  auto s = dae_steady_state(p, g, fx::vec({1}));
  EXPECT_NEAR(s.x_s(0), 0.5, 1e-9);
  EXPECT_NEAR(s.x_s(1), -0.5, 1e-9);
  EXPECT_NEAR(s.u_s(0), -0.5, 1e-9);
  EXPECT_NEAR(s.w1_const(0), -1 / fx::kSqrt2, 1e-12);
  EXPECT_LE(s.residual, 1e-10);
  EXPECT_LE(s.kkt_adjoint, 1e-10);
  EXPECT_LE(s.kkt_input, 1e-10);
}

TEST(DaeSteadyState, RejectsWrongLength) {
  auto p = fx::reference_dae();
  auto g = solve_gare(p);
  EXPECT_THROW(dae_steady_state(p, g, fx::vec({1, 1})), InputError);
}

TEST(DaeSteadyStateProperty, MatchesStaticKkt) {
  std::mt19937 gen(61);
  int done = 0;
  for (int trial = 0; trial < 30; ++trial) {
    DescriptorPlant p;
    p.E = Matrix::Zero(3, 3);
    p.E.topLeftCorner(2, 2).setIdentity();
    p.A = fx::random_matrix(gen, 3, 3);
    p.A(2, 2) = -1;
    p.B = fx::random_matrix(gen, 3, 1);
    p.B(2, 0) *= 0.3;
    p.C = fx::random_matrix(gen, 1, 3);
    p.C(0, 2) *= 0.3;
    p.F = Matrix::Zero(1, 3);
    GareSolution g;
    try {
      g = solve_gare(p);
    } catch (const AssumptionViolation&) {
      continue;
    }
    Vector y_c = fx::random_matrix(gen, 1, 1);
    auto s = dae_steady_state(p, g, y_c);
    auto [x, u] = static_optimum(p, y_c);
    EXPECT_LE((s.x_s - x).norm(), 1e-8 * (1 + x.norm()));
    EXPECT_LE((s.u_s - u).norm(), 1e-8 * (1 + u.norm()));
    ++done;
  }
  EXPECT_GT(done, 15);
}

TEST(DaeFeedforward, SteadyDeltaGivesConstantCostate) {
  auto g = solve_gare(fx::reference_dae());
  auto s = dae_steady_state(fx::reference_dae(), g, fx::vec({1}));
  // Terminal value chosen on the steady costate keeps w1 constant.
  DeltaFn zero = [](double) { return Matrix::Zero(1, 1); };
  Vector y_e = -s.w1_const;
  auto ff = dae_feedforward(g, zero, fx::vec({1}), y_e, 5.0, 51);
  for (std::size_t k = 0; k < ff.grid.size(); ++k) {
    EXPECT_LE((ff.w1[k] - s.w1_const).norm(), 1e-9);
    EXPECT_LE((ff.w2[k] - s.w2_const).norm(), 1e-9);
  }
  EXPECT_THROW(dae_feedforward(g, zero, fx::vec({1}), fx::vec({1, 1}), 5.0, 51), InputError);
}

TEST(DaeTrajectory, MatchesReducedOdeProblem) {
  auto p = fx::reference_dae();
  for (double t1 : {5.0, 10.0}) {
    auto tr = dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({1}), fx::vec({0}), t1, 201);
    auto o = optimal_trajectory(reference_reduced(), fx::vec({1}), fx::vec({1}), fx::vec({0}), t1,
                                201);
    for (std::size_t k = 0; k < tr.grid.size(); ++k) {
      EXPECT_NEAR(tr.x1[k](0), o.x[k](0), 1e-7);
      EXPECT_NEAR(tr.x2[k](0), o.u[k](0), 1e-7);
      EXPECT_NEAR(tr.u[k](0), o.u[k](0), 1e-7);
    }
    EXPECT_NEAR(tr.cost, o.cost, 1e-7 * o.cost);
    EXPECT_LE(tr.algebraic_residual, 1e-10);
  }
}

TEST(DaeTrajectory, TurnpikeAtReferenceSteadyState) {
  auto p = fx::reference_dae();
  auto g = solve_gare(p);
  auto tr = dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({1}), fx::vec({0}), 10.0, 201);
  auto s = dae_steady_state(p, g, fx::vec({1}));
  EXPECT_NEAR(tr.x[100](0), 0.5, 1e-3);
  EXPECT_NEAR(tr.x[100](1), -0.5, 2e-3);
  auto r = dae_turnpike_report(tr, s, g.lambda_bar);
  EXPECT_GE(r.lambda_hat, -1.6);
  EXPECT_LE(r.lambda_hat, -1.2);
  EXPECT_TRUE(r.envelope_holds);
  EXPECT_EQ(r.x_s, s.x_s);
}

TEST(DaeTrajectory, HomogeneousTurnpikeAndDecoupledForm) {
  auto p = fx::reference_dae();
  auto g = solve_gare(p);
  const double t1 = 10.0;
  auto tr = dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({0}), fx::vec({0}), t1, 201);
  auto r = dae_turnpike_report(tr, dae_steady_state(p, g, fx::vec({0})), g.lambda_bar);
  EXPECT_TRUE(r.envelope_holds);
  auto sd = structured_delta(g, g.part.S1, t1);
  for (std::size_t k = 0; k < tr.grid.size(); ++k) {
    auto dc = decoupled_closed_loop(g, sd, tr.grid[k]);
    // Closed-form delta against integrated gDRE contributes the only error.
    EXPECT_LE((tr.x2[k] - dc.A2_hat * tr.x1[k]).norm(), 1e-7);
  }
}

TEST(DaeTrajectory, InconsistentAlgebraicStartIsNoted) {
  auto p = fx::reference_dae();
  auto tr = dae_optimal_trajectory(p, fx::vec({1, 5}), fx::vec({1}), fx::vec({0}), 5.0, 51);
  ASSERT_EQ(tr.notes.size(), 1u);
  EXPECT_NE(tr.notes[0].find("x2(0)"), std::string::npos);
  auto ok = dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({1}), fx::vec({0}), 5.0, 51);
  auto again = dae_optimal_trajectory(p, ok.x.front(), fx::vec({1}), fx::vec({0}), 5.0, 51);
  EXPECT_TRUE(again.notes.empty());
}

TEST(DaeTrajectory, RejectsBadInput) {
  auto p = fx::reference_dae();
  EXPECT_THROW(dae_optimal_trajectory(p, fx::vec({1}), fx::vec({1}), fx::vec({0}), 5.0, 51),
               InputError);
  EXPECT_THROW(dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({1, 1}), fx::vec({0}), 5.0, 51),
               InputError);
  EXPECT_THROW(dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({1}), fx::vec({0, 0}), 5.0, 51),
               InputError);
  auto bad = p;
  bad.B << 1, 2;
  bad.C << 0, 1;
  EXPECT_THROW(dae_optimal_trajectory(bad, fx::vec({1, 0}), fx::vec({1}), fx::vec({0}), 5.0, 51),
               AssumptionViolation);
}

TEST(DaeTrajectory, StandardPlantAgreesWithOdePath) {
  auto lti = fx::example_abc();
  auto p = DescriptorPlant::from_lti(lti);
  auto a = dae_optimal_trajectory(p, fx::vec({1, 1}), fx::vec({1}), fx::vec({0.5}), 4.0, 81);
  auto b = optimal_trajectory(lti, fx::vec({1, 1}), fx::vec({1}), fx::vec({0.5}), 4.0, 81);
  for (std::size_t k = 0; k < a.grid.size(); ++k) {
    EXPECT_LE((a.x[k] - b.x[k]).norm(), 1e-6 * (1 + b.x[k].norm()));
    EXPECT_LE((a.u[k] - b.u[k]).norm(), 1e-6 * (1 + b.u[k].norm()));
  }
}
