// Acceptance checks AC1-AC9; one PASS/FAIL line each, nonzero exit on any failure.
#include <cstdio>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "turnpike/dae_lqr_affine.hpp"
#include "turnpike/lqr_affine.hpp"
#include "turnpike/transcription_oracle.hpp"

using namespace turnpike;

namespace {

int failures = 0;

struct Check {
  bool ok = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [" << what << "]";
    }
  }
};

void report(const char* id, Check& c, const std::string& summary) {
  std::printf("%s %s %s%s\n", id, c.ok ? "PASS" : "FAIL", summary.c_str(), c.detail.str().c_str());
  if (!c.ok) ++failures;
}

template <class F>
void run(const char* id, F&& body) {
  Check c;
  std::string summary;
  try {
    summary = body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    summary = std::string("exception: ") + e.what();
  }
  report(id, c, summary);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

const Vector x0_fig = fx::vec({1, 1});

}  // namespace

int main() {
  run("AC1", [](Check& c) {
    double a = solve_dre(fx::example_abc(false), 10.0, 101).P.front().norm();
    double b = solve_dre(fx::example_abc(true), 10.0, 101).P.front().norm();
    c.require(std::abs(a - 7.6795) <= 1e-3, "F perp C");
    c.require(std::abs(b - 1.0) <= 1e-6, "F = C");
    return fmt("|P(0)|_F = %.6f (F perp C), %.10f (F = C)", a, b);
  });

  run("AC2", [](Check& c) {
    auto p = fx::example_abc();
    auto are = solve_are(p);
    double err = (are.P_plus - fx::p_plus_abc()).cwiseAbs().maxCoeff();
    auto ev = eigenvalues(are.A_plus);
    double everr = std::max(std::abs(ev(0) - std::complex<double>(-2, 0)),
                            std::abs(ev(1) - std::complex<double>(-2, 0)));
    c.require(err <= 1e-10, "P+");
    c.require(are.residual <= 1e-10, "residual");
    c.require(everr <= 1e-6, "eigenvalues");
    auto q = fx::example_abc(true);
    Matrix P0 = solve_dre(q, 10.0, 101).P.front();
    Matrix D = Matrix::Zero(2, 2);
    D(1, 1) = 1;
    double lim = (P0 - D).cwiseAbs().maxCoeff();
    c.require(lim <= 1e-6, "F = C limit");
    c.require(!is_stabilizing(q, P0), "F = C limit flagged non-stabilizing");
    auto ev2 = eigenvalues(q.A - q.B * q.B.transpose() * P0);
    double lo = std::min(ev2(0).real(), ev2(1).real()), hi = std::max(ev2(0).real(), ev2(1).real());
    c.require(std::abs(lo + 2) <= 1e-6 && std::abs(hi - 2) <= 1e-6, "spectrum {2, -2}");
    return fmt("P+ err %.2e, residual %.2e, eig err %.2e, F = C limit err %.2e", err, are.residual,
               everr, lim);
  });

  run("AC3", [](Check& c) {
    auto p = fx::example_abc(false), q = fx::example_abc(true);
    auto a = solve_are(p);
    auto g = gramians(a, p.B);
    bool perp = check_convergence_condition(p.S(), a, g);
    bool eq = check_convergence_condition(q.S(), a, g);
    c.require(perp, "F perp C should converge");
    c.require(!eq, "F = C should not converge");
    return std::string("F perp C: ") + (perp ? "true" : "false") + ", F = C: " + (eq ? "true" : "false");
  });

  run("AC4", [](Check& c) {
    auto p = fx::example_abc();
    auto s = steady_state(p, solve_are(p), fx::vec({1}));
    double err = std::max({std::abs(s.x_s(0) + fx::kSqrt3 / 8), std::abs(s.x_s(1) - fx::kSqrt3 / 4),
                           std::abs(s.u_s(0) - fx::kSqrt3 / 4)});
    double kkt = std::max({s.kkt_state, s.kkt_adjoint, s.kkt_input});
    c.require(err <= 1e-10, "steady state");
    c.require(kkt <= 1e-10, "KKT");
    return fmt("steady err %.2e, max KKT %.2e", err, kkt);
  });

  run("AC5", [](Check& c) {
    auto p = fx::example_abc(false);
    auto are = solve_are(p);
    auto tr = optimal_trajectory(p, x0_fig, fx::vec({0}), fx::vec({1}), 10.0, 101);
    double min_comp = 1e300, min_norm = 1e300;
    for (const auto& x : tr.x) {
      min_comp = std::min(min_comp, x.cwiseAbs().minCoeff());
      min_norm = std::min(min_norm, x.norm());
    }
    auto r = turnpike_report(tr, steady_state(p, are, fx::vec({0})), are.lambda);
    auto q = fx::example_abc(true);
    auto tq = optimal_trajectory(q, x0_fig, fx::vec({0}), fx::vec({1}), 10.0, 101);
    auto rq = turnpike_report(tq, steady_state(q, solve_are(q), fx::vec({0})), are.lambda);
    c.require(min_comp <= 1e-4, "min |x_i|");
    c.require(r.lambda_hat >= -2.2 && r.lambda_hat <= -1.8, "lambda_hat");
    c.require(r.envelope_holds, "envelope F perp C");
    c.require(!rq.envelope_holds, "envelope F = C");
    return fmt("min |x_i| %.3e (min |x| %.3e), lambda_hat %.4f, F = C lambda_head %.4f", min_comp,
               min_norm, r.lambda_hat, rq.lambda_head);
  });

  run("AC6", [](Check& c) {
    auto p = fx::example_abc();
    const double t1 = 10.0;
    const int grid = 101;
    auto are = solve_are(p);
    auto cf = closed_forms(p, are, t1);
    auto dre = solve_dre(p, t1, grid);
    const Matrix BBt = p.B * p.B.transpose();
    auto ut = integrate_ode(
        [&](double t, const Vector& y) -> Vector {
          return flatten((p.A - BBt * dre.at(t)) * unflatten(y, 2, 2));
        },
        flatten(Matrix::Identity(2, 2)), t1, 0.0, {}, grid);
    std::vector<Matrix> U(grid);
    for (int k = 0; k < grid; ++k) U[grid - 1 - k] = unflatten(ut.y[k], 2, 2);
    double eU = 0, eF = 0, eB = 0, eD = 0;
    for (int k = 0; k < grid; ++k) {
      double t = dre.grid[k];
      eU = std::max(eU, rel(cf.U(t), U[k]));
      eD = std::max(eD, (are.P_plus + cf.delta(t) - dre.P[k]).norm());
    }
    for (int i = 0; i < grid; i += 10)
      for (int j = 0; j <= i; j += 10) {
        double t = dre.grid[i], s = dre.grid[j];
        Matrix Fi = U[i] * U[j].inverse();
        Matrix Bi = U[j].transpose().inverse() * U[i].transpose();
        eF = std::max(eF, rel(cf.forward(t, s), Fi));
        eB = std::max(eB, rel(cf.backward(s, t), Bi));
      }
    double eW = 0;
    for (auto [yc, ye] : {std::pair{0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}})
      eW = std::max(eW, feedforward(p, cf, dre, fx::vec({yc}), fx::vec({ye}), grid).max_discrepancy);
    c.require(eU <= 1e-6, "U");
    c.require(eF <= 1e-6, "forward transition");
    c.require(eB <= 1e-6, "backward transition");
    c.require(eW <= 1e-6, "feedforward");
    c.require(eD <= 1e-6, "delta");
    return fmt("U %.2e, transitions %.2e / %.2e, feedforward %.2e", eU, eF, eB, eW) +
           fmt(", delta %.2e", eD);
  });

  run("AC7", [](Check& c) {
    auto p = fx::reference_dae();
    auto g = solve_gare(p);
    Matrix P = Matrix::Zero(2, 2);
    P(0, 0) = 1 + fx::kSqrt2;
    double ep = (g.P_plus - P).cwiseAbs().maxCoeff();
    auto gd = solve_gdre(p, g, 10.0, 201);
    double e1 = 0;
    for (std::size_t k = 0; k < gd.grid.size(); ++k)
      e1 = std::max(e1, std::abs(gd.P1[k](0, 0) - fx::reference_p1(10.0 - gd.grid[k])));
    double bracket = 1.0 + g.W_bar(0, 0) * (gd.S1(0, 0) - g.P1(0, 0));
    auto s = dae_steady_state(p, g, fx::vec({1}));
    double es = std::max({std::abs(s.x_s(0) - 0.5), std::abs(s.x_s(1) + 0.5),
                          std::abs(s.u_s(0) + 0.5)});
    auto tr = dae_optimal_trajectory(p, fx::vec({1, 0}), fx::vec({1}), fx::vec({0}), 10.0, 201);
    auto r = dae_turnpike_report(tr, s, g.lambda_bar);
    c.require(ep <= 1e-9, "P+");
    c.require(e1 <= 1e-7, "P1 closed form");
    c.require(std::abs(bracket - 0.5) <= 1e-9, "bracket");
    c.require(es <= 1e-9, "steady state");
    c.require(r.lambda_hat >= -1.6 && r.lambda_hat <= -1.2, "lambda_hat");
    return fmt("P+ err %.2e, P1 err %.2e, bracket %.10f, steady err %.2e", ep, e1, bracket, es) +
           fmt(", lambda_hat %.4f", r.lambda_hat);
  });

  run("AC8", [](Check& c) {
    struct Case {
      const char* name;
      DescriptorPlant plant;
      Vector x0, yc, ye;
      double ratio_min;
    };
    Case cases[] = {
        {"ode", DescriptorPlant::from_lti(fx::example_abc(false)), x0_fig, fx::vec({0}),
         fx::vec({1}), 3.5},
        {"dae", fx::reference_dae(), fx::vec({1, 0}), fx::vec({1}), fx::vec({0}), 1.8},
    };
    std::string out;
    for (auto& cs : cases) {
      const double t1 = 10.0;
      std::vector<Vector> xr;
      double cost_r;
      if (cs.plant.semi_explicit_d() == cs.plant.n()) {
        LtiPlant l{cs.plant.A, cs.plant.B, cs.plant.C, cs.plant.F};
        auto tr = optimal_trajectory(l, cs.x0, cs.yc, cs.ye, t1, 2001);
        xr = tr.x;
        cost_r = tr.cost;
      } else {
        auto tr = dae_optimal_trajectory(cs.plant, cs.x0, cs.yc, cs.ye, t1, 2001);
        xr = tr.x;
        cost_r = tr.cost;
      }
      double err[3], cost_o = 0;
      int Ns[3] = {500, 1000, 2000};
      for (int i = 0; i < 3; ++i) {
        auto o = transcribe_and_solve(cs.plant, cs.x0, cs.yc, cs.ye, t1, Ns[i]);
        err[i] = 0;
        for (int k = 0; k <= 100; ++k)
          err[i] = std::max(err[i], (o.x[k * Ns[i] / 100] - xr[20 * k]).norm());
        cost_o = o.cost;
      }
      double rc = std::abs(cost_o - cost_r) / std::abs(cost_r);
      double ratio = err[0] / err[1];
      c.require(err[2] <= 1e-3, std::string(cs.name) + " node error");
      c.require(rc <= 1e-3, std::string(cs.name) + " cost");
      c.require(ratio >= cs.ratio_min, std::string(cs.name) + " refinement");
      out += std::string(out.empty() ? "" : "; ") + cs.name +
             fmt(": err %.2e, rel cost %.2e, ratio %.2f", err[2], rc, ratio);
    }
    return out;
  });

  run("AC9", [](Check& c) {
    std::mt19937 g(kRegularitySeed);
    bool identity_ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      LtiPlant l{fx::random_matrix(g, 3, 3), fx::random_matrix(g, 3, 2), fx::random_matrix(g, 1, 3),
                 fx::random_matrix(g, 1, 3)};
      auto p = DescriptorPlant::from_lti(l);
      identity_ok = identity_ok && check_pencil_regular(p.E, p.A) &&
                    check_impulse_controllable(p.E, p.A, p.B) && check_impulse_free(p.E, p.A) &&
                    check_F_compatible(p.E, p.F);
    }
    int free_cases = 0;
    bool implication = true;
    for (int trial = 0; trial < 200; ++trial) {
      Matrix E = Matrix::Zero(4, 4);
      E.topLeftCorner(2, 2).setIdentity();
      Matrix A = fx::random_matrix(g, 4, 4);
      if (trial % 2) A.bottomRightCorner(2, 2).col(0).setZero();
      Matrix B = fx::random_matrix(g, 4, trial % 3);
      if (check_impulse_free(E, A)) {
        ++free_cases;
        implication = implication && check_impulse_controllable(E, A, B);
      }
    }
    auto p = fx::reference_dae();
    auto gs = solve_gare(p);
    auto gd = solve_gdre(p, gs, 10.0, 201);
    auto sd = structured_delta(gs, gd.S1, 10.0);
    double sym = 0, col = 0, coup = 0, blk = 0;
    for (double t : gd.grid) {
      Matrix P = gd.P_at(t);
      Matrix EP = p.E.transpose() * P;
      sym = std::max(sym, (EP - EP.transpose()).cwiseAbs().maxCoeff());
      Matrix D = sd.P_delta(t);
      col = std::max(col, D.rightCols(1).cwiseAbs().maxCoeff());
      coup = std::max(coup, (D.bottomLeftCorner(1, 1) - sd.coupling * D.topLeftCorner(1, 1)).norm());
      Matrix Acl = p.A - p.B * p.B.transpose() * P;
      blk = std::max(blk, (Acl.bottomRightCorner(1, 1) - gs.Ap2).norm());
    }
    c.require(identity_ok, "E = I checks");
    c.require(free_cases > 0 && implication, "impulse-free implies impulse-controllable");
    c.require(sym <= 1e-10, "E*P symmetric");
    c.require(col <= 1e-10, "P_delta second block column");
    c.require(coup <= 1e-10, "coupling identity");
    c.require(blk <= 1e-10, "constant closed-loop block");
    return fmt("impulse-free cases %.0f, E*P asym %.1e, P_delta col %.1e, coupling %.1e",
               free_cases, sym, col, coup) +
           fmt(", block %.1e", blk);
  });

  return failures ? 1 : 0;
}
