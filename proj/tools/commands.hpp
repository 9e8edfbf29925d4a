#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scenario.hpp"
#include "turnpike/dae_lqr_affine.hpp"
#include "turnpike/lqr_affine.hpp"
#include "turnpike/transcription_oracle.hpp"

namespace turnpike::cli {

struct Options {
  std::filesystem::path out_dir;  // empty: next to the scenario
  std::string stem = "scenario";
  int steps = 2000;
};

struct RunReport {
  json body;
  std::vector<std::string> files;
  int exit_code = 0;

  json to_json() const {
    json j = body;
    j["files"] = files;
    return j;
  }
};

namespace detail {

inline json eig_json(const Matrix& M) {
  json out = json::array();
  Eigen::VectorXcd ev = eigenvalues(M);
  std::vector<std::pair<double, double>> v;
  for (Eigen::Index i = 0; i < ev.size(); ++i) v.push_back({ev(i).real(), ev(i).imag()});
  std::sort(v.begin(), v.end());
  for (auto& [re, im] : v) out.push_back(json::array({re, im}));
  return out;
}

inline std::filesystem::path out_path(const Options& o, const std::string& suffix) {
  std::filesystem::path dir = o.out_dir.empty() ? std::filesystem::path(".") : o.out_dir;
  std::filesystem::create_directories(dir);
  return dir / (o.stem + suffix);
}

inline json structural_json(const StructuralReport& r) {
  json j;
  j["regular"] = r.regular;
  j["impulse_controllable"] = r.impulse_controllable;
  j["impulse_free"] = r.impulse_free;
  j["finite_dynamics_stable"] = r.finite_dynamics_stable;
  j["f_compatible"] = r.f_compatible;
  j["all"] = r.all();
  j["notes"] = r.notes;
  return j;
}

}  // namespace detail

inline RunReport cmd_check(const Scenario& s) {
  RunReport rep;
  std::optional<Matrix> Acl;
  std::vector<std::string> notes;
  try {
    if (s.is_dae()) {
      Acl = solve_gare(s.plant, s.tol).A_plus;
    } else {
      Acl = solve_are(s.lti(), s.tol).A_plus;
    }
  } catch (const Error& e) {
    notes.push_back(std::string("closed loop unavailable, open loop checked: ") + e.what());
  }
  StructuralReport r = structural_report(s.plant, s.tol, Acl ? &*Acl : nullptr, s.seed);
  for (auto& n : notes) r.notes.push_back(n);
  rep.body["command"] = "check";
  rep.body["kind"] = s.kind;
  rep.body["structural"] = detail::structural_json(r);
  rep.body["loop"] = Acl ? "closed" : "open";
  if (!r.all()) {
    std::vector<std::string> failed;
    if (!r.regular) failed.push_back("regularity");
    if (!r.impulse_controllable) failed.push_back("impulse controllability");
    if (!r.impulse_free) failed.push_back("impulse-freeness");
    if (!r.finite_dynamics_stable) failed.push_back("finite dynamics stability");
    if (!r.f_compatible) failed.push_back("F compatibility");
    rep.body["violated"] = failed;
    rep.exit_code = 2;
  }
  return rep;
}

inline RunReport cmd_are(const Scenario& s) {
  RunReport rep;
  json& b = rep.body;
  b["command"] = "are";
  b["kind"] = s.kind;
  if (s.is_dae()) {
    GareSolution g = solve_gare(s.plant, s.tol);
    b["P_plus"] = detail::to_json(g.P_plus);
    b["P1"] = detail::to_json(g.P1);
    b["P21"] = detail::to_json(g.P21);
    b["P2"] = detail::to_json(g.P2);
    b["normP_fro"] = g.P_plus.norm();
    b["A_bar"] = detail::to_json(g.A_bar);
    b["B_bar"] = detail::to_json(g.B_bar);
    b["C_bar"] = detail::to_json(g.C_bar);
    b["spectral_abscissa"] = g.lambda_bar;
    b["residual"] = g.residual;
    b["convergence_condition"] = check_dae_convergence_condition(g, g.part.S1, s.tol);
    b["bracket_sigma_min"] =
        g.part.d ? sigma_min(Matrix::Identity(g.part.d, g.part.d) + g.W_bar * (g.part.S1 - g.P1))
                 : 1.0;
    b["notes"] = g.notes;
  } else {
    LtiPlant p = s.lti();
    AreSolution a = solve_are(p, s.tol);
    GramianSet gr = gramians(a, p.B, s.tol);
    b["P_plus"] = detail::to_json(a.P_plus);
    b["normP_fro"] = a.P_plus.norm();
    b["spectral_abscissa"] = a.lambda;
    b["closed_loop_eigenvalues"] = detail::eig_json(a.A_plus);
    b["residual"] = a.residual;
    b["W"] = detail::to_json(gr.W);
    b["convergence_condition"] = check_convergence_condition(p.S(), a, gr, s.tol);
    b["bracket_sigma_min"] =
        sigma_min(Matrix::Identity(p.n(), p.n()) + gr.W * (p.S() - a.P_plus));
  }
  return rep;
}

inline RunReport cmd_dre(const Scenario& s, const Options& o) {
  RunReport rep;
  json& b = rep.body;
  b["command"] = "dre";
  b["kind"] = s.kind;
  CsvWriter csv(detail::out_path(o, "_dre.csv"), {"t", "normP_fro"});
  if (s.is_dae()) {
    GareSolution g = solve_gare(s.plant, s.tol);
    GdreSolution d = solve_gdre(s.plant, g, s.t1, s.grid, s.tol);
    for (std::size_t k = 0; k < d.grid.size(); ++k) csv.row({d.grid[k], d.P_at(d.grid[k]).norm()});
    Matrix P0 = d.P_at(0.0);
    b["P0"] = detail::to_json(P0);
    b["normP0_fro"] = P0.norm();
    b["residual"] = d.residual;
  } else {
    LtiPlant p = s.lti();
    DreSolution d = solve_dre(p, s.t1, s.grid, s.tol);
    for (std::size_t k = 0; k < d.grid.size(); ++k) csv.row({d.grid[k], d.P[k].norm()});
    const Matrix& P0 = d.P.front();
    b["P0"] = detail::to_json(P0);
    b["normP0_fro"] = P0.norm();
    b["residual"] = d.residual;
    Matrix Acl = p.A - p.B * p.B.transpose() * P0;
    b["closed_loop_eigenvalues_at_0"] = detail::eig_json(Acl);
    b["stabilizing_at_0"] = is_stabilizing(p, P0);
  }
  rep.files.push_back(csv.path().string());
  return rep;
}

struct Trajectory {
  std::vector<double> grid;
  std::vector<Vector> x, u, y;
  double cost = 0.0;
  std::string provenance;
  std::vector<std::string> notes;
};

inline Trajectory trajectory(const Scenario& s, int grid) {
  Trajectory t;
  if (s.is_dae()) {
    DaeTrajectory d = dae_optimal_trajectory(s.plant, s.x0, s.y_c, s.y_e, s.t1, grid, s.tol);
    t = {d.grid, d.x, d.u, d.y, d.cost, d.provenance, d.notes};
  } else {
    OptimalTrajectory d = optimal_trajectory(s.lti(), s.x0, s.y_c, s.y_e, s.t1, grid, s.tol);
    t = {d.grid, d.x, d.u, d.y, d.cost, d.provenance, {}};
  }
  return t;
}

inline RunReport cmd_simulate(const Scenario& s, const Options& o) {
  RunReport rep;
  Trajectory t = trajectory(s, s.grid);
  std::vector<std::string> head{"t"};
  for (auto& h : indexed("x", s.plant.n())) head.push_back(h);
  for (auto& h : indexed("u", s.plant.m())) head.push_back(h);
  for (auto& h : indexed("y", s.plant.k())) head.push_back(h);
  CsvWriter csv(detail::out_path(o, "_simulate.csv"), head);
  for (std::size_t k = 0; k < t.grid.size(); ++k) {
    std::vector<double> row{t.grid[k]};
    for (auto* v : {&t.x[k], &t.u[k], &t.y[k]})
      for (Eigen::Index i = 0; i < v->size(); ++i) row.push_back((*v)(i));
    csv.row(row);
  }
  rep.body["command"] = "simulate";
  rep.body["kind"] = s.kind;
  rep.body["cost"] = t.cost;
  rep.body["x_t1"] = detail::to_json(t.x.back());
  rep.body["provenance"] = t.provenance;
  rep.body["notes"] = t.notes;
  rep.files.push_back(csv.path().string());
  return rep;
}

inline RunReport cmd_turnpike(const Scenario& s, const Options& o) {
  RunReport rep;
  json& b = rep.body;
  b["command"] = "turnpike";
  b["kind"] = s.kind;
  TurnpikeReport r;
  double lambda = 0.0;
  if (s.is_dae()) {
    GareSolution g = solve_gare(s.plant, s.tol);
    DaeSteady st = dae_steady_state(s.plant, g, s.y_c, s.tol);
    DaeTrajectory d = dae_optimal_trajectory(s.plant, s.x0, s.y_c, s.y_e, s.t1, s.grid, s.tol);
    lambda = g.lambda_bar;
    r = dae_turnpike_report(d, st, lambda);
    b["convergence_condition"] = check_dae_convergence_condition(g, g.part.S1, s.tol);
  } else {
    LtiPlant p = s.lti();
    AreSolution a = solve_are(p, s.tol);
    SteadyState st = steady_state(p, a, s.y_c, s.tol);
    OptimalTrajectory d = optimal_trajectory(p, s.x0, s.y_c, s.y_e, s.t1, s.grid, s.tol);
    lambda = a.lambda;
    r = turnpike_report(d, st, lambda);
    b["convergence_condition"] =
        check_convergence_condition(p.S(), a, gramians(a, p.B, s.tol), s.tol);
  }
  b["x_s"] = detail::to_json(r.x_s);
  b["u_s"] = detail::to_json(r.u_s);
  b["spectral_abscissa"] = lambda;
  b["lambda_hat"] = r.lambda_hat;
  b["lambda_head"] = r.lambda_head;
  b["lambda_tail"] = r.lambda_tail;
  b["rate"] = r.rate;
  b["C_hat"] = r.C_hat;
  b["C_hat_u"] = r.C_hat_u;
  b["max_violation"] = r.max_violation;
  b["envelope_holds"] = r.envelope_holds;
  CsvWriter csv(detail::out_path(o, "_turnpike.csv"), {"t", "dist_x", "dist_u", "envelope"});
  for (std::size_t k = 0; k < r.grid.size(); ++k)
    csv.row({r.grid[k], r.dist_x[k], r.dist_u[k], r.envelope[k]});
  rep.files.push_back(csv.path().string());
  return rep;
}

inline RunReport cmd_oracle(const Scenario& s, const Options& o) {
  RunReport rep;
  const int N = o.steps;
  OracleSolution orc = transcribe_and_solve(s.plant, s.x0, s.y_c, s.y_e, s.t1, N, s.tol);
  Trajectory t = trajectory(s, N + 1);
  std::vector<std::string> head{"t"};
  for (auto& h : indexed("x", s.plant.n())) head.push_back(h);
  for (auto& h : indexed("u", s.plant.m())) head.push_back(h);
  for (auto& h : indexed("oracle_x", s.plant.n())) head.push_back(h);
  for (auto& h : indexed("oracle_u", s.plant.m())) head.push_back(h);
  CsvWriter csv(detail::out_path(o, "_oracle.csv"), head);
  double err = 0.0;
  for (int k = 0; k <= N; ++k) {
    std::vector<double> row{t.grid[k]};
    for (auto* v : {&t.x[k], &t.u[k], &orc.x[k], &orc.u[k]})
      for (Eigen::Index i = 0; i < v->size(); ++i) row.push_back((*v)(i));
    csv.row(row);
    err = std::max({err, (t.x[k] - orc.x[k]).cwiseAbs().maxCoeff(),
                    (t.u[k] - orc.u[k]).cwiseAbs().maxCoeff()});
  }
  json& b = rep.body;
  b["command"] = "oracle";
  b["kind"] = s.kind;
  b["steps"] = N;
  b["max_node_error"] = err;
  b["cost_riccati"] = t.cost;
  b["cost_oracle"] = orc.cost;
  b["relative_cost_error"] = std::abs(orc.cost - t.cost) / std::max(1e-300, std::abs(t.cost));
  b["kkt_residual"] = orc.kkt_residual;
  rep.files.push_back(csv.path().string());
  return rep;
}

// The 2x2 example plant with y_c = 0, y_e = 1, x(0) = (1, 1), t1 = 10.
inline Scenario figure1_scenario(bool f_equals_c) {
  Scenario s;
  const double r3 = std::sqrt(3.0);
  s.plant.E = Matrix::Identity(2, 2);
  s.plant.A = Matrix(2, 2);
  s.plant.A << 2, 0, 0, -1;
  s.plant.B = Matrix(2, 1);
  s.plant.B << 1, 1;
  s.plant.C = Matrix(1, 2);
  s.plant.C << 0, r3;
  s.plant.F = Matrix(1, 2);
  if (f_equals_c)
    s.plant.F = s.plant.C;
  else
    s.plant.F << r3, 0;
  s.x0 = Vector::Ones(2);
  s.y_c = Vector::Zero(1);
  s.y_e = Vector::Ones(1);
  s.t1 = 10.0;
  return s;
}

inline RunReport cmd_figure1(const Options& o, int grid, const Tolerances& tol) {
  RunReport rep;
  json& b = rep.body;
  b["command"] = "figure1";
  struct Variant {
    std::string tag;
    DreSolution dre;
    OptimalTrajectory traj;
  };
  std::vector<Variant> vs;
  for (bool eq : {true, false}) {
    Scenario s = figure1_scenario(eq);
    s.grid = grid;
    s.tol = tol;
    LtiPlant p = s.lti();
    vs.push_back({eq ? "FeqC" : "FperpC", solve_dre(p, s.t1, grid, tol),
                  optimal_trajectory(p, s.x0, s.y_c, s.y_e, s.t1, grid, tol)});
  }
  Options oo = o;
  oo.stem = "figure1";
  {
    CsvWriter csv(detail::out_path(oo, "_dre.csv"), {"t", "normP_fro_FeqC", "normP_fro_FperpC"});
    for (int k = 0; k < grid; ++k)
      csv.row({vs[0].dre.grid[k], vs[0].dre.P[k].norm(), vs[1].dre.P[k].norm()});
    rep.files.push_back(csv.path().string());
  }
  const Matrix C = figure1_scenario(true).plant.C, Fp = figure1_scenario(false).plant.F;
  for (auto& v : vs) {
    CsvWriter csv(detail::out_path(oo, "_state_" + v.tag + ".csv"), {"t", "abs_x_1", "abs_x_2"});
    double min_norm = INFINITY, min_comp = INFINITY;
    for (int k = 0; k < grid; ++k) {
      const Vector& x = v.traj.x[k];
      csv.row({v.traj.grid[k], std::abs(x(0)), std::abs(x(1))});
      min_norm = std::min(min_norm, x.norm());
      min_comp = std::min(min_comp, x.cwiseAbs().minCoeff());
    }
    rep.files.push_back(csv.path().string());
    json j;
    j["normP0_fro"] = v.dre.P.front().norm();
    j["x_t1"] = detail::to_json(v.traj.x.back());
    j["min_norm_x"] = min_norm;
    j["min_abs_component"] = min_comp;
    j["cost"] = v.traj.cost;
    b[v.tag] = j;
  }
  {
    CsvWriter csv(detail::out_path(oo, "_output.csv"),
                  {"t", "Fx_FeqC", "Cx_FeqC", "Fx_FperpC", "Cx_FperpC"});
    for (int k = 0; k < grid; ++k) {
      const Vector& xe = vs[0].traj.x[k];
      const Vector& xp = vs[1].traj.x[k];
      csv.row({vs[0].traj.grid[k], (C * xe)(0), (C * xe)(0), (Fp * xp)(0), (C * xp)(0)});
    }
    rep.files.push_back(csv.path().string());
  }
  return rep;
}

}  // namespace turnpike::cli
