#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"

using namespace turnpike;
using namespace turnpike::cli;

namespace {

struct Flags {
  std::string scenario;
  std::string out;
  std::optional<int> grid;
  int steps = 2000;
  std::optional<double> tol_ode;
  std::optional<std::uint32_t> seed;
  bool dump = false;
};

Scenario prepare(const Flags& f, Options& o) {
  Scenario s = load_scenario(f.scenario);
  if (f.grid) {
    if (*f.grid < 16) throw InputError("--grid must be at least 16");
    s.grid = *f.grid;
  }
  if (f.tol_ode) {
    s.tol.ode_rel = *f.tol_ode;
    s.tol.validate();
  }
  if (f.seed) s.seed = *f.seed;
  std::filesystem::path sp(f.scenario);
  o.stem = sp.stem().string();
  o.out_dir = f.out.empty() ? sp.parent_path() : std::filesystem::path(f.out);
  o.steps = f.steps;
  return s;
}

int emit(const RunReport& r) {
  std::cout << r.to_json().dump(2) << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-horizon LQR, Riccati flows and turnpike diagnostics"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* c, bool with_scenario) {
    if (with_scenario) {
      c->add_option("scenario", f.scenario, "scenario JSON file")->required();
      c->add_flag("--dump-normalized", f.dump, "print the normalized scenario and exit");
      c->add_option("--seed", f.seed, "seed for the randomized regularity test");
    }
    c->add_option("--out", f.out, "output directory");
    c->add_option("--grid", f.grid, "number of output grid nodes");
    c->add_option("--tol-ode", f.tol_ode, "relative ODE tolerance");
  };

  auto* check = app.add_subcommand("check", "structural checks");
  auto* are = app.add_subcommand("are", "algebraic Riccati solve");
  auto* dre = app.add_subcommand("dre", "differential Riccati solve, writes t,normP_fro");
  auto* sim = app.add_subcommand("simulate", "optimal trajectory, writes t,x,u,y");
  auto* tp = app.add_subcommand("turnpike", "turnpike fit, writes t,dist_x,dist_u,envelope");
  auto* orc = app.add_subcommand("oracle", "direct transcription comparison");
  auto* fig = app.add_subcommand("figure1", "DRE norm, state and output data for the 2x2 example");
  for (auto* c : {check, are, dre, sim, tp, orc}) add_common(c, true);
  add_common(fig, false);
  orc->add_option("--steps", f.steps, "transcription steps")->check(CLI::Range(50, 1000000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    Options o;
    if (fig->parsed()) {
      Tolerances tol;
      if (f.tol_ode) tol.ode_rel = *f.tol_ode;
      tol.validate();
      int grid = f.grid.value_or(101);
      if (grid < 16) throw InputError("--grid must be at least 16");
      o.out_dir = f.out.empty() ? std::filesystem::path(".") : std::filesystem::path(f.out);
      return emit(cmd_figure1(o, grid, tol));
    }
    Scenario s = prepare(f, o);
    if (f.dump) {
      std::cout << normalized(s).dump(2) << "\n";
      return 0;
    }
    if (check->parsed()) {
      RunReport r = cmd_check(s);
      if (r.exit_code == 2)
        for (const auto& v : r.body["violated"])
          std::cerr << "assumption violated: " << v.get<std::string>() << "\n";
      return emit(r);
    }
    if (are->parsed()) return emit(cmd_are(s));
    if (dre->parsed()) return emit(cmd_dre(s, o));
    if (sim->parsed()) return emit(cmd_simulate(s, o));
    if (tp->parsed()) return emit(cmd_turnpike(s, o));
    if (orc->parsed()) return emit(cmd_oracle(s, o));
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
