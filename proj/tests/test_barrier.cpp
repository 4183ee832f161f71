#include <doctest.h>

#include <cstring>
#include <sstream>

#include "cmll/barrier.hpp"
#include "oracle_utils.hpp"

using namespace cmll;

TEST_CASE("linear program corner: min x s.t. x >= 1") {
  ir::SubproblemIR p;
  p.add_scalar("x", -std::numeric_limits<double>::infinity(), 3.0);
  ir::ConstraintAtom atom;
  atom.name = "x_ge_1";
  atom.expr.lin.constant = 1.0;
  atom.expr.lin.add(0, -1.0);
  p.atoms.push_back(std::move(atom));
  p.objective.lin.add(0, 1.0);
  p.validate_start();

  const auto rep = solver::solve(p, {});
  CHECK(rep.converged());
  CHECK(rep.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.gap <= 1e-8);
}

TEST_CASE("min x - ln x over x > 0") {
  ir::SubproblemIR p;
  p.add_scalar("x", 0.0, 4.0);
  p.objective.lin.add(0, 1.0);
  ir::LogTerm lt;
  lt.arg.add(0, 1.0);
  p.objective.logs.push_back(std::move(lt));

  const auto rep = solver::solve(p, {});
  CHECK(rep.converged());
  CHECK(rep.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(rep.kkt_residual <= 1e-8);

  // stationarity at the true optimum, at a perturbed point, and at random
  // feasible points
  VecR opt(1);
  opt[0] = 1.0;
  CHECK(solver::kkt_residual(p, opt) <= 1e-8);
  VecR shifted(1);
  shifted[0] = 1.1;
  CHECK(solver::kkt_residual(p, shifted) > 1e-3);
  Rng rng(3);
  for (int rep2 = 0; rep2 < 30; ++rep2) {
    VecR x(1);
    x[0] = rng.uniform(0.2, 3.0);
    CHECK(solver::kkt_residual(p, x) >= solver::kkt_residual(p, opt) - 1e-12);
  }
  VecR infeasible(1);
  infeasible[0] = -0.5;
  CHECK_THROWS_AS(solver::kkt_residual(p, infeasible, 1e6),
                  solver::InfeasiblePoint);
}

TEST_CASE("three-variable quadratic against the grid oracle") {
  // min ||x||^2 subject to x1 + x2 + x3 >= 1.5 and per coordinate boxes
  testutil::TinyInstance t;
  for (int j = 0; j < 3; ++j) {
    t.lo.push_back(0.0);
    t.hi.push_back(2.0);
    t.prob.add_scalar("x" + std::to_string(j), 0.0, 1.0);
    ir::ConstraintAtom box;
    box.name = "ub" + std::to_string(j);
    box.expr.lin.constant = -2.0;
    box.expr.lin.add(j, 1.0);
    t.prob.atoms.push_back(std::move(box));
  }
  ir::ConstraintAtom sum;
  sum.name = "sum_ge";
  sum.expr.lin.constant = 1.5;
  for (int j = 0; j < 3; ++j) sum.expr.lin.add(j, -1.0);
  t.prob.atoms.push_back(std::move(sum));
  ir::QuadTerm q;
  q.offset = 0;
  q.Q = MatR::Identity(3, 3);
  t.prob.objective.quads.push_back(std::move(q));
  t.prob.validate_start();

  const auto rep = solver::solve(t.prob, {});
  CHECK(rep.converged());
  const double oracle = testutil::grid_search_oracle(t);
  CHECK(std::abs(rep.objective - oracle) <= 1e-4);
  // analytic optimum: x = 0.5 each, objective 0.75
  CHECK(rep.objective == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("random tiny instances match the grid oracle") {
  Rng rng(2024);
  for (int it = 0; it < 40; ++it) {
    auto t = testutil::random_tiny_instance(rng);
    const auto rep = solver::solve(t.prob, {});
    REQUIRE(rep.converged());
    CHECK(rep.kkt_residual <= 1e-8);
    const double oracle = testutil::grid_search_oracle(t);
    CHECK(std::abs(rep.objective - oracle) <= 1e-3);
    // converged reports satisfy every atom within 1e-8
    bool ok = true;
    for (const auto& atom : t.prob.atoms)
      CHECK(atom.expr.eval(rep.x, ok) <= 1e-8);
  }
}

TEST_CASE("determinism: identical problem and settings, identical report") {
  Rng rng(7);
  auto t = testutil::random_tiny_instance(rng);
  const auto a = solver::solve(t.prob, {});
  const auto b = solver::solve(t.prob, {});
  REQUIRE(a.x.size() == b.x.size());
  CHECK(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * a.x.size()) == 0);
  CHECK(a.objective == b.objective);
  CHECK(a.newton_steps == b.newton_steps);
}

TEST_CASE("solver trace emission") {
  ir::SubproblemIR p;
  p.add_scalar("x", 0.0, 4.0);
  p.objective.lin.add(0, 1.0);
  ir::LogTerm lt;
  lt.arg.add(0, 1.0);
  p.objective.logs.push_back(std::move(lt));
  std::ostringstream trace;
  solver::SolverSettings s;
  s.trace = &trace;
  solver::solve(p, s);
  CHECK(trace.str().find(',') != std::string::npos);
}
