#pragma once

// Test-only helpers: a generator of random tiny scalar subproblems and an
// implementation-independent grid-refinement search used as the optimality
// oracle for the barrier solver.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cmll/ir.hpp"
#include "cmll/rng.hpp"

namespace cmll::testutil {

struct TinyInstance {
  ir::SubproblemIR prob;
  std::vector<double> lo, hi;  // search box per coordinate
};

/// Random convex subproblem over <= 6 bounded scalars, strictly feasible at
/// its start point by construction.
inline TinyInstance random_tiny_instance(Rng& rng, int max_dim = 6) {
  TinyInstance t;
  const int d = 1 + static_cast<int>(rng.below(max_dim));
  std::vector<double> x0(d);
  for (int j = 0; j < d; ++j) {
    x0[j] = rng.uniform(0.5, 1.5);
    const double lb = std::max(0.0, x0[j] - rng.uniform(0.4, 1.2));
    const double ub = x0[j] + rng.uniform(0.4, 1.2);
    t.lo.push_back(lb);
    t.hi.push_back(ub);
    t.prob.add_scalar("x" + std::to_string(j), lb, x0[j]);
    ir::ConstraintAtom box;
    box.name = "ub" + std::to_string(j);
    box.expr.lin.constant = -ub;
    box.expr.lin.add(j, 1.0);
    t.prob.atoms.push_back(std::move(box));
  }

  // objective: affine plus an optional diagonal quadratic
  for (int j = 0; j < d; ++j) t.prob.objective.lin.add(j, rng.uniform(-1, 1));
  if (rng.uniform() < 0.7) {
    ir::QuadTerm q;
    q.offset = 0;
    q.Q = MatR::Zero(d, d);
    for (int j = 0; j < d; ++j) q.Q(j, j) = rng.uniform(0.0, 1.0);
    t.prob.objective.quads.push_back(std::move(q));
  }

  const int n_atoms = 1 + static_cast<int>(rng.below(3));
  for (int a = 0; a < n_atoms; ++a) {
    ir::ConstraintAtom atom;
    atom.name = "c" + std::to_string(a);
    const int kind = static_cast<int>(rng.below(3));
    if (kind == 0) {  // affine
      double at_x0 = 0;
      for (int j = 0; j < d; ++j) {
        const double c = rng.uniform(-1, 1);
        atom.expr.lin.add(j, c);
        at_x0 += c * x0[j];
      }
      atom.expr.lin.constant = -at_x0 - rng.uniform(0.1, 1.0);
    } else if (kind == 1) {  // convex quadratic
      MatR L = MatR::Zero(d, d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c <= r; ++c) L(r, c) = rng.uniform(-0.7, 0.7);
      ir::QuadTerm q;
      q.offset = 0;
      q.Q = L * L.transpose();
      double at_x0 = 0;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) at_x0 += q.Q(r, c) * x0[r] * x0[c];
      atom.expr.quads.push_back(std::move(q));
      atom.expr.lin.constant = -at_x0 - rng.uniform(0.1, 1.0);
    } else {  // affine minus log
      ir::LogTerm lt;
      lt.kappa = rng.uniform(0.2, 1.5);
      lt.arg.constant = rng.uniform(0.2, 0.8);
      double arg_x0 = lt.arg.constant;
      for (int j = 0; j < d; ++j) {
        const double c = rng.uniform(0.0, 1.0);
        lt.arg.add(j, c);
        arg_x0 += c * x0[j];
      }
      double lin_x0 = 0;
      for (int j = 0; j < d; ++j) {
        const double c = rng.uniform(-0.5, 0.5);
        atom.expr.lin.add(j, c);
        lin_x0 += c * x0[j];
      }
      atom.expr.lin.constant =
          lt.kappa * std::log(arg_x0) - lin_x0 - rng.uniform(0.1, 1.0);
      atom.expr.logs.push_back(std::move(lt));
    }
    t.prob.atoms.push_back(std::move(atom));
  }
  t.prob.validate_start();
  return t;
}

/// Multi-resolution grid search over the boxed feasible set; independent of
/// the solver machinery (uses only Expr::eval).
inline double grid_search_oracle(const TinyInstance& t, int points_per_dim = 9,
                                 int rounds = 14, double shrink = 0.45) {
  const int d = static_cast<int>(t.lo.size());
  std::vector<double> lo = t.lo, hi = t.hi;
  std::vector<double> best_x(t.prob.start.data(), t.prob.start.data() + d);
  bool ok = true;
  double best = t.prob.objective.eval(t.prob.start, ok);

  const int ppd = d <= 3 ? 17 : points_per_dim;
  std::vector<int> idx(d, 0);
  VecR x(d);
  for (int round = 0; round < rounds; ++round) {
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      for (int j = 0; j < d; ++j)
        x[j] = lo[j] + (hi[j] - lo[j]) * idx[j] / double(ppd - 1);
      bool feasible = true;
      for (int j = 0; j < d && feasible; ++j)
        feasible = x[j] >= t.lo[j] && x[j] <= t.hi[j] &&
                   x[j] > t.prob.blocks[j].lower;
      for (const auto& atom : t.prob.atoms) {
        if (!feasible) break;
        bool in_domain = true;
        feasible = atom.expr.eval(x, in_domain) <= 0.0 && in_domain;
      }
      if (feasible) {
        bool in_domain = true;
        const double v = t.prob.objective.eval(x, in_domain);
        if (in_domain && v < best) {
          best = v;
          for (int j = 0; j < d; ++j) best_x[j] = x[j];
        }
      }
      int j = 0;
      while (j < d && ++idx[j] == ppd) idx[j++] = 0;
      if (j == d) break;
    }
    for (int j = 0; j < d; ++j) {
      const double half = 0.5 * shrink * (hi[j] - lo[j]);
      lo[j] = std::max(t.lo[j], best_x[j] - half);
      hi[j] = std::min(t.hi[j], best_x[j] + half);
    }
  }
  return best;
}

}  // namespace cmll::testutil
