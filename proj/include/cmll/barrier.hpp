#pragma once

#include <iosfwd>
#include <limits>

#include "cmll/ir.hpp"

namespace cmll::solver {

struct InfeasiblePoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverSettings {
  double t0 = 1.0;            // initial barrier parameter
  double mu_growth = 10.0;    // barrier growth factor (> 1)
  // half squared Newton decrement threshold of the scaled merit f0 + Phi/t
  double newton_tol = 1e-9;
  double kkt_tol = 1e-9;      // stationarity target at the final t
  double gap_tol = 1e-8;      // barrier duality-gap target (#terms / t)
  int max_newton_per_center = 60;
  int max_centerings = 60;
  double armijo_alpha = 0.1;  // in (0, 0.5)
  double armijo_beta = 0.5;   // in (0, 1)
  double boundary_frac = 0.99;
  double start_floor = 1e-12;
  std::ostream* trace = nullptr;  // CSV rows: centering,newton,objective,residual
};

enum class Status { Converged, MaxIterations, LineSearchStall, NumericalBreakdown };

struct SolveReport {
  VecR x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double t_final = 0.0;
  int centerings = 0;
  int newton_steps = 0;
  Status status = Status::NumericalBreakdown;

  bool converged() const { return status == Status::Converged; }
};

/// Count of barrier terms (inequality atoms + PSD cones + scalar bounds).
int barrier_term_count(const ir::SubproblemIR& prob);

/// Primal log-barrier Newton solve of a SubproblemIR from its strictly
/// feasible start point.
SolveReport solve(const ir::SubproblemIR& prob, const SolverSettings& settings);

/// || grad f0 + (1/t) grad Phi ||_2 at a strictly feasible point, Phi being
/// the full log barrier. Throws InfeasiblePoint otherwise.
double kkt_residual(const ir::SubproblemIR& prob, const VecR& x, double t);

/// Same with the reference barrier parameter implied by the default gap
/// tolerance.
double kkt_residual(const ir::SubproblemIR& prob, const VecR& x);

}  // namespace cmll::solver
