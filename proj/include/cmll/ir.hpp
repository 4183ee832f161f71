#pragma once

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "cmll/realify.hpp"

namespace cmll::ir {

struct InfeasibleExpansionPoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BlockKind { Scalar, RealVector, HermitianPsd };

/// One variable block in the flat real parameter vector. HermitianPsd blocks
/// hold the M*M free real parameters of a complex Hermitian M x M matrix
/// (diagonal first, then (re, im) pairs for the strict upper triangle); the
/// solver keeps the 2M x 2M real embedding positive definite.
struct VariableBlock {
  BlockKind kind = BlockKind::Scalar;
  std::string name;
  int offset = 0;
  int size = 1;
  int cdim = 0;  // complex dimension M for HermitianPsd blocks
  double lower = -std::numeric_limits<double>::infinity();  // Scalar only
};

/// Sparse affine functional c0 + sum coef_j * x_{idx_j}.
struct LinearExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;

  void add(int idx, double coef) {
    if (coef != 0.0) terms.emplace_back(idx, coef);
  }
  // extended-precision accumulation: constraint slacks are O(1)
  // cancellations read at ~1e-9, so double anchors would dominate them
  long double eval_ld(const VecR& x) const {
    long double v = constant;
    for (const auto& [i, c] : terms) v += static_cast<long double>(c) * x[i];
    return v;
  }
  double eval(const VecR& x) const { return static_cast<double>(eval_ld(x)); }
};

/// x_B^T Q x_B over the coordinates [offset, offset + Q.rows()).
struct QuadTerm {
  int offset = 0;
  MatR Q;  // symmetric PSD
};

/// num / den(x); convex on den > 0 for num > 0.
struct RecipTerm {
  double num = 1.0;
  LinearExpr den;
};

/// -kappa * ln(arg(x)); convex for arg > 0.
struct LogTerm {
  double kappa = 1.0;
  LinearExpr arg;
};

/// Sparse symmetric matrix, full entry list (both triangles).
struct SparseSym {
  std::vector<std::tuple<int, int, double>> entries;
};

/// -kappa * ln det(C0 + sum_j x_{idx_j} * D_j); convex where the affine
/// matrix is positive definite.
struct LogDetTerm {
  double kappa = 1.0;
  MatR C0;
  std::vector<int> idx;
  std::vector<SparseSym> maps;
};

/// Convex expression: affine + quadratics + reciprocals + negative logs +
/// negative log-dets. Atoms constrain expr <= 0; the objective is an Expr
/// minimized directly.
struct Expr {
  LinearExpr lin;
  std::vector<QuadTerm> quads;
  std::vector<RecipTerm> recips;
  std::vector<LogTerm> logs;
  std::vector<LogDetTerm> logdets;

  /// Value at x; sets in_domain=false when a log/recip/logdet argument
  /// leaves its cone.
  double eval(const VecR& x, bool& in_domain) const;

  /// grad += w * d expr / dx. `scratch` must be a zeroed dense n-vector and
  /// is left zeroed on the support afterwards by the caller.
  void add_gradient(const VecR& x, double w, VecR& grad) const;

  /// H += w * d^2 expr / dx^2 (symmetric, both triangles filled).
  void add_hessian(const VecR& x, double w, MatR& H) const;

  /// Sorted list of coordinates the expression touches.
  std::vector<int> support() const;
};

struct ConstraintAtom {
  std::string name;
  Expr expr;  // expr(x) <= 0
};

struct SubproblemIR {
  std::vector<VariableBlock> blocks;
  Expr objective;
  std::vector<ConstraintAtom> atoms;
  VecR start;

  int dim() const {
    if (blocks.empty()) return 0;
    const auto& b = blocks.back();
    return b.offset + b.size;
  }

  int add_scalar(const std::string& name, double lower, double start_value);
  int add_real_vector(const std::string& name, const VecR& start_value);
  int add_hermitian(const std::string& name, const MatC& start_value);

  const VariableBlock& block(int id) const { return blocks[id]; }

  /// Throws InfeasibleExpansionPoint unless the start point satisfies every
  /// atom and cone strictly (slack > floor).
  void validate_start(double floor = 1e-12) const;

  /// Human-readable dump of variables, atoms, and the start point.
  std::string dump() const;
};

// --- Hermitian parameterization helpers ------------------------------------

int hermitian_param_count(int cdim);

/// Real-embedded basis matrices T(E_j), one per parameter, each sparse.
std::vector<SparseSym> hermitian_basis(int cdim);

/// Parameters -> 2M x 2M real embedding.
MatR materialize_hermitian(const VecR& x, int offset, int cdim);

/// Parameters -> complex Hermitian matrix.
MatC hermitian_from_params(const VecR& x, int offset, int cdim);

/// Complex Hermitian matrix -> parameter vector (length M*M).
VecR params_from_hermitian(const MatC& w);

/// Linear coefficients of tr(C * X(p)) over a block's parameters, for a real
/// symmetric C of size 2M x 2M. With C = 0.5 * realify(H) this equals the
/// complex trace Tr(H W).
VecR trace_coefficients(const MatR& c, int cdim);

}  // namespace cmll::ir
