#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

namespace cmll {

using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

struct NonHermitianInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// 2N x 2N real embedding [[Re M, -Im M], [Im M, Re M]] of a Hermitian M.
/// Preserves positive semidefiniteness and doubles eigenvalue multiplicity,
/// so ln det realify(M) = 2 ln det M.
MatR realify(const MatC& m, double hermitian_tol = 1e-10);

/// Inverse of realify for matrices with the embedded block structure.
MatC derealify(const MatR& x);

/// [Re w; Im w] stacking of a complex vector. For Hermitian H,
/// w^H H w == realify_vec(w)^T realify(H) realify_vec(w).
VecR realify_vec(const VecC& w);

VecC derealify_vec(const VecR& x);

}  // namespace cmll
