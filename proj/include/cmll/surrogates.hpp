#pragma once

#include "cmll/realify.hpp"

namespace cmll::ir {

struct SingularExpansionPoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tangent of ln(.) at b, evaluated at a: ln(b) + (a-b)/b. Over-estimates
/// ln(a) for every a > 0, with equality at a = b.
double phi(double a, double b, double floor = 1e-12);

/// Matrix version: ln det(B) + tr(B^{-1}(A-B)) for Hermitian A, B with
/// B positive definite. Over-estimates ln det(A) on the PSD cone.
double phi(const MatC& a, const MatC& b, double floor = 1e-12);

/// Tangent under-estimator of |h^H w|^2 / chi around (w_t, chi_t):
///   2 Re((w_t)^H h h^H w) / chi_t - (|h^H w_t| / chi_t)^2 chi.
/// Affine in (w, chi), tight at the expansion point.
double phi_bar(const VecC& w, double chi, const VecC& w_t, double chi_t,
               const VecC& h);

}  // namespace cmll::ir
