#include "cmll/surrogates.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace cmll::ir {

double phi(double a, double b, double floor) {
  if (b <= floor) throw SingularExpansionPoint("phi: scalar expansion point <= floor");
  return std::log(b) + (a - b) / b;
}

double phi(const MatC& a, const MatC& b, double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("phi: size mismatch");
  Eigen::SelfAdjointEigenSolver<MatC> es(b);
  double logdet_b = 0;
  for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
    const double ev = es.eigenvalues()(j);
    if (ev <= floor)
      throw SingularExpansionPoint("phi: expansion matrix not PD above floor");
    logdet_b += std::log(ev);
  }
  const MatC binv_a = es.operatorInverseSqrt() * a * es.operatorInverseSqrt();
  return logdet_b + std::real(binv_a.trace()) - static_cast<double>(b.rows());
}

double phi_bar(const VecC& w, double chi, const VecC& w_t, double chi_t,
               const VecC& h) {
  if (chi_t <= 0) throw SingularExpansionPoint("phi_bar: chi_t must be > 0");
  const std::complex<double> ht_w = h.dot(w);      // h^H w
  const std::complex<double> ht_wt = h.dot(w_t);   // h^H w_t
  const double lin = 2.0 * std::real(std::conj(ht_wt) * ht_w) / chi_t;
  const double ratio = std::abs(ht_wt) / chi_t;
  return lin - ratio * ratio * chi;
}

}  // namespace cmll::ir
