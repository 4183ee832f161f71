#include "cmll/realify.hpp"

namespace cmll {

MatR realify(const MatC& m, double hermitian_tol) {
  if (m.rows() != m.cols()) throw NonHermitianInput("realify: matrix not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (((m - m.adjoint()).cwiseAbs().maxCoeff()) > hermitian_tol * scale)
    throw NonHermitianInput("realify: matrix not Hermitian");
  const Eigen::Index n = m.rows();
  MatR x(2 * n, 2 * n);
  x.topLeftCorner(n, n) = m.real();
  x.bottomRightCorner(n, n) = m.real();
  x.topRightCorner(n, n) = -m.imag();
  x.bottomLeftCorner(n, n) = m.imag();
  // symmetrize away representation round-off
  x = 0.5 * (x + x.transpose()).eval();
  return x;
}

MatC derealify(const MatR& x) {
  if (x.rows() != x.cols() || x.rows() % 2 != 0)
    throw std::invalid_argument("derealify: bad dimensions");
  const Eigen::Index n = x.rows() / 2;
  MatR re = 0.5 * (x.topLeftCorner(n, n) + x.bottomRightCorner(n, n));
  MatR im = 0.5 * (x.bottomLeftCorner(n, n) - x.topRightCorner(n, n));
  re = 0.5 * (re + re.transpose()).eval();
  im = 0.5 * (im - im.transpose()).eval();
  return re.cast<std::complex<double>>() +
         std::complex<double>(0, 1) * im.cast<std::complex<double>>();
}

VecR realify_vec(const VecC& w) {
  VecR x(2 * w.size());
  x.head(w.size()) = w.real();
  x.tail(w.size()) = w.imag();
  return x;
}

VecC derealify_vec(const VecR& x) {
  if (x.size() % 2 != 0) throw std::invalid_argument("derealify_vec: odd length");
  const Eigen::Index n = x.size() / 2;
  return x.head(n).cast<std::complex<double>>() +
         std::complex<double>(0, 1) * x.tail(n).cast<std::complex<double>>();
}

}  // namespace cmll
