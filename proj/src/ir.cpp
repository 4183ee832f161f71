#include "cmll/ir.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <set>
#include <sstream>

namespace cmll::ir {

namespace {

/// LLT-based log-det; returns false when the matrix is not positive definite.
bool logdet_pd(const MatR& m, double& out) {
  Eigen::LLT<MatR> llt(m);
  if (llt.info() != Eigen::Success) return false;
  double s = 0;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    const double d = llt.matrixL()(j, j);
    if (!(d > 0) || !std::isfinite(d)) return false;
    s += std::log(d);
  }
  out = 2.0 * s;
  return true;
}

MatR assemble_logdet_matrix(const LogDetTerm& term, const VecR& x) {
  MatR m = term.C0;
  for (std::size_t j = 0; j < term.idx.size(); ++j) {
    const double v = x[term.idx[j]];
    if (v == 0.0) continue;
    for (const auto& [r, c, val] : term.maps[j].entries) m(r, c) += v * val;
  }
  return m;
}

}  // namespace

double Expr::eval(const VecR& x, bool& in_domain) const {
  in_domain = true;
  long double v = lin.eval_ld(x);
  for (const auto& q : quads) {
    long double qv = 0;
    for (Eigen::Index r = 0; r < q.Q.rows(); ++r) {
      long double rowdot = 0;
      for (Eigen::Index c = 0; c < q.Q.cols(); ++c)
        rowdot += static_cast<long double>(q.Q(r, c)) * x[q.offset + c];
      qv += rowdot * x[q.offset + r];
    }
    v += qv;
  }
  for (const auto& r : recips) {
    const long double den = r.den.eval_ld(x);
    if (den <= 0) {
      in_domain = false;
      return std::numeric_limits<double>::infinity();
    }
    v += static_cast<long double>(r.num) / den;
  }
  for (const auto& l : logs) {
    const long double arg = l.arg.eval_ld(x);
    if (arg <= 0) {
      in_domain = false;
      return std::numeric_limits<double>::infinity();
    }
    v -= static_cast<long double>(l.kappa) * logl(arg);
  }
  for (const auto& ld : logdets) {
    double val = 0;
    if (!logdet_pd(assemble_logdet_matrix(ld, x), val)) {
      in_domain = false;
      return std::numeric_limits<double>::infinity();
    }
    v -= static_cast<long double>(ld.kappa) * val;
  }
  return static_cast<double>(v);
}

void Expr::add_gradient(const VecR& x, double w, VecR& grad) const {
  for (const auto& [i, c] : lin.terms) grad[i] += w * c;
  for (const auto& q : quads) {
    const auto xb = x.segment(q.offset, q.Q.rows());
    grad.segment(q.offset, q.Q.rows()).noalias() += (2.0 * w) * (q.Q * xb);
  }
  for (const auto& r : recips) {
    const double den = r.den.eval(x);
    const double s = -w * r.num / (den * den);
    for (const auto& [i, c] : r.den.terms) grad[i] += s * c;
  }
  for (const auto& l : logs) {
    const double arg = l.arg.eval(x);
    const double s = -w * l.kappa / arg;
    for (const auto& [i, c] : l.arg.terms) grad[i] += s * c;
  }
  for (const auto& ld : logdets) {
    const MatR m = assemble_logdet_matrix(ld, x);
    const MatR minv = m.llt().solve(MatR::Identity(m.rows(), m.cols()));
    for (std::size_t j = 0; j < ld.idx.size(); ++j) {
      double tr = 0;
      for (const auto& [r, c, val] : ld.maps[j].entries) tr += val * minv(c, r);
      grad[ld.idx[j]] -= w * ld.kappa * tr;
    }
  }
}

void Expr::add_hessian(const VecR& x, double w, MatR& H) const {
  for (const auto& q : quads)
    H.block(q.offset, q.offset, q.Q.rows(), q.Q.cols()) += (2.0 * w) * q.Q;
  for (const auto& r : recips) {
    const double den = r.den.eval(x);
    const double s = 2.0 * w * r.num / (den * den * den);
    for (const auto& [i, ci] : r.den.terms)
      for (const auto& [j, cj] : r.den.terms) H(i, j) += s * ci * cj;
  }
  for (const auto& l : logs) {
    const double arg = l.arg.eval(x);
    const double s = w * l.kappa / (arg * arg);
    for (const auto& [i, ci] : l.arg.terms)
      for (const auto& [j, cj] : l.arg.terms) H(i, j) += s * ci * cj;
  }
  for (const auto& ld : logdets) {
    const MatR m = assemble_logdet_matrix(ld, x);
    const MatR minv = m.llt().solve(MatR::Identity(m.rows(), m.cols()));
    // d^2(-ln det)/dxj dxk = tr(Minv Dj Minv Dk), expanded over sparse maps
    const std::size_t nj = ld.idx.size();
    for (std::size_t j = 0; j < nj; ++j) {
      for (std::size_t k = j; k < nj; ++k) {
        double tr = 0;
        for (const auto& [p, q, vj] : ld.maps[j].entries)
          for (const auto& [r, s, vk] : ld.maps[k].entries)
            tr += vj * vk * minv(q, r) * minv(s, p);
        const double add = w * ld.kappa * tr;
        H(ld.idx[j], ld.idx[k]) += add;
        if (k != j) H(ld.idx[k], ld.idx[j]) += add;
      }
    }
  }
}

std::vector<int> Expr::support() const {
  std::set<int> s;
  for (const auto& [i, c] : lin.terms) s.insert(i);
  for (const auto& q : quads)
    for (int i = 0; i < q.Q.rows(); ++i) s.insert(q.offset + i);
  for (const auto& r : recips)
    for (const auto& [i, c] : r.den.terms) s.insert(i);
  for (const auto& l : logs)
    for (const auto& [i, c] : l.arg.terms) s.insert(i);
  for (const auto& ld : logdets)
    for (int i : ld.idx) s.insert(i);
  return {s.begin(), s.end()};
}

int SubproblemIR::add_scalar(const std::string& name, double lower,
                             double start_value) {
  VariableBlock b;
  b.kind = BlockKind::Scalar;
  b.name = name;
  b.offset = dim();
  b.size = 1;
  b.lower = lower;
  blocks.push_back(b);
  start.conservativeResize(dim());
  start[b.offset] = start_value;
  return static_cast<int>(blocks.size()) - 1;
}

int SubproblemIR::add_real_vector(const std::string& name, const VecR& start_value) {
  VariableBlock b;
  b.kind = BlockKind::RealVector;
  b.name = name;
  b.offset = dim();
  b.size = static_cast<int>(start_value.size());
  blocks.push_back(b);
  start.conservativeResize(dim());
  start.segment(b.offset, b.size) = start_value;
  return static_cast<int>(blocks.size()) - 1;
}

int SubproblemIR::add_hermitian(const std::string& name, const MatC& start_value) {
  VariableBlock b;
  b.kind = BlockKind::HermitianPsd;
  b.name = name;
  b.cdim = static_cast<int>(start_value.rows());
  b.offset = dim();
  b.size = hermitian_param_count(b.cdim);
  blocks.push_back(b);
  start.conservativeResize(dim());
  start.segment(b.offset, b.size) = params_from_hermitian(start_value);
  return static_cast<int>(blocks.size()) - 1;
}

void SubproblemIR::validate_start(double floor) const {
  if (start.size() != dim())
    throw InfeasibleExpansionPoint("start point has wrong dimension");
  for (const auto& b : blocks) {
    if (b.kind == BlockKind::Scalar && std::isfinite(b.lower)) {
      if (!(start[b.offset] > b.lower + floor))
        throw InfeasibleExpansionPoint("start violates bound on " + b.name);
    } else if (b.kind == BlockKind::HermitianPsd) {
      double ld = 0;
      MatR x = materialize_hermitian(start, b.offset, b.cdim);
      x.diagonal().array() -= floor;
      if (!logdet_pd(x, ld))
        throw InfeasibleExpansionPoint("start not strictly PSD for " + b.name);
    }
  }
  bool in_domain = true;
  for (const auto& a : atoms) {
    const double v = a.expr.eval(start, in_domain);
    if (!in_domain || !(v < -floor))
      throw InfeasibleExpansionPoint("start not strictly feasible for " + a.name);
  }
  const double f0 = objective.eval(start, in_domain);
  if (!in_domain || !std::isfinite(f0))
    throw InfeasibleExpansionPoint("objective not finite at start");
}

std::string SubproblemIR::dump() const {
  std::ostringstream os;
  os.precision(12);
  os << "subproblem dim=" << dim() << "\n";
  for (const auto& b : blocks) {
    os << "  block " << b.name << " kind=";
    switch (b.kind) {
      case BlockKind::Scalar: os << "scalar lower=" << b.lower; break;
      case BlockKind::RealVector: os << "real-vector size=" << b.size; break;
      case BlockKind::HermitianPsd: os << "hermitian-psd cdim=" << b.cdim; break;
    }
    os << " offset=" << b.offset << "\n";
  }
  auto describe = [&os](const Expr& e) {
    os << "affine c0=" << e.lin.constant << " nnz=" << e.lin.terms.size();
    if (!e.quads.empty()) os << " quads=" << e.quads.size();
    if (!e.recips.empty()) os << " recips=" << e.recips.size();
    if (!e.logs.empty()) os << " logs=" << e.logs.size();
    if (!e.logdets.empty()) os << " logdets=" << e.logdets.size();
  };
  os << "  objective: ";
  describe(objective);
  os << "\n";
  for (const auto& a : atoms) {
    bool ok = true;
    const double v = a.expr.eval(start, ok);
    os << "  atom " << a.name << ": ";
    describe(a.expr);
    os << " value@start=" << v << "\n";
  }
  os << "  start=[";
  for (Eigen::Index i = 0; i < start.size(); ++i)
    os << (i ? "," : "") << start[i];
  os << "]\n";
  return os.str();
}

int hermitian_param_count(int cdim) { return cdim * cdim; }

std::vector<SparseSym> hermitian_basis(int cdim) {
  const int m = cdim;
  std::vector<SparseSym> basis;
  basis.reserve(hermitian_param_count(m));
  for (int d = 0; d < m; ++d) {
    SparseSym s;
    s.entries = {{d, d, 1.0}, {m + d, m + d, 1.0}};
    basis.push_back(std::move(s));
  }
  for (int u = 0; u < m; ++u) {
    for (int v = u + 1; v < m; ++v) {
      SparseSym re;
      re.entries = {{u, v, 1.0}, {v, u, 1.0}, {m + u, m + v, 1.0}, {m + v, m + u, 1.0}};
      basis.push_back(std::move(re));
      SparseSym im;
      im.entries = {{u, m + v, -1.0}, {m + v, u, -1.0}, {v, m + u, 1.0}, {m + u, v, 1.0}};
      basis.push_back(std::move(im));
    }
  }
  return basis;
}

MatR materialize_hermitian(const VecR& x, int offset, int cdim) {
  const int m = cdim;
  MatR out = MatR::Zero(2 * m, 2 * m);
  int j = offset;
  for (int d = 0; d < m; ++d, ++j) {
    out(d, d) = x[j];
    out(m + d, m + d) = x[j];
  }
  for (int u = 0; u < m; ++u) {
    for (int v = u + 1; v < m; ++v) {
      const double re = x[j++];
      const double im = x[j++];
      out(u, v) = re;
      out(v, u) = re;
      out(m + u, m + v) = re;
      out(m + v, m + u) = re;
      out(u, m + v) = -im;
      out(m + v, u) = -im;
      out(v, m + u) = im;
      out(m + u, v) = im;
    }
  }
  return out;
}

MatC hermitian_from_params(const VecR& x, int offset, int cdim) {
  const int m = cdim;
  MatC out = MatC::Zero(m, m);
  int j = offset;
  for (int d = 0; d < m; ++d, ++j) out(d, d) = x[j];
  for (int u = 0; u < m; ++u) {
    for (int v = u + 1; v < m; ++v) {
      const double re = x[j++];
      const double im = x[j++];
      out(u, v) = {re, im};
      out(v, u) = {re, -im};
    }
  }
  return out;
}

VecR params_from_hermitian(const MatC& w) {
  const int m = static_cast<int>(w.rows());
  VecR x(hermitian_param_count(m));
  int j = 0;
  for (int d = 0; d < m; ++d) x[j++] = std::real(w(d, d));
  for (int u = 0; u < m; ++u) {
    for (int v = u + 1; v < m; ++v) {
      x[j++] = std::real(w(u, v));
      x[j++] = std::imag(w(u, v));
    }
  }
  return x;
}

VecR trace_coefficients(const MatR& c, int cdim) {
  const auto basis = hermitian_basis(cdim);
  VecR out(basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    double v = 0;
    for (const auto& [r, col, val] : basis[j].entries) v += val * c(r, col);
    out[static_cast<Eigen::Index>(j)] = v;
  }
  return out;
}

}  // namespace cmll::ir
