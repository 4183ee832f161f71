#include "cmll/builders.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <cstdlib>
#include <iostream>

#include "cmll/surrogates.hpp"

namespace cmll::ir {

namespace {

constexpr double kRel = 1e-7;   // relative slack carved out for strict starts
constexpr double kAbs = 1e-11;  // absolute slack floor

std::vector<int> active_errhs(const model::Instance& inst, int g) {
  std::vector<int> act;
  for (int i = 0; i < inst.config.K_R; ++i)
    if (!inst.cache.uncached_for_group(g, i)) act.push_back(i);
  return act;
}

VecC sub_channel(const model::Instance& inst, int k, const std::vector<int>& act) {
  const int N_t = inst.config.N_t;
  VecC h(static_cast<Eigen::Index>(act.size()) * N_t);
  for (std::size_t a = 0; a < act.size(); ++a)
    h.segment(static_cast<Eigen::Index>(a) * N_t, N_t) =
        inst.channels.stacked(k).segment(
            static_cast<Eigen::Index>(act[a]) * N_t, N_t);
  return h;
}

/// Restrict an embedded basis element of a cdim-M hermitian block to the
/// embedded space of the complex diagonal subblock (i,i) of width N_t.
SparseSym restrict_basis(const SparseSym& s, int M, int i, int N_t) {
  SparseSym out;
  const int lo = i * N_t, hi = (i + 1) * N_t;
  for (const auto& [r, c, v] : s.entries) {
    const int rc = r < M ? r : r - M;
    const int cc = c < M ? c : c - M;
    if (rc < lo || rc >= hi || cc < lo || cc >= hi) return SparseSym{};
    const int rn = (r < M ? 0 : N_t) + (rc - lo);
    const int cn = (c < M ? 0 : N_t) + (cc - lo);
    out.entries.emplace_back(rn, cn, v);
  }
  return out;
}

void add_scaled(LinearExpr& dst, const LinearExpr& src, double s) {
  dst.constant += s * src.constant;
  for (const auto& [i, c] : src.terms) dst.add(i, s * c);
}

double real_logdet(const MatR& m) {
  Eigen::LLT<MatR> llt(m);
  if (llt.info() != Eigen::Success)
    throw InfeasibleExpansionPoint("expansion matrix not positive definite");
  double s = 0;
  for (Eigen::Index j = 0; j < m.rows(); ++j) s += std::log(llt.matrixL()(j, j));
  return 2.0 * s;
}

/// ln S - ln eta - ln r <= 0 (latency coupling (18c)/(30f))
void add_log_latency_atom(SubproblemIR& p, double S, int eta_off, int r_off,
                          const std::string& name) {
  ConstraintAtom atom;
  atom.name = name;
  atom.expr.lin.constant = std::log(S);
  LogTerm le;
  le.arg.add(eta_off, 1.0);
  atom.expr.logs.push_back(le);
  LogTerm lr;
  lr.arg.add(r_off, 1.0);
  atom.expr.logs.push_back(lr);
  p.atoms.push_back(std::move(atom));
}

}  // namespace

// --------------------------------------------------------------------------
// FCBT subproblem (18)
// --------------------------------------------------------------------------

FcbtProblem build_fcbt_subproblem(const model::Instance& inst,
                                  const std::vector<VecC>& w_prev) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const int K_U = cfg.K_U;
  const int N_t = cfg.N_t;
  if (static_cast<int>(w_prev.size()) != G)
    throw std::invalid_argument("build_fcbt_subproblem: wrong beam count");

  FcbtProblem out;
  auto& p = out.ir;
  out.active.resize(G);
  out.w.assign(G, -1);
  out.r.assign(G, -1);
  out.gamma.assign(K_U, -1);
  out.chi.assign(K_U, -1);

  // per-group masked channel data and power-feasible start beams
  std::vector<VecC> w_start(G);
  for (int g = 0; g < G; ++g) {
    out.active[g] = active_errhs(inst, g);
    if (out.active[g].empty())
      throw std::invalid_argument(
          "build_fcbt_subproblem: group without any transmitting eRRH");
    if (w_prev[g].size() !=
        static_cast<Eigen::Index>(out.active[g].size()) * N_t)
      throw std::invalid_argument("build_fcbt_subproblem: beam dim mismatch");
    w_start[g] = w_prev[g];
  }
  // shrink per-eRRH power to keep the start strictly inside the budget
  for (int i = 0; i < cfg.K_R; ++i) {
    double pow_i = 0;
    for (int g = 0; g < G; ++g) {
      const auto& act = out.active[g];
      const auto it = std::find(act.begin(), act.end(), i);
      if (it == act.end()) continue;
      const int pos = static_cast<int>(it - act.begin());
      pow_i += w_start[g].segment(static_cast<Eigen::Index>(pos) * N_t, N_t)
                   .squaredNorm();
    }
    if (pow_i > (1.0 - 1e-9) * cfg.P[i]) {
      const double s = std::sqrt((1.0 - 1e-8) * cfg.P[i] / pow_i);
      for (int g = 0; g < G; ++g) {
        const auto& act = out.active[g];
        const auto it = std::find(act.begin(), act.end(), i);
        if (it == act.end()) continue;
        const int pos = static_cast<int>(it - act.begin());
        w_start[g].segment(static_cast<Eigen::Index>(pos) * N_t, N_t) *= s;
      }
    }
  }

  const int eta = p.add_scalar("eta", 0.0, 1.0);  // start patched below
  out.eta = p.blocks[eta].offset;
  for (int g = 0; g < G; ++g) {
    const int id = p.add_scalar("r_" + std::to_string(g), 0.0, 1.0);
    out.r[g] = p.blocks[id].offset;
  }
  for (int k = 0; k < K_U; ++k) {
    const int id = p.add_scalar("gamma_" + std::to_string(k), 0.0, 1.0);
    out.gamma[k] = p.blocks[id].offset;
  }
  for (int k = 0; k < K_U; ++k) {
    const int id = p.add_scalar("chi_" + std::to_string(k), 0.0, 1.0);
    out.chi[k] = p.blocks[id].offset;
  }
  for (int g = 0; g < G; ++g) {
    const int id =
        p.add_real_vector("w_" + std::to_string(g), realify_vec(w_start[g]));
    out.w[g] = id;
  }

  // expansion data: chi per Eq. (19), evaluated at the start beams
  std::vector<double> chi_t(K_U);
  std::vector<VecC> h_sub(K_U);  // per user, channel restricted to own group? no: per (k,g) pairs needed
  for (int k = 0; k < K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    double interf = cfg.sigma2[k];
    for (int g = 0; g < G; ++g) {
      if (g == gk) continue;
      const VecC hs = sub_channel(inst, k, out.active[g]);
      interf += std::norm(hs.dot(w_start[g]));
    }
    chi_t[k] = interf;
  }

  VecR x = p.start;  // mutable copy for start patching

  // (15d) interference + sigma^2 <= chi_k  and (16c) gamma <= phi_bar
  for (int k = 0; k < K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    ConstraintAtom interf;
    interf.name = "interference_" + std::to_string(k);
    interf.expr.lin.constant = cfg.sigma2[k];
    interf.expr.lin.add(out.chi[k], -1.0);
    for (int g = 0; g < G; ++g) {
      if (g == gk) continue;
      const VecC hs = sub_channel(inst, k, out.active[g]);
      QuadTerm q;
      q.offset = p.blocks[out.w[g]].offset;
      q.Q = realify(hs * hs.adjoint());
      interf.expr.quads.push_back(std::move(q));
    }
    p.atoms.push_back(std::move(interf));

    const VecC hs = sub_channel(inst, k, out.active[gk]);
    const VecC hw = hs * (hs.dot(w_start[gk]));  // h (h^H w_t)
    const double num_t = std::abs(hs.dot(w_start[gk]));
    const double ratio = num_t / chi_t[k];
    ConstraintAtom tangent;
    tangent.name = "sinr_tangent_" + std::to_string(k);
    tangent.expr.lin.add(out.gamma[k], 1.0);
    tangent.expr.lin.add(out.chi[k], ratio * ratio);
    const VecR a = realify_vec(hw) * (2.0 / chi_t[k]);
    const int off = p.blocks[out.w[gk]].offset;
    for (Eigen::Index j = 0; j < a.size(); ++j)
      tangent.expr.lin.add(off + static_cast<int>(j), -a[j]);
    p.atoms.push_back(std::move(tangent));

    // start values with strict slack
    const double chi_s = chi_t[k] * (1.0 + kRel) + kAbs;
    x[out.chi[k]] = chi_s;
    const double gamma_max =
        2.0 * num_t * num_t / chi_t[k] - ratio * ratio * chi_s;
    const double gamma_s = gamma_max * (1.0 - kRel) - kAbs;
    if (!(gamma_s > 0))
      throw InfeasibleExpansionPoint("fcbt: tangent SINR not positive at start");
    x[out.gamma[k]] = gamma_s;
  }

  // (15b) r_g <= ln(1 + gamma_k)
  for (int g = 0; g < G; ++g) {
    double r_bound = std::numeric_limits<double>::infinity();
    for (int k : inst.cache.users_in_group(g)) {
      ConstraintAtom rate;
      rate.name = "rate_g" + std::to_string(g) + "_k" + std::to_string(k);
      rate.expr.lin.add(out.r[g], 1.0);
      LogTerm lt;
      lt.arg.constant = 1.0;
      lt.arg.add(out.gamma[k], 1.0);
      rate.expr.logs.push_back(std::move(lt));
      p.atoms.push_back(std::move(rate));
      r_bound = std::min(r_bound, std::log1p(x[out.gamma[k]]));
    }
    const double r_s = r_bound * (1.0 - kRel) - kAbs;
    if (!(r_s > cfg.rate_floor))
      throw InfeasibleExpansionPoint("fcbt: start rate below floor");
    x[out.r[g]] = r_s;
  }

  // (15e) per-eRRH power
  for (int i = 0; i < cfg.K_R; ++i) {
    ConstraintAtom power;
    power.name = "power_" + std::to_string(i);
    power.expr.lin.constant = -cfg.P[i];
    bool any = false;
    for (int g = 0; g < G; ++g) {
      const auto& act = out.active[g];
      const auto it = std::find(act.begin(), act.end(), i);
      if (it == act.end()) continue;
      const int pos = static_cast<int>(it - act.begin());
      const int dim = static_cast<int>(act.size()) * N_t;
      MatR Q = MatR::Zero(2 * dim, 2 * dim);
      for (int a = 0; a < N_t; ++a) {
        Q(pos * N_t + a, pos * N_t + a) = 1.0;
        Q(dim + pos * N_t + a, dim + pos * N_t + a) = 1.0;
      }
      QuadTerm qt;
      qt.offset = p.blocks[out.w[g]].offset;
      qt.Q = std::move(Q);
      power.expr.quads.push_back(std::move(qt));
      any = true;
    }
    if (any) p.atoms.push_back(std::move(power));
  }

  // (18c) latency coupling and eta start
  double eta_s = 0;
  for (int g = 0; g < G; ++g) {
    add_log_latency_atom(p, cfg.S, out.eta, out.r[g],
                         "latency_g" + std::to_string(g));
    eta_s = std::max(eta_s, cfg.S / x[out.r[g]]);
  }
  x[out.eta] = eta_s * (1.0 + kRel) + kAbs;

  p.objective.lin.add(out.eta, 1.0);
  p.start = x;
  p.validate_start();
  return out;
}

// --------------------------------------------------------------------------
// Lifted (SDR) helpers
// --------------------------------------------------------------------------

PartialIterate interiorize(const model::Instance& inst, PartialIterate it) {
  const auto& cfg = inst.config;
  const int N_t = cfg.N_t;
  const int G = inst.cache.groups();
  for (auto& om : it.Omega) {
    if (om.size() == 0) continue;
    const double bump = std::max(1e-9, 1e-8 * std::real(om.trace()) / N_t);
    om += bump * MatC::Identity(N_t, N_t);
  }
  for (auto& wb : it.W_bar) {
    const Eigen::Index m = wb.rows();
    const double bump = std::max(1e-9, 1e-8 * std::real(wb.trace()) / double(m));
    wb += bump * MatC::Identity(m, m);
  }
  for (auto& wp : it.W) {
    if (wp.size() == 0) continue;
    const Eigen::Index m = wp.rows();
    const double bump = std::max(1e-9, 1e-8 * std::real(wp.trace()) / double(m));
    wp += bump * MatC::Identity(m, m);
  }
  // phase-III power: scale per-eRRH subblocks back inside the budget
  for (int i = 0; i < cfg.K_R; ++i) {
    double tr_om = 0;
    if (i < static_cast<int>(it.Omega.size()) && it.Omega[i].size() != 0)
      tr_om = std::real(it.Omega[i].trace());
    double pow_i = tr_om;
    for (int g = 0; g < G; ++g)
      pow_i += std::real(it.W_bar[g].block(i * N_t, i * N_t, N_t, N_t).trace());
    const double cap = (1.0 - 1e-7) * cfg.P[i];
    if (pow_i > cap) {
      const double s = (cap - tr_om) / (pow_i - tr_om);
      if (!(s > 0))
        throw InfeasibleExpansionPoint("interiorize: Omega exceeds power budget");
      const double rs = std::sqrt(s);
      for (int g = 0; g < G; ++g) {
        it.W_bar[g].block(i * N_t, 0, N_t, it.W_bar[g].cols()) *= rs;
        it.W_bar[g].block(0, i * N_t, it.W_bar[g].rows(), N_t) *= rs;
      }
    }
  }
  // phase-II power (PCPT): same treatment in the masked coordinates
  if (!it.W.empty()) {
    for (int i = 0; i < cfg.K_R; ++i) {
      double pow_i = 0;
      std::vector<std::pair<int, int>> touch;  // (g, pos)
      for (int g = 0; g < G; ++g) {
        if (it.W[g].size() == 0) continue;
        const auto act = active_errhs(inst, g);
        const auto itr = std::find(act.begin(), act.end(), i);
        if (itr == act.end()) continue;
        const int pos = static_cast<int>(itr - act.begin());
        touch.emplace_back(g, pos);
        pow_i +=
            std::real(it.W[g].block(pos * N_t, pos * N_t, N_t, N_t).trace());
      }
      const double cap = (1.0 - 1e-7) * cfg.P[i];
      if (pow_i > cap) {
        const double rs = std::sqrt(cap / pow_i);
        for (const auto& [g, pos] : touch) {
          it.W[g].block(pos * N_t, 0, N_t, it.W[g].cols()) *= rs;
          it.W[g].block(0, pos * N_t, it.W[g].rows(), N_t) *= rs;
        }
      }
    }
  }
  return it;
}

double fronthaul_rate_lifted(const model::Instance& inst,
                             const std::vector<MatC>& W_bar,
                             const std::vector<MatC>& Omega, int i) {
  const auto& cfg = inst.config;
  const int N_t = cfg.N_t;
  if (inst.cache.fully_cached(i)) return std::numeric_limits<double>::infinity();
  MatC A = Omega[i];
  for (int g = 0; g < inst.cache.groups(); ++g)
    if (inst.cache.uncached_for_group(g, i))
      A += W_bar[g].block(i * N_t, i * N_t, N_t, N_t);
  Eigen::SelfAdjointEigenSolver<MatC> ea(A, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<MatC> eo(Omega[i], Eigen::EigenvaluesOnly);
  double ld_a = 0, ld_o = 0;
  for (Eigen::Index j = 0; j < N_t; ++j) {
    ld_a += std::log(std::max(ea.eigenvalues()(j), cfg.psd_floor));
    ld_o += std::log(std::max(eo.eigenvalues()(j), cfg.psd_floor));
  }
  return ld_a - ld_o;
}

double min_fronthaul_lifted(const model::Instance& inst,
                            const std::vector<MatC>& W_bar,
                            const std::vector<MatC>& Omega) {
  double out = std::numeric_limits<double>::infinity();
  for (int i : inst.cache.fetch_set())
    out = std::min(out, fronthaul_rate_lifted(inst, W_bar, Omega, i));
  return out;
}

std::pair<double, double> mu_chi_lifted(const model::Instance& inst,
                                        const std::vector<MatC>& mats,
                                        const std::vector<MatC>& Omega, int k,
                                        bool with_omega) {
  const auto& cfg = inst.config;
  const int gk = inst.cache.group_of_user[k];
  const int N_t = cfg.N_t;
  double mu = cfg.sigma2[k], chi = cfg.sigma2[k];
  for (int g = 0; g < inst.cache.groups(); ++g) {
    if (mats[g].size() == 0) continue;
    double tr;
    if (mats[g].rows() == inst.channels.stacked(k).size()) {
      const VecC& hk = inst.channels.stacked(k);
      tr = std::real(hk.dot(mats[g] * hk));
    } else {
      const VecC hs = sub_channel(inst, k, active_errhs(inst, g));
      tr = std::real(hs.dot(mats[g] * hs));
    }
    mu += tr;
    if (g != gk) chi += tr;
  }
  if (with_omega) {
    for (int i = 0; i < static_cast<int>(Omega.size()); ++i) {
      if (Omega[i].size() == 0) continue;
      const VecC hki =
          inst.channels.stacked(k).segment(static_cast<Eigen::Index>(i) * N_t, N_t);
      const double tr = std::real(hki.dot(Omega[i] * hki));
      mu += tr;
      chi += tr;
    }
  }
  return {mu, chi};
}

// --------------------------------------------------------------------------
// Shared SDR core for PCBT / PCPT / JCEO
// --------------------------------------------------------------------------

namespace {

struct SdrCore {
  const model::Instance* inst = nullptr;
  const PartialIterate* prev = nullptr;
  std::vector<int> fetch;
  std::vector<int> Wbar_blocks;          // block ids per group
  std::vector<int> Omega_blocks;         // block ids per eRRH (-1 if absent)
  std::vector<LinearExpr> mu2, chi2;     // per user, over the IR coordinates
  std::vector<double> mu2_start, chi2_start;
  std::vector<double> g_start;           // fronthaul rate at start per eRRH

  struct AData {
    std::vector<int> idx;
    std::vector<SparseSym> maps;
    MatR RAt_inv;
    double half_lndet_r = 0;  // ln|A_t| in the complex convention
  };
  std::map<int, AData> A;  // per fetch eRRH
};

/// Adds the hermitian blocks, builds the per-user trace functionals, the
/// power atoms (30c), the fronthaul tangents (30e) and the A_i log-det data.
SdrCore setup_sdr_core(SubproblemIR& p, const model::Instance& inst,
                       const PartialIterate& prev) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const int M = cfg.stacked_dim();
  const int N_t = cfg.N_t;

  SdrCore core;
  core.inst = &inst;
  core.prev = &prev;
  core.fetch = inst.cache.fetch_set();

  core.Wbar_blocks.resize(G);
  for (int g = 0; g < G; ++g)
    core.Wbar_blocks[g] = p.add_hermitian("Wbar_" + std::to_string(g), prev.W_bar[g]);
  core.Omega_blocks.assign(cfg.K_R, -1);
  for (int i : core.fetch)
    core.Omega_blocks[i] = p.add_hermitian("Omega_" + std::to_string(i), prev.Omega[i]);

  const auto basis_M = hermitian_basis(M);
  const auto basis_N = hermitian_basis(N_t);

  // per-user mu/chi linear functionals
  core.mu2.resize(cfg.K_U);
  core.chi2.resize(cfg.K_U);
  core.mu2_start.resize(cfg.K_U);
  core.chi2_start.resize(cfg.K_U);
  for (int k = 0; k < cfg.K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    LinearExpr mu;
    mu.constant = cfg.sigma2[k];
    LinearExpr chi = mu;
    const MatR Hk_half = 0.5 * realify(inst.channels.outer(k));
    for (int g = 0; g < G; ++g) {
      const VecR coef = trace_coefficients(Hk_half, M);
      const int off = p.blocks[core.Wbar_blocks[g]].offset;
      for (Eigen::Index j = 0; j < coef.size(); ++j) {
        if (coef[j] == 0.0) continue;
        mu.add(off + static_cast<int>(j), coef[j]);
        if (g != gk) chi.add(off + static_cast<int>(j), coef[j]);
      }
    }
    for (int i : core.fetch) {
      const VecC hki =
          inst.channels.stacked(k).segment(static_cast<Eigen::Index>(i) * N_t, N_t);
      const MatC Hsub = hki * hki.adjoint();
      const VecR coef = trace_coefficients(0.5 * realify(Hsub), N_t);
      const int off = p.blocks[core.Omega_blocks[i]].offset;
      for (Eigen::Index j = 0; j < coef.size(); ++j) {
        if (coef[j] == 0.0) continue;
        mu.add(off + static_cast<int>(j), coef[j]);
        chi.add(off + static_cast<int>(j), coef[j]);
      }
    }
    core.mu2[k] = std::move(mu);
    core.chi2[k] = std::move(chi);
    const auto [mu_v, chi_v] = mu_chi_lifted(inst, prev.W_bar, prev.Omega, k, true);
    core.mu2_start[k] = mu_v;
    core.chi2_start[k] = chi_v;
  }

  // (30c) per-eRRH power
  for (int i = 0; i < cfg.K_R; ++i) {
    ConstraintAtom power;
    power.name = "power3_" + std::to_string(i);
    power.expr.lin.constant = -cfg.P[i];
    for (int g = 0; g < G; ++g) {
      const int off = p.blocks[core.Wbar_blocks[g]].offset;
      for (int a = i * N_t; a < (i + 1) * N_t; ++a)
        power.expr.lin.add(off + a, 1.0);  // diagonal parameters come first
    }
    if (core.Omega_blocks[i] >= 0) {
      const int off = p.blocks[core.Omega_blocks[i]].offset;
      for (int a = 0; a < N_t; ++a) power.expr.lin.add(off + a, 1.0);
    }
    p.atoms.push_back(std::move(power));
  }

  // A_i log-det data and fronthaul tangents (30e)
  core.g_start.assign(cfg.K_R, std::numeric_limits<double>::infinity());
  for (int i : core.fetch) {
    SdrCore::AData data;
    MatC At = prev.Omega[i];
    for (int g = 0; g < G; ++g) {
      if (!inst.cache.uncached_for_group(g, i)) continue;
      At += prev.W_bar[g].block(i * N_t, i * N_t, N_t, N_t);
      const int off = p.blocks[core.Wbar_blocks[g]].offset;
      for (std::size_t j = 0; j < basis_M.size(); ++j) {
        SparseSym r = restrict_basis(basis_M[j], M, i, N_t);
        if (r.entries.empty()) continue;
        data.idx.push_back(off + static_cast<int>(j));
        data.maps.push_back(std::move(r));
      }
    }
    {
      const int off = p.blocks[core.Omega_blocks[i]].offset;
      for (std::size_t j = 0; j < basis_N.size(); ++j) {
        data.idx.push_back(off + static_cast<int>(j));
        data.maps.push_back(basis_N[j]);
      }
    }
    const MatR RAt = realify(At);
    data.half_lndet_r = 0.5 * real_logdet(RAt);
    data.RAt_inv = RAt.llt().solve(MatR::Identity(RAt.rows(), RAt.cols()));
    core.g_start[i] = fronthaul_rate_lifted(inst, prev.W_bar, prev.Omega, i);

    ConstraintAtom fr;
    fr.name = "fronthaul_" + std::to_string(i);
    fr.expr.lin.constant = data.half_lndet_r - N_t - cfg.C[i];
    for (std::size_t j = 0; j < data.idx.size(); ++j) {
      double tr = 0;
      for (const auto& [r, c, v] : data.maps[j].entries)
        tr += v * data.RAt_inv(c, r);
      fr.expr.lin.add(data.idx[j], 0.5 * tr);
    }
    LogDetTerm om_ld;
    om_ld.kappa = 0.5;
    om_ld.C0 = MatR::Zero(2 * N_t, 2 * N_t);
    const int om_off = p.blocks[core.Omega_blocks[i]].offset;
    for (std::size_t j = 0; j < basis_N.size(); ++j) {
      om_ld.idx.push_back(om_off + static_cast<int>(j));
      om_ld.maps.push_back(basis_N[j]);
    }
    fr.expr.logdets.push_back(std::move(om_ld));
    p.atoms.push_back(std::move(fr));

    core.A.emplace(i, std::move(data));
  }
  return core;
}

/// (30b)/(45c)-style rate atom: r + phi(chi, chi_t) - ln(mu) <= 0
void add_rate_atom(SubproblemIR& p, const std::string& name, int r_off,
                   const LinearExpr& chi, double chi_t, const LinearExpr& mu) {
  ConstraintAtom atom;
  atom.name = name;
  atom.expr.lin.add(r_off, 1.0);
  atom.expr.lin.constant += std::log(chi_t) - 1.0;
  add_scaled(atom.expr.lin, chi, 1.0 / chi_t);
  LogTerm lt;
  lt.kappa = 1.0;
  lt.arg = mu;
  atom.expr.logs.push_back(std::move(lt));
  p.atoms.push_back(std::move(atom));
}

/// Penalty hinge pair for the fetch eRRH i:
///   t_i >= S/theta + phi(Omega_i, Omega_i^t) - ln|A_i| + rho*lambda, t_i >= 0
/// with the squared slack (1/2rho) t_i^2 in the objective.
void add_hinge(SubproblemIR& p, const SdrCore& core, int i, int theta_off,
               int t_off, double lambda, double rho, const model::Instance& inst) {
  const int N_t = inst.config.N_t;
  const auto& data = core.A.at(i);
  ConstraintAtom atom;
  atom.name = "penalty_" + std::to_string(i);
  RecipTerm rt;
  rt.num = inst.config.S;
  rt.den.add(theta_off, 1.0);
  atom.expr.recips.push_back(std::move(rt));
  // phi(Omega_i, Omega_i^t): affine in the Omega parameters
  const MatC& Om_t = core.prev->Omega[i];
  const MatR ROt = realify(Om_t);
  const MatR ROt_inv = ROt.llt().solve(MatR::Identity(2 * N_t, 2 * N_t));
  atom.expr.lin.constant += 0.5 * real_logdet(ROt) - N_t + rho * lambda;
  const auto basis_N = hermitian_basis(N_t);
  const int om_off = p.blocks[core.Omega_blocks[i]].offset;
  for (std::size_t j = 0; j < basis_N.size(); ++j) {
    double tr = 0;
    for (const auto& [r, c, v] : basis_N[j].entries) tr += v * ROt_inv(c, r);
    atom.expr.lin.add(om_off + static_cast<int>(j), 0.5 * tr);
  }
  atom.expr.lin.add(t_off, -1.0);
  LogDetTerm a_ld;
  a_ld.kappa = 0.5;
  a_ld.C0 = MatR::Zero(2 * N_t, 2 * N_t);
  a_ld.idx = data.idx;
  a_ld.maps = data.maps;
  atom.expr.logdets.push_back(std::move(a_ld));
  p.atoms.push_back(std::move(atom));
}

double hinge_start_value(const SdrCore& core, int i, double theta_s,
                         double lambda, double rho, double S) {
  const double e = S / theta_s - core.g_start[i] + rho * lambda;
  return std::max(e, 0.0) + std::max(1e-9, kRel * std::abs(e));
}

/// Convex majorant of the negative penalty branch: s_i >= -e_i through the
/// tangents of the concave pieces -S/theta and ln|A_i| at the expansion
/// point. Needed by the pipelined scheme, where an inflated theta buys phase
/// II time and the one-sided hinge alone leaves the equality slack.
void add_negative_hinge(SubproblemIR& p, const SdrCore& core, int i,
                        int theta_off, double theta_s, int s_off, double lambda,
                        double rho, const model::Instance& inst) {
  const int N_t = inst.config.N_t;
  const double S = inst.config.S;
  const auto& data = core.A.at(i);
  ConstraintAtom atom;
  atom.name = "penalty_neg_" + std::to_string(i);
  // tangent of -S/theta at theta_s
  atom.expr.lin.constant = -2.0 * S / theta_s - rho * lambda;
  atom.expr.lin.add(theta_off, S / (theta_s * theta_s));
  // + phi(A_i, A_i^t)
  atom.expr.lin.constant += data.half_lndet_r - N_t;
  for (std::size_t j = 0; j < data.idx.size(); ++j) {
    double tr = 0;
    for (const auto& [r, c, v] : data.maps[j].entries) tr += v * data.RAt_inv(c, r);
    atom.expr.lin.add(data.idx[j], 0.5 * tr);
  }
  // - phi(Omega_i, Omega_i^t)
  const MatC& Om_t = core.prev->Omega[i];
  const MatR ROt = realify(Om_t);
  const MatR ROt_inv = ROt.llt().solve(MatR::Identity(2 * N_t, 2 * N_t));
  atom.expr.lin.constant -= 0.5 * real_logdet(ROt) - N_t;
  const auto basis_N = hermitian_basis(N_t);
  const int om_off = p.blocks[core.Omega_blocks[i]].offset;
  for (std::size_t j = 0; j < basis_N.size(); ++j) {
    double tr = 0;
    for (const auto& [r, c, v] : basis_N[j].entries) tr += v * ROt_inv(c, r);
    atom.expr.lin.add(om_off + static_cast<int>(j), -0.5 * tr);
  }
  atom.expr.lin.add(s_off, -1.0);
  p.atoms.push_back(std::move(atom));
}

}  // namespace

// --------------------------------------------------------------------------
// PCBT subproblem (30)
// --------------------------------------------------------------------------

PcbtProblem build_pcbt_subproblem(const model::Instance& inst,
                                  const PartialIterate& prev, double lambda,
                                  double rho) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();

  PcbtProblem out;
  auto& p = out.ir;

  const int eta_id = p.add_scalar("eta", 0.0, 1.0);
  out.eta = p.blocks[eta_id].offset;
  const bool has_fetch = !inst.cache.fetch_set().empty();
  if (has_fetch) {
    const int theta_id = p.add_scalar("theta", 0.0, 1.0);
    out.theta = p.blocks[theta_id].offset;
  }
  out.r.resize(G);
  for (int g = 0; g < G; ++g) {
    const int id = p.add_scalar("r2_" + std::to_string(g), 0.0, 1.0);
    out.r[g] = p.blocks[id].offset;
  }

  SdrCore core = setup_sdr_core(p, inst, prev);
  out.W_bar = core.Wbar_blocks;
  out.Omega = core.Omega_blocks;
  out.hinge.assign(cfg.K_R, -1);

  VecR x = p.start;

  // (30b) rates
  for (int k = 0; k < cfg.K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    add_rate_atom(p, "rate_k" + std::to_string(k), out.r[gk], core.chi2[k],
                  core.chi2_start[k], core.mu2[k]);
  }
  for (int g = 0; g < G; ++g) {
    double bound = std::numeric_limits<double>::infinity();
    for (int k : inst.cache.users_in_group(g))
      bound = std::min(bound,
                       std::log(core.mu2_start[k]) - std::log(core.chi2_start[k]));
    const double r_s = bound * (1.0 - kRel) - kAbs;
    if (!(r_s > cfg.rate_floor))
      throw InfeasibleExpansionPoint("pcbt: start rate below floor");
    x[out.r[g]] = r_s;
  }

  // (30f) latency coupling
  double eta_s = 0;
  for (int g = 0; g < G; ++g) {
    add_log_latency_atom(p, cfg.S, out.eta, out.r[g],
                         "latency_g" + std::to_string(g));
    eta_s = std::max(eta_s, cfg.S / x[out.r[g]]);
  }
  x[out.eta] = eta_s * (1.0 + kRel) + kAbs;

  p.objective.lin.add(out.eta, 1.0);

  if (has_fetch) {
    double min_g = std::numeric_limits<double>::infinity();
    for (int i : core.fetch) min_g = std::min(min_g, core.g_start[i]);
    const double theta_s = std::min(cfg.S / std::max(min_g, 1e-12), 1e9);
    x[out.theta] = theta_s;
    p.objective.lin.add(out.theta, 1.0);
    for (int i : core.fetch) {
      const int t_id = p.add_scalar("hinge_" + std::to_string(i), 0.0, 1.0);
      out.hinge[i] = p.blocks[t_id].offset;
      x.conservativeResize(p.dim());
      add_hinge(p, core, i, out.theta, out.hinge[i], lambda, rho, inst);
      x[out.hinge[i]] = hinge_start_value(core, i, theta_s, lambda, rho, cfg.S);
      QuadTerm qt;
      qt.offset = out.hinge[i];
      qt.Q = MatR::Constant(1, 1, 0.5 / rho);
      p.objective.quads.push_back(std::move(qt));
    }
  }

  p.start = x;
  p.validate_start();
  return out;
}

// --------------------------------------------------------------------------
// PCPT subproblem (45)
// --------------------------------------------------------------------------

PcptProblem build_pcpt_subproblem(const model::Instance& inst,
                                  const PartialIterate& prev,
                                  const PcptExpansion& exp, double lambda,
                                  double rho) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const int N_t = cfg.N_t;
  const double S = cfg.S;

  PcptProblem out;
  auto& p = out.ir;

  // phase-II viability per group: structural (no cached copy anywhere) or a
  // collapsed phase-II rate; either way the group falls back to the (30f)
  // coupling, matching the paper's swap rule in the limit r_{g,1} -> 0
  std::vector<double> bound1(G, 0.0);
  out.swap_group.resize(G);
  out.dropped_group.assign(G, false);
  for (int g = 0; g < G; ++g) {
    out.swap_group[g] =
        active_errhs(inst, g).empty() || prev.W[g].size() == 0;
    if (!out.swap_group[g]) {
      double b = std::numeric_limits<double>::infinity();
      for (int k : inst.cache.users_in_group(g)) {
        const auto [mu, chi] = mu_chi_lifted(inst, prev.W, prev.Omega, k, false);
        b = std::min(b, std::log(mu) - std::log(chi));
      }
      bound1[g] = b;
      if (!(b > 1e-8)) out.swap_group[g] = true;
      // a phase-II rate pinned at the model's floor delivers nothing; the
      // group behaves as the r_{g,1} -> 0 limit
      if (exp.r1[g] > 0 && (exp.r1[g] < inst.config.rate_floor ||
                            exp.theta * exp.r1[g] < 1e-10))
        out.swap_group[g] = true;
    }
    if (!out.swap_group[g] && exp.kappa[g] < 1e-7 * S) out.dropped_group[g] = true;
  }

  const int eta_id = p.add_scalar("eta", 0.0, 1.0);
  out.eta = p.blocks[eta_id].offset;
  const int theta_id = p.add_scalar("theta", 0.0, 1.0);
  out.theta = p.blocks[theta_id].offset;

  out.r1.assign(G, -1);
  out.r2.assign(G, -1);
  out.psi.assign(G, -1);
  out.kappa.assign(G, -1);
  out.W.assign(G, -1);
  for (int g = 0; g < G; ++g) {
    const int id = p.add_scalar("r2_" + std::to_string(g), 0.0, 1.0);
    out.r2[g] = p.blocks[id].offset;
    if (!out.swap_group[g]) {
      const int id1 = p.add_scalar("r1_" + std::to_string(g), 0.0, 1.0);
      out.r1[g] = p.blocks[id1].offset;
      if (!out.dropped_group[g]) {
        const int idp = p.add_scalar("psi_" + std::to_string(g), 0.0, 1.0);
        out.psi[g] = p.blocks[idp].offset;
        const int idk = p.add_scalar("kappa_" + std::to_string(g), 0.0, 1.0);
        out.kappa[g] = p.blocks[idk].offset;
      }
    }
  }

  SdrCore core = setup_sdr_core(p, inst, prev);
  out.W_bar = core.Wbar_blocks;
  out.Omega = core.Omega_blocks;
  out.hinge.assign(cfg.K_R, -1);

  // phase-II lifted blocks in masked coordinates
  std::vector<std::vector<int>> act(G);
  for (int g = 0; g < G; ++g) {
    if (out.swap_group[g]) continue;
    act[g] = active_errhs(inst, g);
    out.W[g] = p.add_hermitian("W_" + std::to_string(g), prev.W[g]);
  }

  VecR x = p.start;
  x.conservativeResize(p.dim());

  // phase-II rate functionals and atoms (45c)
  std::vector<LinearExpr> mu1(cfg.K_U), chi1(cfg.K_U);
  std::vector<double> mu1_s(cfg.K_U), chi1_s(cfg.K_U);
  for (int k = 0; k < cfg.K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    LinearExpr mu;
    mu.constant = cfg.sigma2[k];
    LinearExpr chi = mu;
    for (int g = 0; g < G; ++g) {
      if (out.W[g] < 0) continue;
      const VecC hs = sub_channel(inst, k, act[g]);
      const int Mg = static_cast<int>(hs.size());
      const VecR coef = trace_coefficients(0.5 * realify(hs * hs.adjoint()), Mg);
      const int off = p.blocks[out.W[g]].offset;
      for (Eigen::Index j = 0; j < coef.size(); ++j) {
        if (coef[j] == 0.0) continue;
        mu.add(off + static_cast<int>(j), coef[j]);
        if (g != gk) chi.add(off + static_cast<int>(j), coef[j]);
      }
    }
    mu1[k] = std::move(mu);
    chi1[k] = std::move(chi);
    const auto [m1, c1] = mu_chi_lifted(inst, prev.W, prev.Omega, k, false);
    mu1_s[k] = m1;
    chi1_s[k] = c1;
    if (gk >= 0 && !out.swap_group[gk])
      add_rate_atom(p, "rate1_k" + std::to_string(k), out.r1[gk], chi1[k],
                    chi1_s[k], mu1[k]);
  }

  // (35d) phase-II power
  for (int i = 0; i < cfg.K_R; ++i) {
    ConstraintAtom power;
    power.name = "power2_" + std::to_string(i);
    power.expr.lin.constant = -cfg.P[i];
    bool any = false;
    for (int g = 0; g < G; ++g) {
      if (out.W[g] < 0) continue;
      const auto it = std::find(act[g].begin(), act[g].end(), i);
      if (it == act[g].end()) continue;
      const int pos = static_cast<int>(it - act[g].begin());
      const int off = p.blocks[out.W[g]].offset;
      for (int a = 0; a < N_t; ++a) power.expr.lin.add(off + pos * N_t + a, 1.0);
      any = true;
    }
    if (any) p.atoms.push_back(std::move(power));
  }

  // (30b) phase-III rates
  for (int k = 0; k < cfg.K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    add_rate_atom(p, "rate2_k" + std::to_string(k), out.r2[gk], core.chi2[k],
                  core.chi2_start[k], core.mu2[k]);
  }
  for (int g = 0; g < G; ++g) {
    double bound = std::numeric_limits<double>::infinity();
    for (int k : inst.cache.users_in_group(g))
      bound = std::min(bound,
                       std::log(core.mu2_start[k]) - std::log(core.chi2_start[k]));
    const double r_s = bound * (1.0 - kRel) - kAbs;
    if (!(r_s > cfg.rate_floor))
      throw InfeasibleExpansionPoint("pcpt: start phase-3 rate below floor");
    x[out.r2[g]] = r_s;
  }

  const double theta_s = exp.theta;
  x[out.theta] = theta_s;

  double eta_s = 0;
  for (int g = 0; g < G; ++g) {
    if (out.swap_group[g]) {
      // no cached copy anywhere: r_{g,1}=0 and (30f) replaces (45d)-(45g)
      add_log_latency_atom(p, S, out.eta, out.r2[g],
                           "latency_swap_g" + std::to_string(g));
      eta_s = std::max(eta_s, S / x[out.r2[g]]);
      continue;
    }

    // r1 start: phase-II achievable rate, capped by the (45e) tangent
    double r1t = exp.r1[g];
    if (!(r1t > 0)) r1t = 0.5 * bound1[g];
    const double bound_e =
        r1t * (1.0 + std::log(S) - std::log(cfg.tau0 + theta_s) - std::log(r1t));
    const double r1_cap = std::min(bound1[g], bound_e);
    double r1_s = r1_cap * (1.0 - kRel) - kAbs;
    if (!(r1_s > 0)) r1_s = 0.5 * r1_cap;
    if (!(r1_s > 0))
      throw InfeasibleExpansionPoint("pcpt: r1 start not positive");
    x[out.r1[g]] = r1_s;

    // (45e)
    {
      ConstraintAtom atom;
      atom.name = "phase2_budget_g" + std::to_string(g);
      atom.expr.lin.constant = std::log(cfg.tau0 + theta_s) - 1.0 +
                               cfg.tau0 / (cfg.tau0 + theta_s) +
                               std::log(r1t) - 1.0 - std::log(S);
      atom.expr.lin.add(out.theta, 1.0 / (cfg.tau0 + theta_s));
      atom.expr.lin.add(out.r1[g], 1.0 / r1t);
      p.atoms.push_back(std::move(atom));
    }

    if (out.dropped_group[g]) continue;  // phase II already covers the file

    // re-anchor the psi tangent when the provided expansion cannot support a
    // positive start (warm starts may over-estimate the phase-II rate)
    double psit = exp.psi[g];
    if (!(psit > 0) ||
        !(psit * (1.0 + std::log(theta_s * r1_s) - std::log(psit)) > 0))
      psit = theta_s * r1_s;
    const double kappat = exp.kappa[g];

    // psi start within the (45f) tangent bound
    const double bound_f =
        psit * (1.0 + std::log(theta_s) + std::log(r1_s) - std::log(psit));
    if (!(bound_f > 0))
      throw InfeasibleExpansionPoint("pcpt: psi tangent bound not positive");
    double psi_s = std::min(bound_f, theta_s * r1_s) * (1.0 - kRel) - kAbs;
    if (!(psi_s > 0)) psi_s = 0.5 * std::min(bound_f, theta_s * r1_s);
    if (!(psi_s > 0))
      throw InfeasibleExpansionPoint("pcpt: psi start not positive");
    if (psi_s <= 2e-12 && std::getenv("CMLL_DEBUG"))
      std::cerr << "psi debug g=" << g << " bound1=" << bound1[g]
                << " r1t=" << r1t << " bound_e=" << bound_e
                << " r1_s=" << r1_s << " theta_s=" << theta_s
                << " psit=" << psit << " bound_f=" << bound_f
                << " psi_s=" << psi_s << "\n";
    x[out.psi[g]] = psi_s;

    const double kappa_need = S - cfg.tau0 * r1_s - psi_s;
    const double kappa_s =
        std::max(kappa_need * (1.0 + kRel) + kAbs, 1e-9 * S);
    x[out.kappa[g]] = kappa_s;

    // (45d)
    {
      ConstraintAtom atom;
      atom.name = "remaining_g" + std::to_string(g);
      atom.expr.lin.constant = S;
      atom.expr.lin.add(out.r1[g], -cfg.tau0);
      atom.expr.lin.add(out.psi[g], -1.0);
      atom.expr.lin.add(out.kappa[g], -1.0);
      p.atoms.push_back(std::move(atom));
    }
    // (45f): phi(psi, psi_t) - ln(theta) - ln(r1) <= 0
    {
      ConstraintAtom atom;
      atom.name = "psi_g" + std::to_string(g);
      atom.expr.lin.constant = std::log(psit) - 1.0;
      atom.expr.lin.add(out.psi[g], 1.0 / psit);
      LogTerm lt;
      lt.arg.add(out.theta, 1.0);
      atom.expr.logs.push_back(lt);
      LogTerm lr;
      lr.arg.add(out.r1[g], 1.0);
      atom.expr.logs.push_back(lr);
      p.atoms.push_back(std::move(atom));
    }
    // (45g): phi(kappa, kappa_t) - ln(eta) - ln(r2) <= 0
    {
      ConstraintAtom atom;
      atom.name = "kappa_g" + std::to_string(g);
      atom.expr.lin.constant = std::log(kappat) - 1.0;
      atom.expr.lin.add(out.kappa[g], 1.0 / kappat);
      LogTerm lt;
      lt.arg.add(out.eta, 1.0);
      atom.expr.logs.push_back(lt);
      LogTerm lr;
      lr.arg.add(out.r2[g], 1.0);
      atom.expr.logs.push_back(lr);
      p.atoms.push_back(std::move(atom));
    }
    // eta large enough for the kappa tangent at the start
    const double eta_need =
        std::exp(std::log(kappat) - 1.0 + kappa_s / kappat - std::log(x[out.r2[g]]));
    eta_s = std::max(eta_s, eta_need);
  }
  x[out.eta] = eta_s * (1.0 + kRel) + kAbs;

  p.objective.lin.add(out.eta, 1.0);
  p.objective.lin.add(out.theta, 1.0);
  for (int i : core.fetch) {
    const int t_id = p.add_scalar("hinge_" + std::to_string(i), 0.0, 1.0);
    out.hinge[i] = p.blocks[t_id].offset;
    x.conservativeResize(p.dim());
    add_hinge(p, core, i, out.theta, out.hinge[i], lambda, rho, inst);
    x[out.hinge[i]] = hinge_start_value(core, i, theta_s, lambda, rho, S);
    QuadTerm qt;
    qt.offset = out.hinge[i];
    qt.Q = MatR::Constant(1, 1, 0.5 / rho);
    p.objective.quads.push_back(std::move(qt));

    const int s_id = p.add_scalar("hinge_neg_" + std::to_string(i), 0.0, 1.0);
    const int s_off = p.blocks[s_id].offset;
    x.conservativeResize(p.dim());
    add_negative_hinge(p, core, i, out.theta, theta_s, s_off, lambda, rho, inst);
    const double e_start = S / theta_s - core.g_start[i] + rho * lambda;
    x[s_off] = std::max(-e_start, 0.0) + std::max(1e-9, kRel * std::abs(e_start));
    QuadTerm qs;
    qs.offset = s_off;
    qs.Q = MatR::Constant(1, 1, 0.5 / rho);
    p.objective.quads.push_back(std::move(qs));
  }

  p.start = x;
  p.validate_start();
  return out;
}

// --------------------------------------------------------------------------
// JCEO baseline subproblem: maximize the common delivery rate
// --------------------------------------------------------------------------

JceoProblem build_jceo_subproblem(const model::Instance& inst,
                                  const PartialIterate& prev) {
  const auto& cfg = inst.config;

  JceoProblem out;
  auto& p = out.ir;
  const int r_id = p.add_scalar("r_min", 0.0, 1.0);
  out.rate = p.blocks[r_id].offset;

  SdrCore core = setup_sdr_core(p, inst, prev);
  out.W_bar = core.Wbar_blocks;
  out.Omega = core.Omega_blocks;

  VecR x = p.start;
  double bound = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.K_U; ++k) {
    add_rate_atom(p, "rate_k" + std::to_string(k), out.rate, core.chi2[k],
                  core.chi2_start[k], core.mu2[k]);
    bound = std::min(bound,
                     std::log(core.mu2_start[k]) - std::log(core.chi2_start[k]));
  }
  const double r_s = bound * (1.0 - kRel) - kAbs;
  if (!(r_s > cfg.rate_floor))
    throw InfeasibleExpansionPoint("jceo: start rate below floor");
  x[out.rate] = r_s;

  p.objective.lin.add(out.rate, -1.0);  // maximize the min rate
  p.start = x;
  p.validate_start();
  return out;
}

}  // namespace cmll::ir
