#include "cmll/schemes.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <cstdlib>
#include <iostream>

#include "cmll/rng.hpp"

namespace cmll::schemes {

using model::BeamformerSet;
using model::Instance;
using model::SchemeSolution;
using model::SchemeTag;
using model::SolveStatus;

namespace {

std::vector<int> active_errhs(const Instance& inst, int g) {
  std::vector<int> act;
  for (int i = 0; i < inst.config.K_R; ++i)
    if (!inst.cache.uncached_for_group(g, i)) act.push_back(i);
  return act;
}

Instance full_cache_copy(const Instance& inst) {
  Instance out = inst;
  for (auto& row : out.cache.c) std::fill(row.begin(), row.end(), 1);
  return out;
}

/// min over each group's users of ln(1 + SINR)
std::vector<double> group_rates(const Instance& inst, const BeamformerSet& beams,
                                bool partial) {
  const int G = inst.cache.groups();
  std::vector<double> r(G, std::numeric_limits<double>::infinity());
  for (int k = 0; k < inst.config.K_U; ++k) {
    const double gamma = partial
                             ? model::sinr_partial(k, beams, inst.channels,
                                                   inst.config.sigma2[k])
                             : model::sinr_full(k, beams, inst.channels,
                                                inst.config.sigma2[k]);
    const int g = inst.cache.group_of_user[k];
    r[g] = std::min(r[g], model::achievable_rate(gamma));
  }
  return r;
}

VecC compress_beam(const Instance& inst, const VecC& full,
                   const std::vector<int>& act) {
  const int N_t = inst.config.N_t;
  VecC out(static_cast<Eigen::Index>(act.size()) * N_t);
  for (std::size_t a = 0; a < act.size(); ++a)
    out.segment(static_cast<Eigen::Index>(a) * N_t, N_t) =
        full.segment(static_cast<Eigen::Index>(act[a]) * N_t, N_t);
  return out;
}

VecC expand_beam(const Instance& inst, const VecC& masked,
                 const std::vector<int>& act) {
  const int N_t = inst.config.N_t;
  VecC out = VecC::Zero(inst.config.stacked_dim());
  for (std::size_t a = 0; a < act.size(); ++a)
    out.segment(static_cast<Eigen::Index>(act[a]) * N_t, N_t) =
        masked.segment(static_cast<Eigen::Index>(a) * N_t, N_t);
  return out;
}

MatC expand_lifted(const Instance& inst, const MatC& masked,
                   const std::vector<int>& act) {
  const int N_t = inst.config.N_t;
  const int M = inst.config.stacked_dim();
  MatC out = MatC::Zero(M, M);
  for (std::size_t a = 0; a < act.size(); ++a)
    for (std::size_t b = 0; b < act.size(); ++b)
      out.block(act[a] * N_t, act[b] * N_t, N_t, N_t) =
          masked.block(static_cast<Eigen::Index>(a) * N_t,
                       static_cast<Eigen::Index>(b) * N_t, N_t, N_t);
  return out;
}

/// Algorithm 1 core; also serves the full-caching reductions of the other
/// schemes (text after (10) and (14)).
SchemeSolution run_fcbt_path(const Instance& inst,
                             const OuterLoopSettings& settings, SchemeTag tag) {
  const Instance full = full_cache_copy(inst);
  const auto& cfg = full.config;
  const int G = full.cache.groups();
  const int N_t = cfg.N_t;

  SchemeSolution sol;
  sol.scheme = tag;

  // channel-matched equal-power start beams
  std::vector<VecC> w(G);
  for (int g = 0; g < G; ++g) {
    const auto act = active_errhs(full, g);
    VecC beam(static_cast<Eigen::Index>(act.size()) * N_t);
    for (std::size_t a = 0; a < act.size(); ++a) {
      VecC dir = VecC::Zero(N_t);
      for (int k : full.cache.users_in_group(g))
        dir += full.channels.block(k, act[a]);
      if (dir.norm() < 1e-12) dir = VecC::Ones(N_t);
      dir /= dir.norm();
      const double budget = (1.0 - 1e-3) * cfg.P[act[a]] / G;
      beam.segment(static_cast<Eigen::Index>(a) * N_t, N_t) =
          std::sqrt(budget) * dir;
    }
    w[g] = beam;
  }

  double eta_prev = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  double eta = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<int>> act(G);
  for (int t = 0; t < settings.max_inner; ++t) {
    auto prob = ir::build_fcbt_subproblem(full, w);
    const auto rep = solver::solve(prob.ir, settings.solver);
    for (int g = 0; g < G; ++g) {
      const auto& blk = prob.ir.blocks[prob.w[g]];
      w[g] = derealify_vec(rep.x.segment(blk.offset, blk.size));
      act[g] = prob.active[g];
    }
    eta = rep.objective;
    model::TraceRow row;
    row.outer = 0;
    row.inner = t;
    row.objective = eta;
    sol.trace.push_back(row);
    if (std::isfinite(eta_prev) &&
        std::abs(eta - eta_prev) <= settings.epsilon * std::abs(eta_prev)) {
      converged = true;
      break;
    }
    eta_prev = eta;
  }

  BeamformerSet beams;
  beams.scheme = tag;
  beams.group_of_user = full.cache.group_of_user;
  beams.w.resize(G);
  for (int g = 0; g < G; ++g) beams.w[g] = expand_beam(full, w[g], act[g]);
  if (tag != SchemeTag::FCBT) beams.w_bar = beams.w;

  const auto rates = group_rates(full, beams, false);
  sol.beams = std::move(beams);
  sol.tau = 0.0;
  sol.relaxed_objective = eta;
  sol.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
  if (tag == SchemeTag::FCBT) {
    sol.r_phase1 = rates;
    sol.latency = model::latency(SchemeTag::FCBT, cfg.S, rates, {}, 0.0,
                                 cfg.rate_floor);
  } else {
    sol.r_phase1.assign(G, 0.0);
    sol.r_phase2 = rates;
    sol.latency = model::latency(SchemeTag::PCBT, cfg.S, {}, rates, 0.0,
                                 cfg.rate_floor);
  }
  return sol;
}

ir::PartialIterate lift_iterate(const Instance& inst, const BeamformerSet& init,
                                bool with_phase2) {
  const int G = inst.cache.groups();
  ir::PartialIterate it;
  it.W_bar.resize(G);
  for (int g = 0; g < G; ++g)
    it.W_bar[g] = init.w_bar[g] * init.w_bar[g].adjoint();
  it.Omega = init.Omega;
  if (with_phase2) {
    it.W.resize(G);
    for (int g = 0; g < G; ++g) {
      const auto act = active_errhs(inst, g);
      if (act.empty()) continue;
      const VecC wm = compress_beam(inst, init.w[g], act);
      it.W[g] = wm * wm.adjoint();
    }
  }
  return it;
}

MatC pull_hermitian(const ir::SubproblemIR& p, int block_id, const VecR& x) {
  const auto& b = p.blocks[block_id];
  return ir::hermitian_from_params(x, b.offset, b.cdim);
}

// ---------------------------------------------------------------------------
// Power boost problem (34): linear program in the per-group boost factors,
// fronthaul handled through a concave-tangent over-estimate.
// ---------------------------------------------------------------------------

struct BoostProblem {
  std::vector<int> groups;  // groups carrying a beam
  MatR s;                   // K_U x G own/cross powers |h^H b_g|^2
  VecR base;                // per user sigma^2 (+ h' Omega h)
  MatR block_power;         // K_R x G, ||b_{g,i}||^2 (masked already)
  VecR power_offset;        // per eRRH tr(Omega_i)
  std::vector<double> targets;
};

BoostProblem boost_data(const Instance& inst, const std::vector<VecC>& b,
                        const std::vector<MatC>& Omega,
                        const std::vector<double>& targets, bool with_omega) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const int N_t = cfg.N_t;
  BoostProblem out;
  out.targets = targets;
  for (int g = 0; g < G; ++g)
    if (b[g].size() != 0 && b[g].norm() > 1e-12) out.groups.push_back(g);
  out.s = MatR::Zero(cfg.K_U, G);
  out.base = VecR::Zero(cfg.K_U);
  for (int k = 0; k < cfg.K_U; ++k) {
    const VecC& hk = inst.channels.stacked(k);
    out.base[k] = cfg.sigma2[k];
    for (int g : out.groups) out.s(k, g) = std::norm(hk.dot(b[g]));
    if (with_omega) {
      for (int i = 0; i < static_cast<int>(Omega.size()); ++i) {
        if (Omega[i].size() == 0) continue;
        const VecC hki = hk.segment(static_cast<Eigen::Index>(i) * N_t, N_t);
        out.base[k] += std::real(hki.dot(Omega[i] * hki));
      }
    }
  }
  out.block_power = MatR::Zero(cfg.K_R, G);
  out.power_offset = VecR::Zero(cfg.K_R);
  for (int i = 0; i < cfg.K_R; ++i) {
    for (int g : out.groups)
      out.block_power(i, g) =
          b[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t).squaredNorm();
    if (with_omega && i < static_cast<int>(Omega.size()) && Omega[i].size() != 0)
      out.power_offset[i] = std::real(Omega[i].trace());
  }
  return out;
}

/// Affine constraints of (34) at the current fronthaul tangent point; returns
/// constraint list as (coeff-per-group, constant) with value <= 0 required.
struct AffineRow {
  std::map<int, double> coef;  // keyed by group
  double constant = 0;
};

std::vector<AffineRow> boost_constraints(const Instance& inst,
                                         const BoostProblem& bp,
                                         const std::vector<VecC>& b,
                                         const std::vector<MatC>& Omega,
                                         bool fronthaul, const VecR* tangent_p) {
  const auto& cfg = inst.config;
  const int N_t = cfg.N_t;
  std::vector<AffineRow> rows;
  // SINR: (e^r - 1)(base + sum_{g != gk} p_g s_kg) - p_gk s_kgk <= 0
  for (int k = 0; k < cfg.K_U; ++k) {
    const int gk = inst.cache.group_of_user[k];
    if (std::find(bp.groups.begin(), bp.groups.end(), gk) == bp.groups.end())
      continue;
    const double target = bp.targets[gk];
    if (target <= cfg.rate_floor) continue;
    const double snr = std::expm1(target);
    AffineRow row;
    row.constant = snr * bp.base[k];
    for (int g : bp.groups) {
      if (g == gk) continue;
      row.coef[g] += snr * bp.s(k, g);
    }
    row.coef[gk] -= bp.s(k, gk);
    rows.push_back(std::move(row));
  }
  // power per eRRH
  for (int i = 0; i < cfg.K_R; ++i) {
    AffineRow row;
    row.constant = bp.power_offset[i] - cfg.P[i];
    bool any = bp.power_offset[i] > 0;
    for (int g : bp.groups) {
      if (bp.block_power(i, g) == 0.0) continue;
      row.coef[g] += bp.block_power(i, g);
      any = true;
    }
    if (any) rows.push_back(std::move(row));
  }
  // fronthaul tangent at tangent_p (delivery mode only)
  if (fronthaul) {
    for (int i : inst.cache.fetch_set()) {
      MatC A = Omega[i];
      for (int g : bp.groups) {
        if (!inst.cache.uncached_for_group(g, i)) continue;
        const VecC bi = b[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t);
        A += (*tangent_p)[g] * (bi * bi.adjoint());
      }
      Eigen::SelfAdjointEigenSolver<MatC> ea(A);
      Eigen::SelfAdjointEigenSolver<MatC> eo(Omega[i], Eigen::EigenvaluesOnly);
      double ld_a = 0, ld_o = 0;
      for (Eigen::Index j = 0; j < N_t; ++j) {
        ld_a += std::log(std::max(ea.eigenvalues()(j), cfg.psd_floor));
        ld_o += std::log(std::max(eo.eigenvalues()(j), cfg.psd_floor));
      }
      const MatC Ainv = ea.operatorInverseSqrt() * ea.operatorInverseSqrt();
      AffineRow row;
      row.constant = ld_a - ld_o - cfg.C[i];
      for (int g : bp.groups) {
        if (!inst.cache.uncached_for_group(g, i)) continue;
        const VecC bi = b[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t);
        const double grad = std::real(bi.dot(Ainv * bi));
        row.coef[g] += grad;
        row.constant -= grad * (*tangent_p)[g];
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Solve min sum p over the affine rows; returns true with p on success.
bool solve_boost_lp(const Instance& inst, const BoostProblem& bp,
                    const std::vector<VecC>& b, const std::vector<MatC>& Omega,
                    bool fronthaul, VecR& p_out) {
  const int G = inst.cache.groups();
  solver::SolverSettings ls;  // library defaults are plenty for these LPs
  VecR p_cur = VecR::Ones(G);

  const int tangent_passes = fronthaul ? 3 : 1;
  for (int pass = 0; pass < tangent_passes; ++pass) {
    const auto rows = boost_constraints(inst, bp, b, Omega, fronthaul, &p_cur);

    // phase 1: min slack s with every row <= s
    {
      ir::SubproblemIR p1;
      std::vector<int> pid(G, -1);
      for (int g : bp.groups)
        pid[g] = p1.add_scalar("p_" + std::to_string(g), 0.0, p_cur[g]);
      double maxviol = 0;
      for (const auto& row : rows) {
        double v = row.constant;
        for (const auto& [g, c] : row.coef) v += c * p_cur[g];
        maxviol = std::max(maxviol, v);
      }
      const int sid = p1.add_scalar(
          "slack", -std::numeric_limits<double>::infinity(),
          maxviol + std::max(1.0, 0.1 * std::abs(maxviol)));
      const int s_off = p1.blocks[sid].offset;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        ir::ConstraintAtom atom;
        atom.name = "row_" + std::to_string(r);
        atom.expr.lin.constant = rows[r].constant;
        for (const auto& [g, c] : rows[r].coef)
          atom.expr.lin.add(p1.blocks[pid[g]].offset, c);
        atom.expr.lin.add(s_off, -1.0);
        p1.atoms.push_back(std::move(atom));
      }
      p1.objective.lin.add(s_off, 1.0);
      const auto rep = solver::solve(p1, ls);
      if (!rep.converged() || rep.objective > -1e-7) return false;
      for (int g : bp.groups) p_cur[g] = rep.x[p1.blocks[pid[g]].offset];
    }

    // phase 2: min sum p from the interior point found above
    {
      ir::SubproblemIR p2;
      std::vector<int> pid(G, -1);
      for (int g : bp.groups)
        pid[g] = p2.add_scalar("p_" + std::to_string(g), 0.0, p_cur[g]);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        ir::ConstraintAtom atom;
        atom.name = "row_" + std::to_string(r);
        atom.expr.lin.constant = rows[r].constant;
        for (const auto& [g, c] : rows[r].coef)
          atom.expr.lin.add(p2.blocks[pid[g]].offset, c);
        p2.atoms.push_back(std::move(atom));
      }
      for (int g : bp.groups) p2.objective.lin.add(p2.blocks[pid[g]].offset, 1.0);
      const auto rep = solver::solve(p2, ls);
      if (!rep.converged()) return false;
      for (int g : bp.groups) p_cur[g] = rep.x[p2.blocks[pid[g]].offset];
    }
  }
  p_out = p_cur;
  return true;
}

struct EigDecomp {
  MatC U;
  VecR lam;  // ascending
  bool rank_one = false;
  bool zero = false;
};

EigDecomp decompose(const MatC& W, double rank_tol) {
  EigDecomp d;
  if (W.size() == 0 || std::real(W.trace()) < 1e-14) {
    d.zero = true;
    return d;
  }
  Eigen::SelfAdjointEigenSolver<MatC> es(W);
  d.U = es.eigenvectors();
  d.lam = es.eigenvalues().cwiseMax(0.0);
  const Eigen::Index n = d.lam.size();
  d.rank_one = n < 2 || d.lam(n - 2) <= rank_tol * d.lam(n - 1);
  return d;
}

VecC dominant_beam(const EigDecomp& d) {
  const Eigen::Index n = d.lam.size();
  return std::sqrt(d.lam(n - 1)) * d.U.col(n - 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

model::SchemeSolution solve_fcbt(const Instance& inst,
                                 const OuterLoopSettings& settings) {
  inst.config.validate();
  return run_fcbt_path(inst, settings, SchemeTag::FCBT);
}

model::BeamformerSet initialize_partial(const Instance& inst,
                                        const OuterLoopSettings& settings) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const int N_t = cfg.N_t;
  const int M = cfg.stacked_dim();
  Rng rng(mix_seed(settings.seed, 7));

  auto unit_vec = [&](int n) {
    VecC v(n);
    for (int a = 0; a < n; ++a) v(a) = rng.cnormal();
    const double nv = v.norm();
    return nv > 0 ? VecC(v / nv) : VecC::Ones(n).eval();
  };

  BeamformerSet out;
  out.scheme = SchemeTag::PCBT;
  out.group_of_user = inst.cache.group_of_user;
  out.w_bar.assign(G, VecC::Zero(M));
  out.w.assign(G, VecC::Zero(M));
  out.Omega.assign(cfg.K_R, MatC());

  // Eq. (47a): shared normalized vector per eRRH for the uncached parts,
  // scaled to sit inside the fronthaul capacity; cached parts random
  std::vector<VecC> vhat(cfg.K_R);
  for (int i = 0; i < cfg.K_R; ++i) vhat[i] = unit_vec(N_t);
  for (int g = 0; g < G; ++g) {
    for (int i = 0; i < cfg.K_R; ++i) {
      if (inst.cache.uncached_for_group(g, i)) {
        const int n_unc = inst.cache.uncached_count(i);
        const double scale =
            std::sqrt(settings.delta * std::expm1(cfg.C[i]) / n_unc);
        out.w_bar[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t) =
            scale * vhat[i];
      } else {
        const double scale = std::sqrt(settings.delta * cfg.P[i] / (2.0 * G));
        out.w_bar[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t) =
            scale * unit_vec(N_t);
      }
    }
  }
  for (int i : inst.cache.fetch_set()) out.Omega[i] = MatC::Identity(N_t, N_t);

  // phase-II beams over the cached blocks only
  for (int g = 0; g < G; ++g)
    for (int i = 0; i < cfg.K_R; ++i)
      if (!inst.cache.uncached_for_group(g, i))
        out.w[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t) =
            std::sqrt(settings.delta * cfg.P[i] / (2.0 * G)) * unit_vec(N_t);

  // per-eRRH power normalization, Omega fixed at identity
  for (int i = 0; i < cfg.K_R; ++i) {
    const double tr_om = out.Omega[i].size() ? N_t : 0.0;
    double pw = tr_om;
    for (int g = 0; g < G; ++g)
      pw += out.w_bar[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t)
                .squaredNorm();
    const double cap = (1.0 - 1e-3) * cfg.P[i];
    if (pw > cap) {
      if (cap <= tr_om)
        throw model::ConfigError("initialize_partial: P_i too small for Omega=I");
      const double s = std::sqrt((cap - tr_om) / (pw - tr_om));
      for (int g = 0; g < G; ++g)
        out.w_bar[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t) *= s;
    }
    double pw2 = 0;
    for (int g = 0; g < G; ++g)
      pw2 += out.w[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t)
                 .squaredNorm();
    if (pw2 > cap) {
      const double s = std::sqrt(cap / pw2);
      for (int g = 0; g < G; ++g)
        out.w[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t) *= s;
    }
  }
  return out;
}

RankOneResult randomize_rank_one(const std::vector<MatC>& W_set,
                                 const std::vector<MatC>& Omega,
                                 const Instance& inst,
                                 const std::vector<double>& r_targets,
                                 const OuterLoopSettings& settings,
                                 std::uint64_t seed) {
  const int G = inst.cache.groups();
  if (static_cast<int>(W_set.size()) != G ||
      static_cast<int>(r_targets.size()) != G)
    throw RandomizationInfeasible("randomize_rank_one: size mismatch");

  std::vector<EigDecomp> eig(G);
  bool all_rank_one = true;
  for (int g = 0; g < G; ++g) {
    eig[g] = decompose(W_set[g], settings.rank_one_tol);
    if (!eig[g].rank_one && !eig[g].zero) all_rank_one = false;
  }

  auto make_beams = [&](const std::vector<VecC>& b) {
    BeamformerSet beams;
    beams.scheme = SchemeTag::PCBT;
    beams.group_of_user = inst.cache.group_of_user;
    beams.w_bar = b;
    beams.Omega = Omega;
    beams.Omega.resize(inst.config.K_R);
    return beams;
  };

  if (all_rank_one) {
    std::vector<VecC> b(G);
    for (int g = 0; g < G; ++g)
      b[g] = eig[g].zero ? VecC::Zero(inst.config.stacked_dim()).eval()
                         : dominant_beam(eig[g]);
    return {make_beams(b), false};
  }

  Rng rng(mix_seed(seed, 11));
  double best_latency = std::numeric_limits<double>::infinity();
  std::vector<VecC> best;
  for (int cand = 0; cand < settings.randomization_candidates; ++cand) {
    std::vector<VecC> b(G);
    for (int g = 0; g < G; ++g) {
      if (eig[g].zero) {
        b[g] = VecC::Zero(inst.config.stacked_dim());
      } else if (eig[g].rank_one) {
        b[g] = dominant_beam(eig[g]);
      } else {
        VecC e(eig[g].lam.size());
        for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = rng.cnormal();
        b[g] = eig[g].U * eig[g].lam.cwiseSqrt().asDiagonal() * e;
      }
    }
    const auto bp = boost_data(inst, b, Omega, r_targets, true);
    VecR p;
    if (!solve_boost_lp(inst, bp, b, Omega, true, p)) continue;
    for (int g = 0; g < G; ++g)
      if (b[g].size() != 0) b[g] *= std::sqrt(std::max(p[g], 0.0));
    const auto beams = make_beams(b);
    double lat;
    try {
      const auto rates = group_rates(inst, beams, true);
      const double tau = model::delay_tau(inst.config.S, beams, inst.cache,
                                          inst.config);
      lat = model::latency(SchemeTag::PCBT, inst.config.S, {}, rates, tau,
                           inst.config.rate_floor);
    } catch (const std::exception&) {
      continue;
    }
    if (lat < best_latency) {
      best_latency = lat;
      best = b;
    }
  }

  if (best.empty()) {
    // all candidates violated constraints: scaled dominant eigenvector
    std::vector<VecC> b(G);
    for (int g = 0; g < G; ++g)
      b[g] = eig[g].zero ? VecC::Zero(inst.config.stacked_dim()).eval()
                         : dominant_beam(eig[g]);
    return {make_beams(b), true};
  }
  return {make_beams(best), false};
}

RankOneResult extract_phase2(const std::vector<MatC>& W_full,
                             const Instance& inst,
                             const std::vector<double>& r1_targets,
                             const OuterLoopSettings& settings,
                             std::uint64_t seed, double tau,
                             const std::vector<double>& r2_final) {
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const std::vector<MatC> no_omega;

  std::vector<EigDecomp> eig(G);
  bool all_rank_one = true;
  for (int g = 0; g < G; ++g) {
    eig[g] = decompose(W_full[g], settings.rank_one_tol);
    if (!eig[g].rank_one && !eig[g].zero) all_rank_one = false;
  }

  auto evaluate = [&](const std::vector<VecC>& b, double& lat) {
    BeamformerSet beams;
    beams.scheme = SchemeTag::PCPT;
    beams.group_of_user = inst.cache.group_of_user;
    beams.w = b;
    auto r1 = group_rates(inst, beams, false);
    for (int g = 0; g < G; ++g) {
      if (b[g].size() == 0 || b[g].norm() == 0) r1[g] = 0.0;
      if (tau > 0) r1[g] = std::min(r1[g], cfg.S / tau);
    }
    try {
      lat = model::latency(SchemeTag::PCPT, cfg.S, r1, r2_final, tau,
                           cfg.rate_floor);
    } catch (const std::exception&) {
      return false;
    }
    return true;
  };

  auto dominant_set = [&]() {
    std::vector<VecC> b(G);
    for (int g = 0; g < G; ++g)
      b[g] = eig[g].zero ? VecC::Zero(cfg.stacked_dim()).eval()
                         : dominant_beam(eig[g]);
    return b;
  };

  auto make = [&](std::vector<VecC> b, bool fb) {
    BeamformerSet beams;
    beams.scheme = SchemeTag::PCPT;
    beams.group_of_user = inst.cache.group_of_user;
    beams.w = std::move(b);
    return RankOneResult{std::move(beams), fb};
  };

  if (all_rank_one) return make(dominant_set(), false);

  Rng rng(mix_seed(seed, 13));
  double best_latency = std::numeric_limits<double>::infinity();
  std::vector<VecC> best;
  for (int cand = 0; cand < settings.randomization_candidates; ++cand) {
    std::vector<VecC> b(G);
    for (int g = 0; g < G; ++g) {
      if (eig[g].zero) {
        b[g] = VecC::Zero(cfg.stacked_dim());
      } else if (eig[g].rank_one) {
        b[g] = dominant_beam(eig[g]);
      } else {
        VecC e(eig[g].lam.size());
        for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = rng.cnormal();
        b[g] = eig[g].U * eig[g].lam.cwiseSqrt().asDiagonal() * e;
      }
    }
    const auto bp = boost_data(inst, b, no_omega, r1_targets, false);
    VecR p;
    if (!solve_boost_lp(inst, bp, b, no_omega, false, p)) continue;
    for (int g = 0; g < G; ++g)
      if (b[g].size() != 0) b[g] *= std::sqrt(std::max(p[g], 0.0));
    double lat;
    if (!evaluate(b, lat)) continue;
    if (lat < best_latency) {
      best_latency = lat;
      best = b;
    }
  }
  if (best.empty()) return make(dominant_set(), true);
  return make(std::move(best), false);
}

model::SchemeSolution solve_pcbt(const Instance& inst,
                                 const OuterLoopSettings& settings) {
  inst.config.validate();
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const auto fetch = inst.cache.fetch_set();
  if (fetch.empty()) return run_fcbt_path(inst, settings, SchemeTag::PCBT);

  ir::PartialIterate it = lift_iterate(inst, initialize_partial(inst, settings),
                                       false);
  double lambda = settings.lambda0, rho = settings.rho0;
  double varsigma = settings.varsigma0, eps_inner = settings.epsilon0;
  double zeta_prev = std::numeric_limits<double>::quiet_NaN();

  SchemeSolution sol;
  sol.scheme = SchemeTag::PCBT;
  bool converged = false, aborted = false;
  double eta = 0, theta = 0;
  std::vector<double> r_relaxed(G, 0.0);

  for (int l = 0; l < settings.max_outer && !converged && !aborted; ++l) {
    double resid_signed = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < settings.max_inner; ++t) {
      try {
        it = ir::interiorize(inst, it);
        auto prob = ir::build_pcbt_subproblem(inst, it, lambda, rho);
        const auto rep = solver::solve(prob.ir, settings.solver);
        for (int g = 0; g < G; ++g) {
          it.W_bar[g] = pull_hermitian(prob.ir, prob.W_bar[g], rep.x);
          r_relaxed[g] = rep.x[prob.r[g]];
        }
        for (int i : fetch)
          it.Omega[i] = pull_hermitian(prob.ir, prob.Omega[i], rep.x);
        eta = rep.x[prob.eta];
        theta = rep.x[prob.theta];

        const double min_g = ir::min_fronthaul_lifted(inst, it.W_bar, it.Omega);
        resid_signed = cfg.S / theta - min_g;
        model::TraceRow row;
        row.outer = l;
        row.inner = t;
        row.objective = rep.objective;
        row.approx_error = std::abs(resid_signed);
        row.approx_error_time = std::abs(theta - cfg.S / min_g);
        row.lambda = lambda;
        row.rho = rho;
        sol.trace.push_back(row);

        const double zeta = rep.objective;
        if (std::isfinite(zeta_prev) &&
            std::abs(zeta - zeta_prev) <= eps_inner * std::abs(zeta_prev)) {
          zeta_prev = zeta;
          break;
        }
        zeta_prev = zeta;
      } catch (const std::exception&) {
        aborted = true;  // numerical corner: keep the best iterate so far
        break;
      }
    }
    if (aborted || !std::isfinite(resid_signed)) break;
    if (std::abs(resid_signed) <= settings.epsilon) {
      converged = true;
      break;
    }
    if (std::abs(resid_signed) <= varsigma)
      lambda += resid_signed / rho;  // Eq. (32)
    else
      rho *= settings.omega;  // Eq. (33)
    varsigma = settings.omega * std::abs(resid_signed);
    eps_inner = std::max(settings.omega * eps_inner, settings.epsilon);
  }

  auto ext = randomize_rank_one(it.W_bar, it.Omega, inst, r_relaxed, settings,
                                mix_seed(settings.seed, 101));
  ext.beams.scheme = SchemeTag::PCBT;
  sol.beams = ext.beams;
  sol.randomization_fallback = ext.fallback;
  sol.relaxed_objective = eta + theta + cfg.tau0;
  sol.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
  try {
    sol.r_phase2 = group_rates(inst, sol.beams, true);
    sol.tau = model::delay_tau(cfg.S, sol.beams, inst.cache, cfg);
    sol.latency = model::latency(SchemeTag::PCBT, cfg.S, {}, sol.r_phase2,
                                 sol.tau, cfg.rate_floor);
  } catch (const std::exception&) {
    sol.latency = std::numeric_limits<double>::infinity();
    sol.status = SolveStatus::MaxIterations;
  }
  return sol;
}

model::SchemeSolution solve_tswc(const Instance& inst,
                                 const OuterLoopSettings& settings) {
  Instance zero = inst;
  zero.cache = inst.cache.zeroed();
  auto sol = solve_pcbt(zero, settings);
  sol.scheme = SchemeTag::TSWC;
  sol.beams.scheme = SchemeTag::TSWC;
  return sol;
}

model::SchemeSolution solve_pcpt(const Instance& inst,
                                 const OuterLoopSettings& settings) {
  inst.config.validate();
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const auto fetch = inst.cache.fetch_set();
  if (fetch.empty()) return run_fcbt_path(inst, settings, SchemeTag::PCPT);

  bool any_cached = false;
  for (int g = 0; g < G && !any_cached; ++g)
    any_cached = !active_errhs(inst, g).empty();
  if (!any_cached) {
    // no cached copy of any requested file: problem (14) reduces to (10)
    auto sol = solve_pcbt(inst, settings);
    sol.scheme = SchemeTag::PCPT;
    sol.beams.scheme = SchemeTag::PCPT;
    sol.r_phase1.assign(G, 0.0);
    return sol;
  }

  ir::PartialIterate it = lift_iterate(inst, initialize_partial(inst, settings),
                                       true);
  double lambda = settings.lambda0, rho = settings.rho0;
  double varsigma = settings.varsigma0, eps_inner = settings.epsilon0;
  double zeta_prev = std::numeric_limits<double>::quiet_NaN();

  SchemeSolution sol;
  sol.scheme = SchemeTag::PCPT;
  bool converged = false, aborted = false;
  double eta = 0, theta = 0;
  std::vector<double> r1_relaxed(G, 0.0), r2_relaxed(G, 0.0);

  for (int l = 0; l < settings.max_outer && !converged && !aborted; ++l) {
    double resid_signed = std::numeric_limits<double>::quiet_NaN();
    ir::PcptExpansion exp;
    try {
      it = ir::interiorize(inst, it);

      // warm start (46) from the current matrices
      exp.r1.assign(G, 0.0);
      exp.psi.assign(G, 0.0);
      exp.kappa.assign(G, 0.0);
      const double min_g = ir::min_fronthaul_lifted(inst, it.W_bar, it.Omega);
      exp.theta = std::min(cfg.S / std::max(min_g, 1e-12), 1e9);
      for (int g = 0; g < G; ++g) {
        if (active_errhs(inst, g).empty()) continue;
        double ratio = std::numeric_limits<double>::infinity();
        double achievable = std::numeric_limits<double>::infinity();
        for (int k : inst.cache.users_in_group(g)) {
          const auto [mu, chi] =
              ir::mu_chi_lifted(inst, it.W, it.Omega, k, false);
          achievable = std::min(achievable, std::log(mu) - std::log(chi));
          double rk;
          if (settings.warm_start_log_ratio) {
            const double lc = std::log(chi);
            rk = lc > 1e-12 ? std::log(mu) / lc
                            : std::numeric_limits<double>::infinity();
          } else {
            rk = std::log(mu) - std::log(chi);
          }
          ratio = std::min(ratio, rk);
        }
        double r1t =
            settings.nu * std::min(ratio, cfg.S / (cfg.tau0 + exp.theta));
        // keep the expansion within the truly achievable phase-II rate
        r1t = std::min(r1t, 0.9 * achievable);
        if (!(r1t > 0)) r1t = 0.5 * achievable;
        exp.r1[g] = r1t;
        exp.psi[g] = exp.theta * r1t;
        exp.kappa[g] = cfg.S - (cfg.tau0 + exp.theta) * r1t;
      }
    } catch (const std::exception&) {
      break;
    }

    for (int t = 0; t < settings.max_inner; ++t) {
      try {
        if (t > 0) it = ir::interiorize(inst, it);
        auto prob = ir::build_pcpt_subproblem(inst, it, exp, lambda, rho);
        const auto rep = solver::solve(prob.ir, settings.solver);
        for (int g = 0; g < G; ++g) {
          it.W_bar[g] = pull_hermitian(prob.ir, prob.W_bar[g], rep.x);
          if (prob.W[g] >= 0) it.W[g] = pull_hermitian(prob.ir, prob.W[g], rep.x);
          r2_relaxed[g] = rep.x[prob.r2[g]];
          r1_relaxed[g] = prob.r1[g] >= 0 ? rep.x[prob.r1[g]] : 0.0;
          if (prob.r1[g] >= 0) {
            exp.r1[g] = rep.x[prob.r1[g]];
            if (prob.psi[g] >= 0) exp.psi[g] = rep.x[prob.psi[g]];
            if (prob.kappa[g] >= 0) exp.kappa[g] = rep.x[prob.kappa[g]];
          }
        }
        for (int i : fetch)
          it.Omega[i] = pull_hermitian(prob.ir, prob.Omega[i], rep.x);
        eta = rep.x[prob.eta];
        theta = rep.x[prob.theta];
        exp.theta = theta;

        const double mg = ir::min_fronthaul_lifted(inst, it.W_bar, it.Omega);
        resid_signed = cfg.S / theta - mg;
        model::TraceRow row;
        row.outer = l;
        row.inner = t;
        row.objective = rep.objective;
        row.approx_error = std::abs(resid_signed);
        row.approx_error_time = std::abs(theta - cfg.S / mg);
        row.lambda = lambda;
        row.rho = rho;
        sol.trace.push_back(row);

        const double zeta = rep.objective;
        if (std::isfinite(zeta_prev) &&
            std::abs(zeta - zeta_prev) <= eps_inner * std::abs(zeta_prev)) {
          zeta_prev = zeta;
          break;
        }
        zeta_prev = zeta;
      } catch (const std::exception& e) {
        if (std::getenv("CMLL_DEBUG")) std::cerr << "pcpt abort: " << e.what() << "\n";
        aborted = true;
        break;
      }
    }
    if (aborted || !std::isfinite(resid_signed)) break;
    if (std::abs(resid_signed) <= settings.epsilon) {
      converged = true;
      break;
    }
    if (std::abs(resid_signed) <= varsigma)
      lambda += resid_signed / rho;
    else
      rho *= settings.omega;
    varsigma = settings.omega * std::abs(resid_signed);
    eps_inner = std::max(settings.omega * eps_inner, settings.epsilon);
  }

  // phase-III extraction, then phase-II against the extracted delivery state
  auto ext3 = randomize_rank_one(it.W_bar, it.Omega, inst, r2_relaxed, settings,
                                 mix_seed(settings.seed, 103));
  sol.randomization_fallback = ext3.fallback;
  sol.relaxed_objective = eta + theta + cfg.tau0;
  sol.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;

  BeamformerSet beams = ext3.beams;
  beams.scheme = SchemeTag::PCPT;
  try {
    sol.r_phase2 = group_rates(inst, beams, true);
    sol.tau = model::delay_tau(cfg.S, beams, inst.cache, cfg);
  } catch (const std::exception&) {
    sol.beams = beams;
    sol.latency = std::numeric_limits<double>::infinity();
    sol.status = SolveStatus::MaxIterations;
    return sol;
  }

  std::vector<MatC> W_full(G);
  for (int g = 0; g < G; ++g) {
    const auto act = active_errhs(inst, g);
    if (!act.empty() && it.W[g].size() != 0)
      W_full[g] = expand_lifted(inst, it.W[g], act);
    else
      W_full[g] = MatC::Zero(cfg.stacked_dim(), cfg.stacked_dim());
  }
  auto ext2 = extract_phase2(W_full, inst, r1_relaxed, settings,
                             mix_seed(settings.seed, 104), sol.tau, sol.r_phase2);
  sol.randomization_fallback = sol.randomization_fallback || ext2.fallback;
  beams.w = ext2.beams.w;

  sol.beams = beams;
  sol.r_phase1 = group_rates(inst, beams, false);
  for (int g = 0; g < G; ++g) {
    if (beams.w[g].size() == 0 || beams.w[g].norm() == 0) sol.r_phase1[g] = 0.0;
    if (sol.tau > 0) sol.r_phase1[g] = std::min(sol.r_phase1[g], cfg.S / sol.tau);
  }
  try {
    sol.latency = model::latency(SchemeTag::PCPT, cfg.S, sol.r_phase1,
                                 sol.r_phase2, sol.tau, cfg.rate_floor);
  } catch (const std::exception&) {
    sol.latency = std::numeric_limits<double>::infinity();
    sol.status = SolveStatus::MaxIterations;
  }
  return sol;
}

model::SchemeSolution solve_jceo_baseline(const Instance& inst,
                                          const OuterLoopSettings& settings) {
  inst.config.validate();
  const auto& cfg = inst.config;
  const int G = inst.cache.groups();
  const auto fetch = inst.cache.fetch_set();

  ir::PartialIterate it = lift_iterate(inst, initialize_partial(inst, settings),
                                       false);
  SchemeSolution sol;
  sol.scheme = SchemeTag::JCEO;
  double zeta_prev = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  double r_star = 0;

  for (int t = 0; t < settings.max_inner; ++t) {
    try {
      it = ir::interiorize(inst, it);
      auto prob = ir::build_jceo_subproblem(inst, it);
      const auto rep = solver::solve(prob.ir, settings.solver);
      for (int g = 0; g < G; ++g)
        it.W_bar[g] = pull_hermitian(prob.ir, prob.W_bar[g], rep.x);
      for (int i : fetch)
        it.Omega[i] = pull_hermitian(prob.ir, prob.Omega[i], rep.x);
      r_star = rep.x[prob.rate];

      model::TraceRow row;
      row.outer = 0;
      row.inner = t;
      row.objective = rep.objective;  // -r_min, non-increasing under SCA
      sol.trace.push_back(row);

      const double zeta = rep.objective;
      if (std::isfinite(zeta_prev) &&
          std::abs(zeta - zeta_prev) <= settings.epsilon * std::abs(zeta_prev)) {
        converged = true;
        break;
      }
      zeta_prev = zeta;
    } catch (const std::exception&) {
      break;
    }
  }

  const double min_g = ir::min_fronthaul_lifted(inst, it.W_bar, it.Omega);
  const double tau_relaxed =
      std::isinf(min_g) ? 0.0 : cfg.tau0 + cfg.S / min_g;
  sol.relaxed_objective = cfg.S / r_star + tau_relaxed;

  std::vector<double> targets(G, r_star);
  auto ext = randomize_rank_one(it.W_bar, it.Omega, inst, targets, settings,
                                mix_seed(settings.seed, 105));
  ext.beams.scheme = SchemeTag::JCEO;
  sol.beams = ext.beams;
  sol.randomization_fallback = ext.fallback;
  sol.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
  try {
    sol.r_phase2 = group_rates(inst, sol.beams, true);
    sol.tau = model::delay_tau(cfg.S, sol.beams, inst.cache, cfg);
    sol.latency = model::latency(SchemeTag::JCEO, cfg.S, {}, sol.r_phase2,
                                 sol.tau, cfg.rate_floor);
  } catch (const std::exception&) {
    sol.latency = std::numeric_limits<double>::infinity();
    sol.status = SolveStatus::MaxIterations;
  }
  return sol;
}

}  // namespace cmll::schemes
