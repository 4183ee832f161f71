#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "cmll/builders.hpp"
#include "cmll/surrogates.hpp"
#include "cmll/rng.hpp"

using namespace cmll;

namespace {

MatC random_hermitian_pd(Rng& rng, int n, double ridge = 0.3) {
  MatC root(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) root(r, c) = rng.cnormal();
  return root * root.adjoint() + ridge * MatC::Identity(n, n);
}

double logdet(const MatC& m) {
  Eigen::SelfAdjointEigenSolver<MatC> es(m, Eigen::EigenvaluesOnly);
  double s = 0;
  for (Eigen::Index j = 0; j < m.rows(); ++j) s += std::log(es.eigenvalues()(j));
  return s;
}

model::Instance table2_instance(std::uint64_t seed, double xi = 0.5) {
  model::NetworkConfig cfg;
  cfg.K_R = 3;
  cfg.K_U = 6;
  cfg.N_t = 1;
  cfg.G = 3;
  cfg.F = 10;
  cfg.S = 1.5;
  cfg.xi = xi;
  cfg.P.assign(3, 100.0);
  cfg.C.assign(3, 2.0);
  cfg.sigma2.assign(6, 1.0);
  return model::generate_instance(cfg, seed);
}

ir::PartialIterate plain_iterate(const model::Instance& inst, Rng& rng,
                                 bool with_phase2) {
  const int M = inst.config.stacked_dim();
  const int G = inst.cache.groups();
  ir::PartialIterate it;
  for (int g = 0; g < G; ++g)
    it.W_bar.push_back(0.05 * random_hermitian_pd(rng, M, 0.5));
  it.Omega.resize(inst.config.K_R);
  for (int i : inst.cache.fetch_set())
    it.Omega[i] = MatC::Identity(inst.config.N_t, inst.config.N_t);
  if (with_phase2) {
    it.W.resize(G);
    for (int g = 0; g < G; ++g) {
      int active = 0;
      for (int i = 0; i < inst.config.K_R; ++i)
        if (!inst.cache.uncached_for_group(g, i)) ++active;
      if (active > 0)
        it.W[g] = 0.02 *
                  random_hermitian_pd(rng, active * inst.config.N_t, 0.5);
    }
  }
  return it;
}

}  // namespace

TEST_CASE("phi scalar tangent") {
  CHECK(ir::phi(3.0, 3.0) == doctest::Approx(std::log(3.0)));
  CHECK(ir::phi(2.0, 1.0) == doctest::Approx(1.0));
  CHECK(ir::phi(2.0, 1.0) >= std::log(2.0));
  CHECK_THROWS_AS(ir::phi(1.0, 0.0), ir::SingularExpansionPoint);

  Rng rng(1);
  for (int it = 0; it < 1000; ++it) {
    const double a = rng.uniform(0.05, 5.0);
    const double b = rng.uniform(0.05, 5.0);
    CHECK(ir::phi(a, b) >= std::log(a) - 1e-12);
  }
}

TEST_CASE("phi matrix tangent dominates ln det") {
  Rng rng(2);
  for (int it = 0; it < 1000; ++it) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const MatC a = random_hermitian_pd(rng, n);
    const MatC b = random_hermitian_pd(rng, n);
    CHECK(ir::phi(a, b) >= logdet(a) - 1e-9);
    CHECK(ir::phi(a, a) == doctest::Approx(logdet(a)).epsilon(1e-9));
  }
}

TEST_CASE("phi_bar tangent under-estimates the quadratic-over-linear") {
  Rng rng(3);
  const int n = 3;
  VecC h(n);
  for (int j = 0; j < n; ++j) h(j) = rng.cnormal();

  VecC w_t(n);
  for (int j = 0; j < n; ++j) w_t(j) = rng.cnormal();
  const double chi_t = 1.7;
  // tight at the expansion point
  CHECK(ir::phi_bar(w_t, chi_t, w_t, chi_t, h) ==
        doctest::Approx(std::norm(h.dot(w_t)) / chi_t).epsilon(1e-12));

  // orthogonal channel gives zero
  VecC h2 = VecC::Zero(n);
  h2(0) = 1.0;
  VecC wo = VecC::Zero(n);
  wo(1) = 2.0;
  CHECK(ir::phi_bar(wo, 1.0, wo, 1.0, h2) == doctest::Approx(0.0));

  for (int it = 0; it < 1000; ++it) {
    VecC w(n), wt(n);
    for (int j = 0; j < n; ++j) {
      w(j) = rng.cnormal();
      wt(j) = rng.cnormal();
    }
    const double chi = rng.uniform(0.2, 3.0);
    const double chit = rng.uniform(0.2, 3.0);
    CHECK(ir::phi_bar(w, chi, wt, chit, h) <=
          std::norm(h.dot(w)) / chi + 1e-10);
  }
}

TEST_CASE("realify embedding") {
  CHECK(realify(MatC::Identity(1, 1)).isApprox(MatR::Identity(2, 2)));

  MatC m(2, 2);
  m << std::complex<double>(2, 0), std::complex<double>(0, 1),
      std::complex<double>(0, -1), std::complex<double>(2, 0);
  const MatR x = realify(m);
  Eigen::SelfAdjointEigenSolver<MatR> es(x, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues()(0) == doctest::Approx(1.0));
  CHECK(es.eigenvalues()(1) == doctest::Approx(1.0));
  CHECK(es.eigenvalues()(2) == doctest::Approx(3.0));
  CHECK(es.eigenvalues()(3) == doctest::Approx(3.0));

  MatC bad(2, 2);
  bad << 1.0, 2.0, 3.0, 1.0;
  CHECK_THROWS_AS(realify(bad), NonHermitianInput);

  Rng rng(4);
  for (int it = 0; it < 200; ++it) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const MatC w = random_hermitian_pd(rng, n);
    const MatR t = realify(w);
    // determinant doubling and PSD preservation
    double ld = 0;
    Eigen::SelfAdjointEigenSolver<MatR> er(t, Eigen::EigenvaluesOnly);
    for (Eigen::Index j = 0; j < 2 * n; ++j) {
      CHECK(er.eigenvalues()(j) > 0);
      ld += std::log(er.eigenvalues()(j));
    }
    CHECK(ld == doctest::Approx(2.0 * logdet(w)).epsilon(1e-9));
    CHECK(derealify(t).isApprox(w, 1e-12));

    // vector quadratic identity w^H H w = r(w)^T T(H) r(w)
    VecC v(n);
    for (int j = 0; j < n; ++j) v(j) = rng.cnormal();
    const VecR rv = realify_vec(v);
    CHECK(std::real(v.dot(w * v)) ==
          doctest::Approx(rv.dot(t * rv)).epsilon(1e-10));

    // trace identity Tr(H W) = 0.5 tr(T(H) T(W))
    const MatC h = random_hermitian_pd(rng, n);
    CHECK(std::real((h * w).trace()) ==
          doctest::Approx(0.5 * (realify(h) * t).trace()).epsilon(1e-10));
  }
}

TEST_CASE("hermitian parameterization round trip") {
  Rng rng(5);
  for (int it = 0; it < 100; ++it) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const MatC w = random_hermitian_pd(rng, n);
    const VecR params = ir::params_from_hermitian(w);
    CHECK(params.size() == ir::hermitian_param_count(n));
    CHECK(ir::hermitian_from_params(params, 0, n).isApprox(w, 1e-12));
    CHECK(ir::materialize_hermitian(params, 0, n).isApprox(realify(w), 1e-12));

    // trace coefficients reproduce tr(C X) for symmetric C
    MatR croot = MatR::Random(2 * n, 2 * n);
    const MatR c = croot + croot.transpose();
    const VecR coef = ir::trace_coefficients(c, n);
    CHECK(coef.dot(params) ==
          doctest::Approx((c * realify(w)).trace()).epsilon(1e-9));
  }
}

TEST_CASE("fcbt subproblem dimensional checks") {
  const auto inst = table2_instance(7);
  const int G = inst.cache.groups();
  const int K_U = inst.config.K_U;

  // full-cache semantics: all blocks active
  auto full = inst;
  for (auto& row : full.cache.c) std::fill(row.begin(), row.end(), 1);
  std::vector<VecC> w(G);
  for (int g = 0; g < G; ++g) w[g] = 0.3 * VecC::Ones(inst.config.stacked_dim());
  const auto prob = ir::build_fcbt_subproblem(full, w);

  int scalars = 0, vectors = 0;
  for (const auto& b : prob.ir.blocks) {
    if (b.kind == ir::BlockKind::Scalar) ++scalars;
    if (b.kind == ir::BlockKind::RealVector) ++vectors;
  }
  CHECK(scalars == 1 + G + 2 * K_U);  // eta, r_g, gamma_k, chi_k
  CHECK(vectors == G);
  CHECK(prob.ir.dim() ==
        1 + G + 2 * K_U + G * 2 * inst.config.stacked_dim());

  // masked entries are absent from the variable space
  auto masked = full;
  masked.cache.c[masked.cache.f_g[0]][1] = 0;  // group 0 loses eRRH 1
  std::vector<VecC> wm = w;
  wm[0] = 0.3 * VecC::Ones(2 * inst.config.N_t);
  const auto prob_masked = ir::build_fcbt_subproblem(masked, wm);
  CHECK(prob_masked.ir.blocks[prob_masked.w[0]].size ==
        2 * 2 * inst.config.N_t);
  CHECK(prob_masked.active[0] == std::vector<int>{0, 2});
}

TEST_CASE("pcbt subproblem structure and objective parity") {
  const auto inst = table2_instance(7);
  Rng rng(6);
  auto it = ir::interiorize(inst, plain_iterate(inst, rng, false));
  const double lambda = 0.5, rho = 0.5;
  const auto prob = ir::build_pcbt_subproblem(inst, it, lambda, rho);

  const auto fetch = inst.cache.fetch_set();
  REQUIRE(!fetch.empty());
  int hinge_count = 0;
  for (int i = 0; i < inst.config.K_R; ++i)
    if (prob.hinge[i] >= 0) ++hinge_count;
  CHECK(hinge_count == static_cast<int>(fetch.size()));

  // independent arithmetic: objective at the start point equals
  // eta + theta + sum (1/2rho) t_i^2
  const VecR& x = prob.ir.start;
  double expected = x[prob.eta] + x[prob.theta];
  for (int i : fetch)
    expected += 0.5 / rho * x[prob.hinge[i]] * x[prob.hinge[i]];
  bool ok = true;
  CHECK(prob.ir.objective.eval(x, ok) == doctest::Approx(expected).epsilon(1e-12));

  // hinge atom value at start equals S/theta + phi(Om,Om_t) - ln|A| + rho
  // lambda - t_i via the complex-domain evaluators (tangent tight at start)
  for (int i : fetch) {
    const double g_i = ir::fronthaul_rate_lifted(inst, it.W_bar, it.Omega, i);
    const double e_direct =
        inst.config.S / x[prob.theta] - g_i + rho * lambda - x[prob.hinge[i]];
    for (const auto& atom : prob.ir.atoms) {
      if (atom.name == "penalty_" + std::to_string(i)) {
        CHECK(atom.expr.eval(x, ok) ==
              doctest::Approx(e_direct).epsilon(1e-9));
      }
    }
  }

  // rate atom value at start equals r + ln(chi) - ln(mu)
  for (int k = 0; k < inst.config.K_U; ++k) {
    const auto [mu, chi] = ir::mu_chi_lifted(inst, it.W_bar, it.Omega, k, true);
    const int gk = inst.cache.group_of_user[k];
    const double direct = x[prob.r[gk]] + std::log(chi) - std::log(mu);
    for (const auto& atom : prob.ir.atoms) {
      if (atom.name == "rate_k" + std::to_string(k)) {
        CHECK(atom.expr.eval(x, ok) == doctest::Approx(direct).epsilon(1e-9));
      }
    }
  }

  // power atom value at start from direct block traces (permutation
  // selector semantics)
  for (int i = 0; i < inst.config.K_R; ++i) {
    double pw = -inst.config.P[i];
    for (int g = 0; g < inst.cache.groups(); ++g)
      pw += std::real(it.W_bar[g]
                          .block(i * inst.config.N_t, i * inst.config.N_t,
                                 inst.config.N_t, inst.config.N_t)
                          .trace());
    if (it.Omega[i].size() != 0) pw += std::real(it.Omega[i].trace());
    for (const auto& atom : prob.ir.atoms)
      if (atom.name == "power3_" + std::to_string(i))
        CHECK(atom.expr.eval(x, ok) == doctest::Approx(pw).epsilon(1e-9));
  }
}

TEST_CASE("pcbt with full cache collapses toward the fcbt form") {
  const auto inst = table2_instance(7, 1.0);
  REQUIRE(inst.cache.fetch_set().empty());
  Rng rng(8);
  auto it = ir::interiorize(inst, plain_iterate(inst, rng, false));
  const auto prob = ir::build_pcbt_subproblem(inst, it, 0.5, 0.5);
  CHECK(prob.theta == -1);
  for (int i = 0; i < inst.config.K_R; ++i) {
    CHECK(prob.hinge[i] == -1);
    CHECK(prob.Omega[i] == -1);
  }
  bool ok = true;
  CHECK(prob.ir.objective.eval(prob.ir.start, ok) ==
        doctest::Approx(prob.ir.start[prob.eta]));
}

TEST_CASE("infeasible expansion point is rejected") {
  const auto inst = table2_instance(7);
  Rng rng(9);
  auto it = plain_iterate(inst, rng, false);
  for (auto& wb : it.W_bar) wb *= 1e5;  // blows the power budget
  CHECK_THROWS_AS(ir::build_pcbt_subproblem(inst, it, 0.5, 0.5),
                  ir::InfeasibleExpansionPoint);
}

TEST_CASE("pcpt subproblem swap and reduction structure") {
  const auto inst = table2_instance(7);
  const int G = inst.cache.groups();

  SUBCASE("no caching reduces to the pcbt structure") {
    auto zero = inst;
    zero.cache = inst.cache.zeroed();
    Rng rng(10);
    auto it = ir::interiorize(zero, plain_iterate(zero, rng, true));
    ir::PcptExpansion exp;
    exp.theta = 1.0;
    exp.r1.assign(G, 0.1);
    exp.psi.assign(G, 0.1);
    exp.kappa.assign(G, 1.0);
    const auto prob = ir::build_pcpt_subproblem(zero, it, exp, 0.5, 0.5);
    for (int g = 0; g < G; ++g) {
      CHECK(prob.swap_group[g]);
      CHECK(prob.W[g] == -1);
      CHECK(prob.r1[g] == -1);
      CHECK(prob.psi[g] == -1);
    }
    const auto pcbt = ir::build_pcbt_subproblem(
        zero, ir::PartialIterate{it.W_bar, it.Omega, {}}, 0.5, 0.5);
    CHECK(prob.ir.atoms.size() == pcbt.ir.atoms.size());
    CHECK(prob.ir.dim() == pcbt.ir.dim());
  }

  SUBCASE("crafted cache exercises swap and phase-II blocks") {
    auto crafted = inst;
    // group 0 uncached everywhere; group 1 cached everywhere
    for (int i = 0; i < crafted.config.K_R; ++i) {
      crafted.cache.c[crafted.cache.f_g[0]][i] = 0;
      crafted.cache.c[crafted.cache.f_g[1]][i] = 1;
    }
    Rng rng(11);
    auto it = ir::interiorize(crafted, plain_iterate(crafted, rng, true));
    ir::PcptExpansion exp;
    exp.theta = 1.0;
    exp.r1.assign(G, 0.05);
    exp.psi.assign(G, 0.05);
    exp.kappa.assign(G, 1.0);
    const auto prob = ir::build_pcpt_subproblem(crafted, it, exp, 0.5, 0.5);
    CHECK(prob.swap_group[0]);
    CHECK_FALSE(prob.swap_group[1]);
    CHECK(prob.W[0] == -1);
    CHECK(prob.W[1] >= 0);
    CHECK(prob.r1[1] >= 0);
    CHECK(prob.kappa[1] >= 0);

    // objective parity at the start point
    bool ok = true;
    const VecR& x = prob.ir.start;
    double expected = x[prob.eta] + x[prob.theta];
    for (int i : crafted.cache.fetch_set())
      expected += (0.5 / 0.5) * x[prob.hinge[i]] * x[prob.hinge[i]];
    CHECK(prob.ir.objective.eval(x, ok) ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("kappa below floor drops the phase coupling constraints") {
    Rng rng(12);
    auto it = ir::interiorize(inst, plain_iterate(inst, rng, true));
    ir::PcptExpansion exp;
    exp.theta = 1.0;
    exp.r1.assign(G, 0.05);
    exp.psi.assign(G, 0.05);
    exp.kappa.assign(G, 1.0);
    exp.kappa[1] = 1e-12;  // phase II already covers group 1
    const auto prob = ir::build_pcpt_subproblem(inst, it, exp, 0.5, 0.5);
    CHECK(prob.dropped_group[1]);
    CHECK(prob.kappa[1] == -1);
    CHECK(prob.psi[1] == -1);
    CHECK(prob.r1[1] >= 0);  // (45e) still pins tau * r1 <= S
  }
}

TEST_CASE("every built subproblem is strictly feasible at its start") {
  Rng rng(13);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = table2_instance(seed);
    auto it = ir::interiorize(inst, plain_iterate(inst, rng, true));
    CHECK_NOTHROW(ir::build_pcbt_subproblem(inst, it, 0.5, 0.5));
    CHECK_NOTHROW(ir::build_jceo_subproblem(inst, it));
    ir::PcptExpansion exp;
    const int G = inst.cache.groups();
    exp.theta = 1.0;
    exp.r1.assign(G, 0.05);
    exp.psi.assign(G, 0.05);
    exp.kappa.assign(G, 1.0);
    CHECK_NOTHROW(ir::build_pcpt_subproblem(inst, it, exp, 0.5, 0.5));
  }
}

TEST_CASE("subproblem dump lists variables and atoms") {
  const auto inst = table2_instance(7);
  Rng rng(14);
  auto it = ir::interiorize(inst, plain_iterate(inst, rng, false));
  const auto prob = ir::build_pcbt_subproblem(inst, it, 0.5, 0.5);
  const std::string dump = prob.ir.dump();
  CHECK(dump.find("Wbar_0") != std::string::npos);
  CHECK(dump.find("penalty_") != std::string::npos);
  CHECK(dump.find("value@start=") != std::string::npos);
}
