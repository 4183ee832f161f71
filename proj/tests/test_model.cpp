#include <doctest.h>

#include <cmath>
#include <complex>

#include "cmll/model.hpp"
#include "cmll/rng.hpp"

using namespace cmll;
using namespace cmll::model;

namespace {

NetworkConfig table2_config() {
  NetworkConfig cfg;
  cfg.K_R = 3;
  cfg.K_U = 6;
  cfg.N_t = 1;
  cfg.G = 3;
  cfg.F = 10;
  cfg.S = 1.5;
  cfg.P.assign(3, 100.0);  // 20 dB over unit noise
  cfg.C.assign(3, 2.0);
  cfg.sigma2.assign(6, 1.0);
  return cfg;
}

NetworkConfig tiny_config(int K_R, int K_U, int N_t, int G) {
  NetworkConfig cfg;
  cfg.K_R = K_R;
  cfg.K_U = K_U;
  cfg.N_t = N_t;
  cfg.G = G;
  cfg.F = std::max(G, 2);
  cfg.P.assign(K_R, 10.0);
  cfg.C.assign(K_R, 2.0);
  cfg.sigma2.assign(K_U, 1.0);
  return cfg;
}

CacheState make_cache(int F, int K_R, std::vector<int> f_g,
                      std::vector<int> group_of_user,
                      std::vector<std::vector<std::uint8_t>> c = {}) {
  CacheState cache;
  cache.f_g = std::move(f_g);
  cache.group_of_user = std::move(group_of_user);
  if (c.empty())
    cache.c.assign(F, std::vector<std::uint8_t>(K_R, 1));
  else
    cache.c = std::move(c);
  return cache;
}

}  // namespace

TEST_CASE("generate_instance cache extremes") {
  auto cfg = table2_config();
  cfg.xi = 1.0;
  auto inst = generate_instance(cfg, 3);
  for (int f = 0; f < cfg.F; ++f)
    for (int i = 0; i < cfg.K_R; ++i) CHECK(inst.cache.cached(f, i));

  cfg.xi = 0.0;
  inst = generate_instance(cfg, 3);
  CHECK(cfg.cache_size_nats() == 0.0);
  for (int f = 0; f < cfg.F; ++f)
    for (int i = 0; i < cfg.K_R; ++i) CHECK_FALSE(inst.cache.cached(f, i));
}

TEST_CASE("generate_instance at Table II parameters") {
  auto cfg = table2_config();
  const auto inst = generate_instance(cfg, 7);
  for (int i = 0; i < cfg.K_R; ++i) {
    int count = 0;
    for (int f = 0; f < cfg.F; ++f) count += inst.cache.cached(f, i) ? 1 : 0;
    CHECK(count == 5);  // floor(0.5 * 10)
  }
  CHECK(inst.cache.groups() == 3);
  // balanced default: two users per group
  for (int g = 0; g < 3; ++g)
    CHECK(inst.cache.users_in_group(g).size() == 2);

  const auto again = generate_instance(cfg, 7);
  for (int k = 0; k < cfg.K_U; ++k)
    CHECK((inst.channels.stacked(k) - again.channels.stacked(k)).norm() == 0.0);

  // paired design: cache stream independent of S and C
  auto cfg2 = cfg;
  cfg2.S = 2.7;
  cfg2.C.assign(3, 9.0);
  const auto alt = generate_instance(cfg2, 7);
  for (int k = 0; k < cfg.K_U; ++k)
    CHECK((inst.channels.stacked(k) - alt.channels.stacked(k)).norm() == 0.0);
  CHECK(inst.cache.c == alt.cache.c);
  CHECK(inst.cache.f_g == alt.cache.f_g);
}

TEST_CASE("sinr_full closed forms") {
  BeamformerSet beams;
  beams.group_of_user = {0};
  ChannelSet ch(1, 1, 1, {VecC::Ones(1)});

  beams.w = {VecC::Constant(1, 2.0)};
  CHECK(sinr_full(0, beams, ch, 1.0) == doctest::Approx(4.0));

  beams.w = {VecC::Zero(1)};
  CHECK(sinr_full(0, beams, ch, 1.0) == doctest::Approx(0.0));

  beams.w = {VecC::Ones(1), VecC::Ones(1)};
  CHECK(sinr_full(0, beams, ch, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("sinr_partial closed forms and reduction to sinr_full") {
  BeamformerSet beams;
  beams.group_of_user = {0};
  ChannelSet ch(1, 1, 1, {VecC::Ones(1)});
  beams.w_bar = {VecC::Ones(1)};
  beams.Omega = {MatC::Identity(1, 1)};
  CHECK(sinr_partial(0, beams, ch, 1.0) == doctest::Approx(0.5));

  // Omega = 0 reduces Eq. (8) to Eq. (3) on random instances
  Rng rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    const int K_R = 2, N_t = 2, G = 2, K_U = 3;
    std::vector<VecC> hs;
    for (int k = 0; k < K_U; ++k) {
      VecC h(K_R * N_t);
      for (int j = 0; j < K_R * N_t; ++j) h(j) = rng.cnormal();
      hs.push_back(h);
    }
    ChannelSet chans(K_U, K_R, N_t, hs);
    BeamformerSet b;
    b.group_of_user = {0, 1, 0};
    for (int g = 0; g < G; ++g) {
      VecC w(K_R * N_t);
      for (int j = 0; j < K_R * N_t; ++j) w(j) = rng.cnormal();
      b.w.push_back(w);
      b.w_bar.push_back(w);
    }
    b.Omega.assign(K_R, MatC::Zero(N_t, N_t));
    for (int k = 0; k < K_U; ++k)
      CHECK(sinr_partial(k, b, chans, 1.3) ==
            doctest::Approx(sinr_full(k, b, chans, 1.3)).epsilon(1e-12));
  }
}

TEST_CASE("sinr_partial against scripted arithmetic") {
  // independent evaluation of Eq. (8) with plain loops
  Rng rng(4242);
  const int K_R = 2, N_t = 2, G = 2, K_U = 2;
  std::vector<VecC> hs;
  for (int k = 0; k < K_U; ++k) {
    VecC h(K_R * N_t);
    for (int j = 0; j < K_R * N_t; ++j) h(j) = rng.cnormal();
    hs.push_back(h);
  }
  ChannelSet chans(K_U, K_R, N_t, hs);
  BeamformerSet b;
  b.group_of_user = {0, 1};
  for (int g = 0; g < G; ++g) {
    VecC w(K_R * N_t);
    for (int j = 0; j < K_R * N_t; ++j) w(j) = rng.cnormal();
    b.w_bar.push_back(w);
  }
  for (int i = 0; i < K_R; ++i) {
    MatC om = MatC::Zero(N_t, N_t);
    for (int a = 0; a < N_t; ++a) om(a, a) = 0.2 + 0.1 * a + 0.05 * i;
    b.Omega.push_back(om);
  }

  for (int k = 0; k < K_U; ++k) {
    const int gk = b.group_of_user[k];
    std::complex<double> own(0, 0);
    double interf = 0, quant = 0;
    for (int j = 0; j < K_R * N_t; ++j)
      own += std::conj(hs[k](j)) * b.w_bar[gk](j);
    for (int g = 0; g < G; ++g) {
      if (g == gk) continue;
      std::complex<double> dot(0, 0);
      for (int j = 0; j < K_R * N_t; ++j)
        dot += std::conj(hs[k](j)) * b.w_bar[g](j);
      interf += std::norm(dot);
    }
    for (int i = 0; i < K_R; ++i)
      for (int a = 0; a < N_t; ++a)
        for (int c = 0; c < N_t; ++c)
          quant += std::real(std::conj(hs[k](i * N_t + a)) *
                             b.Omega[i](a, c) * hs[k](i * N_t + c));
    const double expected = std::norm(own) / (interf + quant + 1.0);
    CHECK(sinr_partial(k, b, chans, 1.0) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("achievable_rate") {
  CHECK(achievable_rate(0.0) == 0.0);
  CHECK(achievable_rate(std::exp(1.0) - 1.0) == doctest::Approx(1.0));
  CHECK(achievable_rate(4.0) == doctest::Approx(std::log(5.0)));
  CHECK_THROWS(achievable_rate(-0.1));
}

TEST_CASE("fronthaul_rate closed forms") {
  auto cfg = tiny_config(1, 1, 1, 1);
  BeamformerSet beams;
  beams.group_of_user = {0};

  SUBCASE("everything cached gives the infinite sentinel") {
    auto cache = make_cache(2, 1, {0}, {0});
    beams.w_bar = {VecC::Ones(1)};
    beams.Omega = {MatC::Identity(1, 1)};
    CHECK(std::isinf(fronthaul_rate(0, beams, cache, cfg)));
  }

  SUBCASE("scalar ln 2") {
    auto cache = make_cache(2, 1, {0}, {0},
                            {{std::vector<std::uint8_t>{0}},
                             {std::vector<std::uint8_t>{1}}});
    beams.w_bar = {VecC::Ones(1)};
    beams.Omega = {MatC::Identity(1, 1)};
    CHECK(fronthaul_rate(0, beams, cache, cfg) ==
          doctest::Approx(std::log(2.0)));
  }

  SUBCASE("N_t=2 gives ln 3") {
    auto cfg2 = tiny_config(1, 1, 2, 1);
    auto cache = make_cache(2, 1, {0}, {0},
                            {{std::vector<std::uint8_t>{0}},
                             {std::vector<std::uint8_t>{1}}});
    BeamformerSet b2;
    b2.group_of_user = {0};
    b2.w_bar = {VecC::Ones(2)};
    b2.Omega = {MatC::Identity(2, 2)};
    CHECK(fronthaul_rate(0, b2, cache, cfg2) ==
          doctest::Approx(std::log(3.0)));
  }

  SUBCASE("non positive definite Omega is an error") {
    auto cache = make_cache(2, 1, {0}, {0},
                            {{std::vector<std::uint8_t>{0}},
                             {std::vector<std::uint8_t>{1}}});
    beams.w_bar = {VecC::Ones(1)};
    beams.Omega = {MatC::Zero(1, 1)};
    CHECK_THROWS_AS(fronthaul_rate(0, beams, cache, cfg),
                    NonPositiveDefiniteOmega);
  }
}

TEST_CASE("fronthaul_rate nonnegative under random PSD perturbations") {
  Rng rng(17);
  auto cfg = tiny_config(1, 1, 3, 1);
  auto cache = make_cache(2, 1, {0}, {0},
                          {{std::vector<std::uint8_t>{0}},
                           {std::vector<std::uint8_t>{1}}});
  for (int rep = 0; rep < 200; ++rep) {
    MatC root(3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) root(r, c) = rng.cnormal();
    BeamformerSet beams;
    beams.group_of_user = {0};
    VecC v(3);
    for (int r = 0; r < 3; ++r) v(r) = rng.cnormal();
    beams.w_bar = {v};
    beams.Omega = {root * root.adjoint() + 1e-6 * MatC::Identity(3, 3)};
    CHECK(fronthaul_rate(0, beams, cache, cfg) >= -1e-12);
  }
}

TEST_CASE("delay_tau") {
  auto cfg = tiny_config(2, 1, 1, 1);
  cfg.tau0 = 0.01;
  cfg.S = 1.5;

  SUBCASE("all cached everywhere gives zero") {
    auto cache = make_cache(2, 2, {0}, {0});
    BeamformerSet beams;
    beams.group_of_user = {0};
    beams.w_bar = {VecC::Ones(2)};
    beams.Omega = {MatC(), MatC()};
    CHECK(delay_tau(cfg.S, beams, cache, cfg) == 0.0);
  }

  SUBCASE("single fetch link at rate ln 2") {
    // eRRH 0 caches the file, eRRH 1 does not
    auto cache = make_cache(2, 2, {0}, {0},
                            {{std::vector<std::uint8_t>{1, 0}},
                             {std::vector<std::uint8_t>{1, 1}}});
    BeamformerSet beams;
    beams.group_of_user = {0};
    beams.w_bar = {VecC::Ones(2)};
    beams.Omega = {MatC(), MatC::Identity(1, 1)};
    const double expected = 0.01 + 1.5 / std::log(2.0);
    CHECK(delay_tau(cfg.S, beams, cache, cfg) == doctest::Approx(expected));
  }

  SUBCASE("worst link governs") {
    // rates ln(2) at eRRH 0 (|v|^2=1) and ln(5) at eRRH 1 (|v|^2=4)
    auto cfg2 = cfg;
    cfg2.tau0 = 0.0;
    cfg2.S = 1.0;
    auto cache = make_cache(2, 2, {0}, {0},
                            {{std::vector<std::uint8_t>{0, 0}},
                             {std::vector<std::uint8_t>{1, 1}}});
    BeamformerSet beams;
    beams.group_of_user = {0};
    VecC v(2);
    v << 1.0, 2.0;
    beams.w_bar = {v};
    beams.Omega = {MatC::Identity(1, 1), MatC::Identity(1, 1)};
    CHECK(delay_tau(cfg2.S, beams, cache, cfg2) ==
          doctest::Approx(1.0 / std::log(2.0)));
  }

  SUBCASE("monotone: larger fronthaul rate cannot raise the delay") {
    auto cache = make_cache(2, 2, {0}, {0},
                            {{std::vector<std::uint8_t>{0, 0}},
                             {std::vector<std::uint8_t>{1, 1}}});
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      VecC v(2);
      v << rng.cnormal(), rng.cnormal();
      BeamformerSet beams;
      beams.group_of_user = {0};
      beams.w_bar = {v};
      beams.Omega = {MatC::Identity(1, 1), MatC::Identity(1, 1)};
      const double base = delay_tau(cfg.S, beams, cache, cfg);
      BeamformerSet boosted = beams;
      boosted.w_bar[0](0) *= 2.0;  // raises rate at eRRH 0 only
      CHECK(delay_tau(cfg.S, boosted, cache, cfg) <= base + 1e-12);
    }
  }
}

TEST_CASE("latency per scheme") {
  CHECK(latency(SchemeTag::FCBT, 1.5, {0.5, 0.75}, {}, 0.0) ==
        doctest::Approx(3.0));
  CHECK(latency(SchemeTag::PCBT, 1.2, {}, {0.6}, 0.5) == doctest::Approx(2.5));
  // every group finished within phase II: latency is tau
  CHECK(latency(SchemeTag::PCPT, 1.0, {2.0, 2.0}, {0.5, 0.7}, 0.5) ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(latency(SchemeTag::PCBT, 1.0, {}, {0.0}, 0.1), ZeroRate);

  // metric-level reduction identities
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const double S = 0.5 + rng.uniform();
    const double tau = 0.1 + rng.uniform();
    std::vector<double> r1 = {0.0, 0.0};
    std::vector<double> r2 = {0.2 + rng.uniform(), 0.2 + rng.uniform()};
    CHECK(latency(SchemeTag::PCPT, S, r1, r2, tau) ==
          doctest::Approx(latency(SchemeTag::PCBT, S, {}, r2, tau)));
    std::vector<double> r1b = {0.2 + rng.uniform(), 0.2 + rng.uniform()};
    CHECK(latency(SchemeTag::PCPT, S, r1b, r2, 0.0) ==
          doctest::Approx(latency(SchemeTag::FCBT, S, r2, {}, 0.0)));
  }
}

TEST_CASE("evaluators are pure") {
  auto cfg = table2_config();
  const auto inst = generate_instance(cfg, 11);
  BeamformerSet beams;
  beams.group_of_user = inst.cache.group_of_user;
  Rng rng(21);
  for (int g = 0; g < inst.cache.groups(); ++g) {
    VecC w(cfg.stacked_dim());
    for (int j = 0; j < cfg.stacked_dim(); ++j) w(j) = rng.cnormal();
    beams.w_bar.push_back(w);
  }
  for (int i = 0; i < cfg.K_R; ++i)
    beams.Omega.push_back(0.3 * MatC::Identity(1, 1));
  const double a = sinr_partial(2, beams, inst.channels, 1.0);
  const double b = sinr_partial(2, beams, inst.channels, 1.0);
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
  const double t1 = delay_tau(cfg.S, beams, inst.cache, cfg);
  const double t2 = delay_tau(cfg.S, beams, inst.cache, cfg);
  CHECK(std::memcmp(&t1, &t2, sizeof(double)) == 0);
}
