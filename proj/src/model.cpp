#include "cmll/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cmll/rng.hpp"

namespace cmll::model {

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (K_R < 1) fail("K_R must be >= 1");
  if (K_U < 1) fail("K_U must be >= 1");
  if (N_t < 1) fail("N_t must be >= 1");
  if (G < 1) fail("G must be >= 1");
  if (K_U < G) fail("K_U must be >= G (every group nonempty)");
  if (F < G) fail("F must be >= G");
  if (S <= 0) fail("S must be > 0");
  if (static_cast<int>(P.size()) != K_R) fail("P must have K_R entries");
  if (static_cast<int>(C.size()) != K_R) fail("C must have K_R entries");
  if (static_cast<int>(sigma2.size()) != K_U) fail("sigma2 must have K_U entries");
  for (double p : P)
    if (p <= 0) fail("P entries must be > 0");
  for (double c : C)
    if (c <= 0) fail("C entries must be > 0");
  for (double s : sigma2)
    if (s <= 0) fail("sigma2 entries must be > 0");
  if (tau0 < 0) fail("tau0 must be >= 0");
  if (xi < 0 || xi > 1) fail("xi must lie in [0,1]");
  if (d0 <= 0) fail("d0 must be > 0");
  if (cell_radius <= 0) fail("cell_radius must be > 0");
  if (rate_floor <= 0 || psd_floor <= 0) fail("floors must be > 0");
}

ChannelSet::ChannelSet(int K_U, int K_R, int N_t, std::vector<VecC> stacked)
    : K_U_(K_U), K_R_(K_R), N_t_(N_t), h_(std::move(stacked)) {
  if (static_cast<int>(h_.size()) != K_U)
    throw ConfigError("ChannelSet: wrong user count");
  H_.reserve(h_.size());
  for (const auto& hk : h_) {
    if (hk.size() != static_cast<Eigen::Index>(K_R) * N_t)
      throw ConfigError("ChannelSet: wrong stacked dimension");
    H_.push_back(hk * hk.adjoint());
  }
}

VecC ChannelSet::block(int k, int i) const {
  return h_[k].segment(static_cast<Eigen::Index>(i) * N_t_, N_t_);
}

int CacheState::uncached_count(int i) const {
  int n = 0;
  for (int f : f_g) n += (c[f][i] == 0) ? 1 : 0;
  return n;
}

std::vector<int> CacheState::fetch_set() const {
  std::vector<int> out;
  if (c.empty()) return out;
  const int K_R = static_cast<int>(c[0].size());
  for (int i = 0; i < K_R; ++i)
    if (!fully_cached(i)) out.push_back(i);
  return out;
}

std::vector<int> CacheState::users_in_group(int g) const {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(group_of_user.size()); ++k)
    if (group_of_user[k] == g) out.push_back(k);
  return out;
}

CacheState CacheState::zeroed() const {
  CacheState z = *this;
  for (auto& row : z.c) std::fill(row.begin(), row.end(), 0);
  return z;
}

std::string to_string(SchemeTag tag) {
  switch (tag) {
    case SchemeTag::FCBT: return "fcbt";
    case SchemeTag::PCBT: return "pcbt";
    case SchemeTag::PCPT: return "pcpt";
    case SchemeTag::TSWC: return "tswc";
    case SchemeTag::JCEO: return "jceo";
  }
  return "?";
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max-iterations";
    case SolveStatus::InfeasibleInput: return "infeasible-input";
  }
  return "?";
}

VecC BeamformerSet::v_block(int g, int i, const CacheState& cache, int N_t) const {
  if (!cache.uncached_for_group(g, i)) return VecC::Zero(N_t);
  return w_bar[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t);
}

namespace {

struct Point {
  double x, y;
};

Point draw_in_disk(Rng& rng, double radius) {
  // inverse-CDF radius keeps the draw uniform over the disk area
  const double r = radius * std::sqrt(rng.uniform());
  const double phi = 2.0 * M_PI * rng.uniform();
  return {r * std::cos(phi), r * std::sin(phi)};
}

int draw_file(Rng& rng, int F, double zipf_exponent) {
  if (zipf_exponent <= 0.0) return static_cast<int>(rng.below(F));
  std::vector<double> w(F);
  double total = 0;
  for (int f = 0; f < F; ++f) {
    w[f] = std::pow(static_cast<double>(f + 1), -zipf_exponent);
    total += w[f];
  }
  double u = rng.uniform() * total;
  for (int f = 0; f < F; ++f) {
    u -= w[f];
    if (u <= 0) return f;
  }
  return F - 1;
}

double logdet_psd(const MatC& m, double floor, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatC> es(m, Eigen::EigenvaluesOnly);
  double out = 0;
  for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
    const double ev = es.eigenvalues()(j);
    if (ev <= floor) throw NonPositiveDefiniteOmega(what);
    out += std::log(ev);
  }
  return out;
}

}  // namespace

Instance generate_instance(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng geo_rng(mix_seed(seed, 0));
  Rng req_rng(mix_seed(seed, 1));
  Rng cache_rng(mix_seed(seed, 2));

  // positions and small-scale fading
  std::vector<Point> errh(config.K_R), user(config.K_U);
  for (auto& p : errh) p = draw_in_disk(geo_rng, config.cell_radius);
  for (auto& p : user) p = draw_in_disk(geo_rng, config.cell_radius);

  const int M = config.stacked_dim();
  std::vector<VecC> stacked(config.K_U, VecC::Zero(M));
  for (int k = 0; k < config.K_U; ++k) {
    for (int i = 0; i < config.K_R; ++i) {
      const double dx = user[k].x - errh[i].x;
      const double dy = user[k].y - errh[i].y;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double rho = 1.0 / (1.0 + std::pow(d / config.d0, config.alpha));
      for (int a = 0; a < config.N_t; ++a)
        stacked[k](i * config.N_t + a) = std::sqrt(rho) * geo_rng.cnormal();
    }
  }

  // requests; redrawn until the distinct-file count (and, when asked, the
  // group balance) matches the configured G
  std::vector<int> req(config.K_U);
  std::vector<int> distinct;
  const int attempts_cap = 1000000;
  for (int attempt = 0;; ++attempt) {
    for (int k = 0; k < config.K_U; ++k)
      req[k] = draw_file(req_rng, config.F, config.zipf_exponent);
    std::set<int> files(req.begin(), req.end());
    distinct.assign(files.begin(), files.end());
    if (!config.strict_group_count) break;
    bool ok = static_cast<int>(distinct.size()) == config.G;
    if (ok && config.balanced_groups) {
      std::vector<int> count(config.G, 0);
      for (int k = 0; k < config.K_U; ++k) {
        const int g = static_cast<int>(
            std::lower_bound(distinct.begin(), distinct.end(), req[k]) -
            distinct.begin());
        ++count[g];
      }
      const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
      ok = (*hi - *lo) <= (config.K_U % config.G == 0 ? 0 : 1);
    }
    if (ok) break;
    if (attempt > attempts_cap)
      throw ConfigError("generate_instance: cannot realize requested group layout");
  }

  CacheState cache;
  cache.f_g = distinct;
  cache.group_of_user.resize(config.K_U);
  for (int k = 0; k < config.K_U; ++k)
    cache.group_of_user[k] = static_cast<int>(
        std::lower_bound(distinct.begin(), distinct.end(), req[k]) -
        distinct.begin());

  // cache fill: floor(xi*F) distinct files per eRRH, uniform without
  // replacement (partial Fisher-Yates)
  cache.c.assign(config.F, std::vector<std::uint8_t>(config.K_R, 0));
  const int n_cached = config.cached_file_count();
  for (int i = 0; i < config.K_R; ++i) {
    std::vector<int> pool(config.F);
    std::iota(pool.begin(), pool.end(), 0);
    for (int j = 0; j < n_cached; ++j) {
      const int pick = j + static_cast<int>(cache_rng.below(config.F - j));
      std::swap(pool[j], pool[pick]);
      cache.c[pool[j]][i] = 1;
    }
  }

  return Instance{config, ChannelSet(config.K_U, config.K_R, config.N_t,
                                     std::move(stacked)),
                  std::move(cache)};
}

double sinr_full(int k, const BeamformerSet& beams, const ChannelSet& ch,
                 double sigma2) {
  const VecC& hk = ch.stacked(k);
  const int gk = beams.group_of_user.at(k);
  double num = 0, denom = sigma2;
  for (int g = 0; g < static_cast<int>(beams.w.size()); ++g) {
    if (beams.w[g].size() == 0) continue;
    const double p = std::norm(hk.dot(beams.w[g]));  // |h^H w|^2
    if (g == gk)
      num = p;
    else
      denom += p;
  }
  return num / denom;
}

double sinr_partial(int k, const BeamformerSet& beams, const ChannelSet& ch,
                    double sigma2) {
  const VecC& hk = ch.stacked(k);
  const int gk = beams.group_of_user.at(k);
  const int N_t = ch.antennas();
  double num = 0, denom = sigma2;
  for (int g = 0; g < static_cast<int>(beams.w_bar.size()); ++g) {
    const double p = std::norm(hk.dot(beams.w_bar[g]));
    if (g == gk)
      num = p;
    else
      denom += p;
  }
  for (int i = 0; i < static_cast<int>(beams.Omega.size()); ++i) {
    if (beams.Omega[i].size() == 0) continue;
    const VecC hki = hk.segment(static_cast<Eigen::Index>(i) * N_t, N_t);
    denom += std::real(hki.dot(beams.Omega[i] * hki));
  }
  return num / denom;
}

double achievable_rate(double gamma) {
  if (gamma < 0) throw std::invalid_argument("achievable_rate: gamma < 0");
  return std::log1p(gamma);
}

double fronthaul_rate(int i, const BeamformerSet& beams, const CacheState& cache,
                      const NetworkConfig& config) {
  if (cache.fully_cached(i)) return std::numeric_limits<double>::infinity();
  const int N_t = config.N_t;
  if (i >= static_cast<int>(beams.Omega.size()) || beams.Omega[i].size() == 0)
    throw NonPositiveDefiniteOmega("fronthaul_rate: missing Omega at fetch eRRH");
  const MatC& Om = beams.Omega[i];
  const double ld_omega = logdet_psd(Om, config.psd_floor, "fronthaul_rate: Omega");
  MatC A = Om;
  for (int g = 0; g < cache.groups(); ++g) {
    if (!cache.uncached_for_group(g, i)) continue;
    const VecC v = beams.w_bar[g].segment(static_cast<Eigen::Index>(i) * N_t, N_t);
    A += v * v.adjoint();
  }
  const double ld_a = logdet_psd(A, config.psd_floor, "fronthaul_rate: A");
  return ld_a - ld_omega;
}

double delay_tau(double S, const BeamformerSet& beams, const CacheState& cache,
                 const NetworkConfig& config) {
  double min_rate = std::numeric_limits<double>::infinity();
  for (int i : cache.fetch_set())
    min_rate = std::min(min_rate, fronthaul_rate(i, beams, cache, config));
  if (std::isinf(min_rate)) return 0.0;  // nothing fetched anywhere
  if (min_rate <= config.rate_floor)
    throw DegenerateFronthaul("delay_tau: fronthaul rate at or below floor");
  return config.tau0 + S / min_rate;
}

double latency(SchemeTag scheme, double S, const std::vector<double>& r_phase1,
               const std::vector<double>& r_phase2, double tau,
               double rate_floor) {
  double worst = 0.0;
  switch (scheme) {
    case SchemeTag::FCBT: {
      for (double r : r_phase1) {
        if (r <= rate_floor) throw ZeroRate("latency: fcbt rate below floor");
        worst = std::max(worst, S / r);
      }
      return worst;
    }
    case SchemeTag::PCBT:
    case SchemeTag::TSWC:
    case SchemeTag::JCEO: {
      for (double r : r_phase2) {
        if (r <= rate_floor) throw ZeroRate("latency: delivery rate below floor");
        worst = std::max(worst, S / r);
      }
      return worst + tau;
    }
    case SchemeTag::PCPT: {
      const std::size_t G = r_phase2.size();
      for (std::size_t g = 0; g < G; ++g) {
        const double r1 = g < r_phase1.size() ? r_phase1[g] : 0.0;
        const double remaining = S - tau * r1;
        if (remaining < -S * 1e-9)
          throw std::invalid_argument("latency: tau*r1 exceeds S");
        if (remaining <= 0) continue;  // group served entirely in phase II
        if (r_phase2[g] <= rate_floor)
          throw ZeroRate("latency: pcpt phase-3 rate below floor");
        worst = std::max(worst, remaining / r_phase2[g]);
      }
      return worst + tau;
    }
  }
  throw std::logic_error("latency: unknown scheme");
}

}  // namespace cmll::model
