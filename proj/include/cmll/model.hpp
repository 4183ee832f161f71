#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmll/realify.hpp"

namespace cmll::model {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonPositiveDefiniteOmega : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateFronthaul : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ZeroRate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Network-level parameters. Bandwidth is normalized to 1 Hz throughout, so
/// quantities in nats/Hz and nats coincide numerically.
struct NetworkConfig {
  int K_R = 3;           // eRRH count
  int K_U = 6;           // user count
  int N_t = 1;           // antennas per eRRH
  int G = 3;             // multicast group count
  int F = 10;            // library size
  double S = 1.5;        // file size, nats/Hz
  std::vector<double> P;       // per-eRRH max transmit power, linear
  std::vector<double> C;       // per-eRRH fronthaul capacity, nats/Hz/s
  std::vector<double> sigma2;  // per-user noise variance
  double tau0 = 0.01;    // fixed BBU/routing delay, seconds
  double xi = 0.5;       // fractional caching proportion in [0,1]
  double d0 = 50.0;      // path-loss reference distance, m
  double alpha = 3.0;    // path-loss exponent
  double cell_radius = 500.0;

  bool strict_group_count = true;  // redraw requests until #distinct == G
  bool balanced_groups = true;     // additionally require equal group sizes
  double zipf_exponent = 0.0;      // 0 disables Zipf request popularity

  double rate_floor = 1e-9;  // nats/Hz/s guard below which rates are degenerate
  double psd_floor = 1e-10;  // eigenvalue floor for log-det evaluations

  int stacked_dim() const { return K_R * N_t; }
  /// Cache size in nats implied by xi (equal across eRRHs).
  double cache_size_nats() const { return std::floor(xi * S * F); }
  /// Number of distinct files each eRRH stores.
  int cached_file_count() const { return static_cast<int>(std::floor(xi * F)); }

  void validate() const;
};

/// Channel vectors h_{k,i} for every user/eRRH pair, with the stacked
/// accessor h_k = [h_{k,1}^H, ..., h_{k,K_R}^H]^H and precomputed outer
/// products H_k = h_k h_k^H. Immutable after construction.
class ChannelSet {
 public:
  ChannelSet(int K_U, int K_R, int N_t, std::vector<VecC> stacked);

  int users() const { return K_U_; }
  int errhs() const { return K_R_; }
  int antennas() const { return N_t_; }

  /// Channel block between user k and eRRH i (length N_t).
  VecC block(int k, int i) const;
  /// Stacked channel of user k (length K_R*N_t).
  const VecC& stacked(int k) const { return h_[k]; }
  /// Rank-one outer product h_k h_k^H.
  const MatC& outer(int k) const { return H_[k]; }

 private:
  int K_U_, K_R_, N_t_;
  std::vector<VecC> h_;
  std::vector<MatC> H_;
};

/// Cache indicators c_{f,i} plus the request structure: group -> file and
/// user -> group maps.
struct CacheState {
  std::vector<std::vector<std::uint8_t>> c;  // c[f][i] in {0,1}
  std::vector<int> f_g;                      // requested file per group
  std::vector<int> group_of_user;            // g_k

  int groups() const { return static_cast<int>(f_g.size()); }
  bool cached(int f, int i) const { return c[f][i] != 0; }
  /// 1 - c_{f_g,i}.
  bool uncached_for_group(int g, int i) const { return c[f_g[g]][i] == 0; }
  /// Count of requested-but-uncached files at eRRH i (sum_g cbar_{f_g,i}).
  int uncached_count(int i) const;
  /// True when eRRH i holds every requested file locally.
  bool fully_cached(int i) const { return uncached_count(i) == 0; }
  /// eRRHs that must fetch from the BBU.
  std::vector<int> fetch_set() const;
  std::vector<int> users_in_group(int g) const;
  /// Copy with every cache bit cleared (TSWC input).
  CacheState zeroed() const;
};

enum class SchemeTag { FCBT, PCBT, PCPT, TSWC, JCEO };

std::string to_string(SchemeTag tag);

/// Beamformers for one solved instance. Stacking order matches ChannelSet:
/// block i occupies rows [i*N_t, (i+1)*N_t). For partial-caching schemes
/// w_bar_g merges the local (cached) and BBU (uncached) parts; the cache
/// state decides which blocks are which. Omega holds one quantization
/// covariance per eRRH; fully cached eRRHs carry an empty (zero) matrix.
struct BeamformerSet {
  SchemeTag scheme = SchemeTag::FCBT;
  std::vector<VecC> w;      // FCBT beams, or PCPT phase-II beams (cached mask)
  std::vector<VecC> w_bar;  // partial-caching merged beams u_g + v_g
  std::vector<MatC> Omega;  // per-eRRH quantization covariance (may be 0x0)
  std::vector<int> group_of_user;  // g_k, copied from the instance

  /// Uncached-part (v) block of w_bar_g at eRRH i; zero when the file is
  /// cached there.
  VecC v_block(int g, int i, const CacheState& cache, int N_t) const;
};

struct TraceRow {
  int outer = 0;
  int inner = 0;
  double objective = 0.0;
  // |S/theta - min_i g_i|, the Algorithm 2/3 stopping metric (rate units)
  double approx_error = std::numeric_limits<double>::quiet_NaN();
  // |theta - S / min_i g_i|, the convergence-figure metric (seconds)
  double approx_error_time = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
};

enum class SolveStatus { Converged, MaxIterations, InfeasibleInput };

std::string to_string(SolveStatus status);

struct SchemeSolution {
  SchemeTag scheme = SchemeTag::FCBT;
  BeamformerSet beams;
  std::vector<double> r_phase1;  // per-group delivery rates, nats/Hz/s
  std::vector<double> r_phase2;
  double tau = 0.0;      // fetch delay, seconds
  double latency = 0.0;  // scheme objective, seconds
  double relaxed_objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<TraceRow> trace;
  SolveStatus status = SolveStatus::Converged;
  bool randomization_fallback = false;
};

struct Instance {
  NetworkConfig config;
  ChannelSet channels;
  CacheState cache;
};

/// Draw positions, channels, requests and cache fills for one deterministic
/// instance. Geometry/channels, requests and cache use independent seed
/// streams so that regenerating the cache for a different xi keeps the rest
/// fixed.
Instance generate_instance(const NetworkConfig& config, std::uint64_t seed);

/// Eq. (3) SINR for full-caching beams.
double sinr_full(int k, const BeamformerSet& beams, const ChannelSet& ch,
                 double sigma2);

/// Eq. (8) SINR with quantization noise; Omega enters as the block-diagonal
/// of the per-eRRH covariances.
double sinr_partial(int k, const BeamformerSet& beams, const ChannelSet& ch,
                    double sigma2);

/// ln(1 + gamma), nats/Hz/s.
double achievable_rate(double gamma);

/// Eq. (12) fronthaul rate ln det(A_i) - ln det(Omega_i) with
/// A_i = sum_g cbar_{f_g,i} v_{g,i} v_{g,i}^H + Omega_i. Returns +infinity
/// when eRRH i has no uncached requested file (nothing to fetch).
double fronthaul_rate(int i, const BeamformerSet& beams, const CacheState& cache,
                      const NetworkConfig& config);

/// Eq. (11) worst fetch delay. eRRHs with everything cached are excluded
/// from the min; if no eRRH fetches at all the delay is zero.
double delay_tau(double S, const BeamformerSet& beams, const CacheState& cache,
                 const NetworkConfig& config);

/// Scheme objective value: max over groups of the per-group latency,
/// objectives (9a), (10a), (14a). For PCPT the caller guarantees
/// tau * r_{g,1} <= S.
double latency(SchemeTag scheme, double S, const std::vector<double>& r_phase1,
               const std::vector<double>& r_phase2, double tau,
               double rate_floor = 1e-9);

}  // namespace cmll::model
