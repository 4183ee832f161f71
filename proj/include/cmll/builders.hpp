#pragma once

#include "cmll/ir.hpp"
#include "cmll/model.hpp"

namespace cmll::ir {

/// Vector-space SCA subproblem for the full-caching scheme: minimize eta
/// subject to the rate, interference, tangent-SINR, power and log-latency
/// constraints, all taken around the previous beams.
struct FcbtProblem {
  SubproblemIR ir;
  int eta = -1;
  std::vector<int> r;                      // per-group block ids
  std::vector<int> gamma;                  // per-user
  std::vector<int> chi;                    // per-user
  std::vector<int> w;                      // per-group real-vector blocks (-1 if masked out)
  std::vector<std::vector<int>> active;    // eRRHs kept per group after cache mask
};

FcbtProblem build_fcbt_subproblem(const model::Instance& inst,
                                  const std::vector<VecC>& w_prev);

/// Shared iterate for the SDR-based schemes. W holds the lifted phase-II
/// beams (PCPT only) in the masked per-group dimension; Omega entries are
/// empty for eRRHs that fetch nothing.
struct PartialIterate {
  std::vector<MatC> W_bar;
  std::vector<MatC> Omega;
  std::vector<MatC> W;
};

/// Move an iterate strictly inside the PSD cones and the power budget; the
/// fronthaul constraint only gains slack under this map.
PartialIterate interiorize(const model::Instance& inst, PartialIterate it);

/// Fronthaul rate ln|A_i| - ln|Omega_i| evaluated on lifted matrices.
double fronthaul_rate_lifted(const model::Instance& inst,
                             const std::vector<MatC>& W_bar,
                             const std::vector<MatC>& Omega, int i);

/// min over the fetch set of fronthaul_rate_lifted; +inf when nothing is
/// fetched anywhere.
double min_fronthaul_lifted(const model::Instance& inst,
                            const std::vector<MatC>& W_bar,
                            const std::vector<MatC>& Omega);

/// Signal and interference-plus-noise trace pairs (mu, chi) of Eq. (21) /
/// Eq. (36) evaluated on lifted matrices. phase2=false uses the phase-II
/// matrices W (no quantization noise).
std::pair<double, double> mu_chi_lifted(const model::Instance& inst,
                                        const std::vector<MatC>& mats,
                                        const std::vector<MatC>& Omega, int k,
                                        bool with_omega);

struct PcbtProblem {
  SubproblemIR ir;
  int eta = -1, theta = -1;
  std::vector<int> r;      // per-group r_{g,2}
  std::vector<int> W_bar;  // per-group hermitian blocks
  std::vector<int> Omega;  // per-eRRH (-1 when not fetching)
  std::vector<int> hinge;  // per-eRRH penalty slack (-1 when not fetching)
};

PcbtProblem build_pcbt_subproblem(const model::Instance& inst,
                                  const PartialIterate& prev, double lambda,
                                  double rho);

/// Scalar expansion state for the pipelined scheme, refreshed per Algorithm 3
/// at every outer round and carried through inner iterations.
struct PcptExpansion {
  double theta = 0;
  std::vector<double> r1;     // per group; ignored for swap groups
  std::vector<double> psi;
  std::vector<double> kappa;
};

struct PcptProblem {
  SubproblemIR ir;
  int eta = -1, theta = -1;
  std::vector<int> r1;  // -1 for swap groups
  std::vector<int> r2;
  std::vector<int> psi;    // -1 for swap/dropped groups
  std::vector<int> kappa;  // -1 for swap/dropped groups
  std::vector<int> W;      // phase-II blocks (-1 for swap groups)
  std::vector<int> W_bar;
  std::vector<int> Omega;
  std::vector<int> hinge;
  std::vector<bool> swap_group;     // no cached copy anywhere -> (30f)
  std::vector<bool> dropped_group;  // kappa below floor -> phase II covers S
};

PcptProblem build_pcpt_subproblem(const model::Instance& inst,
                                  const PartialIterate& prev,
                                  const PcptExpansion& exp, double lambda,
                                  double rho);

/// Max-min delivery-rate baseline subproblem: maximize the common rate under
/// the PCBT constraint set, no delay coupling.
struct JceoProblem {
  SubproblemIR ir;
  int rate = -1;
  std::vector<int> W_bar;
  std::vector<int> Omega;
};

JceoProblem build_jceo_subproblem(const model::Instance& inst,
                                  const PartialIterate& prev);

}  // namespace cmll::ir
