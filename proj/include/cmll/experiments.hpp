#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmll/model.hpp"
#include "cmll/schemes.hpp"

namespace cmll::experiments {

enum class SweepParam { Xi, C, S };

std::string to_string(SweepParam p);
SweepParam sweep_param_from_string(const std::string& s);

struct SweepSpec {
  SweepParam param = SweepParam::Xi;
  std::vector<double> grid;  // nonempty, ascending
  model::NetworkConfig base;
  schemes::OuterLoopSettings settings;
  int trials = 20;
  std::uint64_t base_seed = 1;
  std::vector<model::SchemeTag> scheme_list = {
      model::SchemeTag::FCBT, model::SchemeTag::PCPT, model::SchemeTag::PCBT,
      model::SchemeTag::TSWC};
  int threads = 1;

  void validate() const;
  model::NetworkConfig config_at(double value) const;
};

struct TrialRecord {
  double param_value = 0;
  model::SchemeTag scheme = model::SchemeTag::FCBT;
  int trial = 0;
  std::uint64_t seed = 0;
  double latency = 0;
  double tau = 0;
  model::SolveStatus status = model::SolveStatus::Converged;
};

struct CellStats {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
  int failures = 0;
  std::vector<double> values;
};

struct SweepResult {
  SweepParam param = SweepParam::Xi;
  std::vector<double> grid;
  std::vector<model::SchemeTag> scheme_list;
  int trials = 0;
  std::uint64_t base_seed = 0;
  // rows ordered grid-major, then scheme, then trial
  std::vector<TrialRecord> rows;

  const TrialRecord& at(int grid_idx, int scheme_idx, int trial) const;
  /// Per-cell statistics over that cell's converged trials.
  CellStats cell(int grid_idx, int scheme_idx) const;
  /// Trials converged for every scheme at this grid point (listwise
  /// deletion), returned per scheme in scheme_list order.
  std::vector<std::vector<double>> paired_values(int grid_idx) const;
};

/// Paired design: trial t draws one instance per grid value from seed
/// base_seed + t; all schemes see identical channels and caches, and only a
/// xi sweep regenerates the cache fill.
SweepResult run_sweep(const SweepSpec& spec);

struct ConvergenceRow {
  model::SchemeTag scheme;
  std::uint64_t seed;
  model::TraceRow trace;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
};

ConvergenceResult run_convergence(const model::NetworkConfig& config,
                                  const schemes::OuterLoopSettings& settings,
                                  model::SchemeTag scheme,
                                  const std::vector<std::uint64_t>& seeds);

/// CSV emission; stable column order, '.' decimal, UTF-8.
std::string sweep_csv(const SweepResult& result);
std::string convergence_csv(const ConvergenceResult& result);
std::string trace_csv(const model::SchemeSolution& solution,
                      model::SchemeTag scheme, std::uint64_t seed);

}  // namespace cmll::experiments
