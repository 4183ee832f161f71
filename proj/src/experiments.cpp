#include "cmll/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

namespace cmll::experiments {

std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::Xi: return "xi";
    case SweepParam::C: return "C";
    case SweepParam::S: return "S";
  }
  return "?";
}

SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "xi") return SweepParam::Xi;
  if (s == "C" || s == "c") return SweepParam::C;
  if (s == "S" || s == "s") return SweepParam::S;
  throw std::invalid_argument("unknown sweep parameter: " + s);
}

void SweepSpec::validate() const {
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("sweep grid must be ascending");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (scheme_list.empty()) throw std::invalid_argument("no schemes selected");
  base.validate();
}

model::NetworkConfig SweepSpec::config_at(double value) const {
  model::NetworkConfig cfg = base;
  switch (param) {
    case SweepParam::Xi:
      cfg.xi = value;
      break;
    case SweepParam::C:
      std::fill(cfg.C.begin(), cfg.C.end(), value);
      break;
    case SweepParam::S:
      cfg.S = value;
      break;
  }
  return cfg;
}

const TrialRecord& SweepResult::at(int grid_idx, int scheme_idx, int trial) const {
  const int per_grid = static_cast<int>(scheme_list.size()) * trials;
  return rows[static_cast<std::size_t>(grid_idx) * per_grid +
              static_cast<std::size_t>(scheme_idx) * trials + trial];
}

CellStats SweepResult::cell(int grid_idx, int scheme_idx) const {
  CellStats out;
  for (int t = 0; t < trials; ++t) {
    const auto& rec = at(grid_idx, scheme_idx, t);
    if (rec.status == model::SolveStatus::Converged &&
        std::isfinite(rec.latency)) {
      out.values.push_back(rec.latency);
    } else {
      ++out.failures;
    }
  }
  out.n = static_cast<int>(out.values.size());
  if (out.n > 0) {
    double sum = 0;
    for (double v : out.values) sum += v;
    out.mean = sum / out.n;
    if (out.n > 1) {
      double ss = 0;
      for (double v : out.values) ss += (v - out.mean) * (v - out.mean);
      out.std_error = std::sqrt(ss / (out.n - 1)) / std::sqrt(double(out.n));
    } else {
      out.std_error = 0;
    }
  }
  return out;
}

std::vector<std::vector<double>> SweepResult::paired_values(int grid_idx) const {
  const int n_schemes = static_cast<int>(scheme_list.size());
  std::vector<std::vector<double>> out(n_schemes);
  for (int t = 0; t < trials; ++t) {
    bool ok = true;
    for (int s = 0; s < n_schemes && ok; ++s) {
      const auto& rec = at(grid_idx, s, t);
      ok = rec.status == model::SolveStatus::Converged &&
           std::isfinite(rec.latency);
    }
    if (!ok) continue;  // listwise deletion
    for (int s = 0; s < n_schemes; ++s)
      out[s].push_back(at(grid_idx, s, t).latency);
  }
  return out;
}

namespace {

model::SchemeSolution dispatch(model::SchemeTag tag, const model::Instance& inst,
                               const schemes::OuterLoopSettings& settings) {
  switch (tag) {
    case model::SchemeTag::FCBT: return schemes::solve_fcbt(inst, settings);
    case model::SchemeTag::PCBT: return schemes::solve_pcbt(inst, settings);
    case model::SchemeTag::PCPT: return schemes::solve_pcpt(inst, settings);
    case model::SchemeTag::TSWC: return schemes::solve_tswc(inst, settings);
    case model::SchemeTag::JCEO:
      return schemes::solve_jceo_baseline(inst, settings);
  }
  throw std::logic_error("dispatch: unknown scheme");
}

void append_double(std::string& out, double v) {
  char buf[40];
  if (std::isnan(v)) {
    out += "nan";
  } else if (std::isinf(v)) {
    out += v > 0 ? "inf" : "-inf";
  } else {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    out += buf;
  }
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  SweepResult result;
  result.param = spec.param;
  result.grid = spec.grid;
  result.scheme_list = spec.scheme_list;
  result.trials = spec.trials;
  result.base_seed = spec.base_seed;
  const int n_grid = static_cast<int>(spec.grid.size());
  const int n_schemes = static_cast<int>(spec.scheme_list.size());
  result.rows.resize(static_cast<std::size_t>(n_grid) * n_schemes * spec.trials);

  auto run_trial = [&](int trial) {
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(trial);
    for (int gi = 0; gi < n_grid; ++gi) {
      const auto cfg = spec.config_at(spec.grid[gi]);
      model::Instance inst = model::generate_instance(cfg, seed);
      for (int si = 0; si < n_schemes; ++si) {
        TrialRecord rec;
        rec.param_value = spec.grid[gi];
        rec.scheme = spec.scheme_list[si];
        rec.trial = trial;
        rec.seed = seed;
        try {
          auto settings = spec.settings;
          settings.seed = seed;
          const auto sol = dispatch(spec.scheme_list[si], inst, settings);
          rec.latency = sol.latency;
          rec.tau = sol.tau;
          rec.status = sol.status;
        } catch (const std::exception&) {
          rec.latency = std::numeric_limits<double>::quiet_NaN();
          rec.tau = std::numeric_limits<double>::quiet_NaN();
          rec.status = model::SolveStatus::InfeasibleInput;
        }
        result.rows[static_cast<std::size_t>(gi) * n_schemes * spec.trials +
                    static_cast<std::size_t>(si) * spec.trials + trial] = rec;
      }
    }
  };

  const int threads = std::max(1, spec.threads);
  if (threads == 1) {
    for (int t = 0; t < spec.trials; ++t) run_trial(t);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int n_workers = std::min(threads, spec.trials);
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int t = next.fetch_add(1);
          if (t >= spec.trials) return;
          run_trial(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return result;
}

ConvergenceResult run_convergence(const model::NetworkConfig& config,
                                  const schemes::OuterLoopSettings& settings,
                                  model::SchemeTag scheme,
                                  const std::vector<std::uint64_t>& seeds) {
  ConvergenceResult out;
  for (std::uint64_t seed : seeds) {
    try {
      model::Instance inst = model::generate_instance(config, seed);
      auto s = settings;
      s.seed = seed;
      const auto sol = dispatch(scheme, inst, s);
      for (const auto& row : sol.trace)
        out.rows.push_back({scheme, seed, row});
    } catch (const std::exception&) {
      // per-seed failure: no rows emitted for this seed
    }
  }
  return out;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out =
      "param_name,param_value,scheme,trial,seed,latency_s,tau_s,status\n";
  const std::string pname = to_string(result.param);
  for (std::size_t gi = 0; gi < result.grid.size(); ++gi) {
    for (std::size_t si = 0; si < result.scheme_list.size(); ++si) {
      for (int t = 0; t < result.trials; ++t) {
        const auto& rec =
            result.at(static_cast<int>(gi), static_cast<int>(si), t);
        out += pname;
        out += ',';
        append_double(out, rec.param_value);
        out += ',';
        out += model::to_string(rec.scheme);
        out += ',';
        out += std::to_string(rec.trial);
        out += ',';
        out += std::to_string(rec.seed);
        out += ',';
        append_double(out, rec.latency);
        out += ',';
        append_double(out, rec.tau);
        out += ',';
        out += model::to_string(rec.status);
        out += '\n';
      }
    }
  }
  return out;
}

std::string convergence_csv(const ConvergenceResult& result) {
  std::string out =
      "scheme,seed,outer_iter,inner_iter,objective,approx_error,lambda,rho\n";
  for (const auto& row : result.rows) {
    out += model::to_string(row.scheme);
    out += ',';
    out += std::to_string(row.seed);
    out += ',';
    out += std::to_string(row.trace.outer);
    out += ',';
    out += std::to_string(row.trace.inner);
    out += ',';
    append_double(out, row.trace.objective);
    out += ',';
    append_double(out, row.trace.approx_error_time);
    out += ',';
    append_double(out, row.trace.lambda);
    out += ',';
    append_double(out, row.trace.rho);
    out += '\n';
  }
  return out;
}

std::string trace_csv(const model::SchemeSolution& solution,
                      model::SchemeTag scheme, std::uint64_t seed) {
  ConvergenceResult conv;
  for (const auto& row : solution.trace) conv.rows.push_back({scheme, seed, row});
  return convergence_csv(conv);
}

}  // namespace cmll::experiments
