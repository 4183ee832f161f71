#include "cmll/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cmll/config.hpp"

namespace cmll::cli {

namespace {

model::SchemeTag scheme_from_name(const std::string& name) {
  if (name == "fcbt") return model::SchemeTag::FCBT;
  if (name == "pcbt") return model::SchemeTag::PCBT;
  if (name == "pcpt") return model::SchemeTag::PCPT;
  if (name == "tswc") return model::SchemeTag::TSWC;
  if (name == "jceo") return model::SchemeTag::JCEO;
  throw ConfigParseError("unknown scheme '" + name + "'");
}

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
  throw std::logic_error("unknown scheme");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

/// Section V figure parameterizations.
void apply_preset(RunConfig& cfg, const std::string& preset) {
  auto& n = cfg.network;
  auto& s = cfg.sweep;
  const double p20 = std::pow(10.0, 2.0);
  n.K_R = 3;
  n.K_U = 6;
  n.G = 3;
  n.F = 10;
  n.sigma2.assign(n.K_U, 1.0);
  if (preset == "fig4") {
    n.N_t = 1;
    n.S = 1.5;
    n.P.assign(n.K_R, p20);
    n.C.assign(n.K_R, 2.0);
    s.param = experiments::SweepParam::Xi;
    s.grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  } else if (preset == "fig5") {
    n.N_t = 4;
    n.S = 1.2;
    n.P.assign(n.K_R, p20);
    n.C.assign(n.K_R, 2.0);
    s.param = experiments::SweepParam::C;
    s.grid = {1.0, 1.5, 2.0, 2.5, 3.0};
  } else if (preset == "fig6") {
    n.N_t = 4;
    n.C.assign(n.K_R, 1.5);
    n.P.assign(n.K_R, p20);
    s.param = experiments::SweepParam::S;
    s.grid = {0.8, 1.2, 1.6, 2.0, 2.4};
  } else {
    throw ConfigParseError("unknown preset '" + preset + "'");
  }
  s.base = n;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) seeds.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return seeds;
}

int threads_from_env(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("CMLL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"cache-enabled multigroup multicast latency simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string scheme_name = "fcbt";
  std::uint64_t seed = 1;
  std::string out_path;
  std::string out_dir = ".";
  std::string param_name;
  std::string grid_text;
  std::string preset;
  std::string schemes_text;
  std::string seeds_text = "1";
  int trials = 0;
  int threads_flag = 0;

  auto* solve = app.add_subcommand("solve", "solve one instance with one scheme");
  solve->add_option("--config", config_path, "config file")->required();
  solve->add_option("--scheme", scheme_name, "fcbt|pcbt|pcpt|tswc|jceo");
  solve->add_option("--seed", seed, "instance seed");
  solve->add_option("--out", out_path, "trace CSV path");

  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo parameter sweep");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--param", param_name, "xi|C|S");
  sweep->add_option("--grid", grid_text, "comma-separated grid values");
  sweep->add_option("--trials", trials, "trial count");
  sweep->add_option("--out-dir", out_dir, "output directory");
  sweep->add_option("--preset", preset, "fig4|fig5|fig6");
  sweep->add_option("--schemes", schemes_text, "comma-separated scheme list");
  sweep->add_option("--threads", threads_flag, "worker threads (CMLL_THREADS)");

  auto* conv = app.add_subcommand("convergence", "per-iteration trace export");
  conv->add_option("--config", config_path, "config file")->required();
  conv->add_option("--scheme", scheme_name, "fcbt|pcbt|pcpt|tswc|jceo");
  conv->add_option("--seeds", seeds_text, "comma-separated seeds");
  conv->add_option("--out", out_path, "convergence CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = load_config(config_path);

    if (solve->parsed()) {
      const auto tag = scheme_from_name(scheme_name);
      const auto inst = model::generate_instance(cfg.network, seed);
      auto settings = cfg.algorithm;
      settings.seed = seed;
      const auto sol = dispatch(tag, inst, settings);
      std::cout << "scheme=" << model::to_string(tag) << " seed=" << seed
                << " latency_s=" << sol.latency << " tau_s=" << sol.tau
                << " status=" << model::to_string(sol.status) << "\n";
      if (!out_path.empty())
        write_file(out_path, experiments::trace_csv(sol, tag, seed));
      return sol.status == model::SolveStatus::Converged ? 0 : 2;
    }

    if (sweep->parsed()) {
      if (!preset.empty()) apply_preset(cfg, preset);
      auto spec = cfg.sweep;
      if (!param_name.empty())
        spec.param = experiments::sweep_param_from_string(param_name);
      if (!grid_text.empty()) {
        spec.grid.clear();
        for (std::uint64_t v : std::vector<std::uint64_t>{}) (void)v;
        std::string cur;
        for (char ch : grid_text + ",") {
          if (ch == ',') {
            if (!cur.empty()) spec.grid.push_back(std::stod(cur));
            cur.clear();
          } else {
            cur += ch;
          }
        }
      }
      if (trials > 0) spec.trials = trials;
      if (!schemes_text.empty()) {
        spec.scheme_list.clear();
        std::string cur;
        for (char ch : schemes_text + ",") {
          if (ch == ',') {
            if (!cur.empty()) spec.scheme_list.push_back(scheme_from_name(cur));
            cur.clear();
          } else {
            cur += ch;
          }
        }
      }
      spec.threads = threads_from_env(threads_flag);
      const auto result = experiments::run_sweep(spec);

      std::filesystem::create_directories(out_dir);
      const std::string csv_path =
          (std::filesystem::path(out_dir) / "sweep.csv").string();
      write_file(csv_path, experiments::sweep_csv(result));

      // summary table on stdout
      std::cout << "param=" << experiments::to_string(result.param)
                << " trials=" << result.trials << "\n";
      int total = 0, failed = 0;
      for (std::size_t gi = 0; gi < result.grid.size(); ++gi) {
        for (std::size_t si = 0; si < result.scheme_list.size(); ++si) {
          const auto stats =
              result.cell(static_cast<int>(gi), static_cast<int>(si));
          total += result.trials;
          failed += stats.failures;
          std::cout << experiments::to_string(result.param) << "="
                    << result.grid[gi] << " "
                    << model::to_string(result.scheme_list[si])
                    << " mean_latency_s=" << stats.mean
                    << " std_error=" << stats.std_error << " n=" << stats.n
                    << " failures=" << stats.failures << "\n";
        }
      }
      std::cout << "csv=" << csv_path << "\n";
      return failed < total ? 0 : 1;
    }

    if (conv->parsed()) {
      const auto tag = scheme_from_name(scheme_name);
      const auto seeds = parse_seed_list(seeds_text);
      if (seeds.empty()) throw ConfigParseError("no seeds given");
      const auto result =
          experiments::run_convergence(cfg.network, cfg.algorithm, tag, seeds);
      const std::string csv = experiments::convergence_csv(result);
      if (!out_path.empty())
        write_file(out_path, csv);
      else
        std::cout << csv;
      if (!out_path.empty())
        std::cout << "rows=" << result.rows.size() << " out=" << out_path << "\n";
      return result.rows.empty() ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace cmll::cli
