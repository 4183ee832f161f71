#include "cmll/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cmll::cli {

using nlohmann::json;

RunConfig::RunConfig() {
  auto& n = network;
  n.P.assign(n.K_R, std::pow(10.0, 20.0 / 10.0));  // 20 dB over unit noise
  n.C.assign(n.K_R, 2.0);
  n.sigma2.assign(n.K_U, 1.0);
  sweep.base = network;
  sweep.settings = algorithm;
  sweep.grid = {0.0, 0.25, 0.5, 0.75, 1.0};
}

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigParseError("unknown key '" + key + "' in " + where);
  }
}

double get_num(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number())
    throw ConfigParseError(std::string("key '") + key + "' must be a number");
  return obj[key].get<double>();
}

int get_int(const json& obj, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer())
    throw ConfigParseError(std::string("key '") + key + "' must be an integer");
  return obj[key].get<int>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean())
    throw ConfigParseError(std::string("key '") + key + "' must be a boolean");
  return obj[key].get<bool>();
}

std::vector<double> get_per_entry(const json& obj, const char* key, int count,
                                  const std::vector<double>& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj[key];
  if (v.is_number()) return std::vector<double>(count, v.get<double>());
  if (v.is_array()) {
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number())
        throw ConfigParseError(std::string("entries of '") + key +
                               "' must be numbers");
      out.push_back(e.get<double>());
    }
    if (static_cast<int>(out.size()) != count)
      throw ConfigParseError(std::string("'") + key + "' must have " +
                             std::to_string(count) + " entries");
    return out;
  }
  throw ConfigParseError(std::string("key '") + key +
                         "' must be a number or an array");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigParseError("config syntax error at line " +
                           std::to_string(line_of_offset(text, e.byte)) + ": " +
                           e.what());
  }
  if (!doc.is_object()) throw ConfigParseError("config root must be an object");
  check_keys(doc, "config root",
             {"schema_version", "network", "algorithm", "solver", "sweep"});
  if (doc.contains("schema_version") && doc["schema_version"].get<int>() != 1)
    throw ConfigParseError("unsupported schema_version (expected 1)");

  RunConfig cfg;

  if (doc.contains("network")) {
    const auto& n = doc["network"];
    check_keys(n, "network",
               {"K_R", "K_U", "N_t", "G", "F", "S", "P_dB", "P_linear", "C",
                "sigma2", "tau0", "xi", "d0", "alpha", "cell_radius",
                "strict_group_count", "balanced_groups", "zipf_exponent",
                "rate_floor", "psd_floor"});
    auto& net = cfg.network;
    net.K_R = get_int(n, "K_R", net.K_R);
    net.K_U = get_int(n, "K_U", net.K_U);
    net.N_t = get_int(n, "N_t", net.N_t);
    net.G = get_int(n, "G", net.G);
    net.F = get_int(n, "F", net.F);
    net.S = get_num(n, "S", net.S);
    net.tau0 = get_num(n, "tau0", net.tau0);
    net.xi = get_num(n, "xi", net.xi);
    net.d0 = get_num(n, "d0", net.d0);
    net.alpha = get_num(n, "alpha", net.alpha);
    net.cell_radius = get_num(n, "cell_radius", net.cell_radius);
    net.strict_group_count =
        get_bool(n, "strict_group_count", net.strict_group_count);
    net.balanced_groups = get_bool(n, "balanced_groups", net.balanced_groups);
    net.zipf_exponent = get_num(n, "zipf_exponent", net.zipf_exponent);
    net.rate_floor = get_num(n, "rate_floor", net.rate_floor);
    net.psd_floor = get_num(n, "psd_floor", net.psd_floor);
    if (n.contains("P_dB") && n.contains("P_linear"))
      throw ConfigParseError("give either 'P_dB' or 'P_linear', not both");
    if (n.contains("P_dB")) {
      const double lin = std::pow(10.0, get_num(n, "P_dB", 20.0) / 10.0);
      net.P.assign(net.K_R, lin);
    } else {
      net.P = get_per_entry(n, "P_linear", net.K_R,
                            std::vector<double>(net.K_R, std::pow(10.0, 2.0)));
    }
    net.C = get_per_entry(n, "C", net.K_R, std::vector<double>(net.K_R, 2.0));
    net.sigma2 =
        get_per_entry(n, "sigma2", net.K_U, std::vector<double>(net.K_U, 1.0));
  } else {
    // re-derive default vectors in case of default counts
    cfg.network.P.assign(cfg.network.K_R, std::pow(10.0, 2.0));
    cfg.network.C.assign(cfg.network.K_R, 2.0);
    cfg.network.sigma2.assign(cfg.network.K_U, 1.0);
  }

  if (doc.contains("algorithm")) {
    const auto& a = doc["algorithm"];
    check_keys(a, "algorithm",
               {"epsilon", "varsigma0", "epsilon0", "lambda0", "rho0", "omega",
                "nu", "delta", "max_inner", "max_outer",
                "randomization_candidates", "rank_one_tol",
                "warm_start_log_ratio"});
    auto& alg = cfg.algorithm;
    alg.epsilon = get_num(a, "epsilon", alg.epsilon);
    alg.varsigma0 = get_num(a, "varsigma0", alg.varsigma0);
    alg.epsilon0 = get_num(a, "epsilon0", alg.epsilon0);
    alg.lambda0 = get_num(a, "lambda0", alg.lambda0);
    alg.rho0 = get_num(a, "rho0", alg.rho0);
    alg.omega = get_num(a, "omega", alg.omega);
    alg.nu = get_num(a, "nu", alg.nu);
    alg.delta = get_num(a, "delta", alg.delta);
    alg.max_inner = get_int(a, "max_inner", alg.max_inner);
    alg.max_outer = get_int(a, "max_outer", alg.max_outer);
    alg.randomization_candidates =
        get_int(a, "randomization_candidates", alg.randomization_candidates);
    alg.rank_one_tol = get_num(a, "rank_one_tol", alg.rank_one_tol);
    alg.warm_start_log_ratio =
        get_bool(a, "warm_start_log_ratio", alg.warm_start_log_ratio);
    if (!(alg.omega > 0 && alg.omega < 1))
      throw ConfigParseError("'omega' must lie in (0,1)");
    if (!(alg.nu > 0 && alg.nu < 1))
      throw ConfigParseError("'nu' must lie in (0,1)");
    if (!(alg.delta > 0 && alg.delta <= 1))
      throw ConfigParseError("'delta' must lie in (0,1]");
  }

  if (doc.contains("solver")) {
    const auto& s = doc["solver"];
    check_keys(s, "solver",
               {"t0", "mu_growth", "newton_tol", "gap_tol", "kkt_tol",
                "max_newton_per_center", "max_centerings", "armijo_alpha",
                "armijo_beta"});
    auto& sv = cfg.algorithm.solver;
    sv.t0 = get_num(s, "t0", sv.t0);
    sv.mu_growth = get_num(s, "mu_growth", sv.mu_growth);
    sv.newton_tol = get_num(s, "newton_tol", sv.newton_tol);
    sv.gap_tol = get_num(s, "gap_tol", sv.gap_tol);
    sv.kkt_tol = get_num(s, "kkt_tol", sv.kkt_tol);
    sv.max_newton_per_center =
        get_int(s, "max_newton_per_center", sv.max_newton_per_center);
    sv.max_centerings = get_int(s, "max_centerings", sv.max_centerings);
    sv.armijo_alpha = get_num(s, "armijo_alpha", sv.armijo_alpha);
    sv.armijo_beta = get_num(s, "armijo_beta", sv.armijo_beta);
    if (!(sv.t0 > 0)) throw ConfigParseError("'t0' must be positive");
    if (!(sv.mu_growth > 1)) throw ConfigParseError("'mu_growth' must exceed 1");
    if (!(sv.armijo_alpha > 0 && sv.armijo_alpha < 0.5))
      throw ConfigParseError("'armijo_alpha' must lie in (0,0.5)");
    if (!(sv.armijo_beta > 0 && sv.armijo_beta < 1))
      throw ConfigParseError("'armijo_beta' must lie in (0,1)");
  }

  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    check_keys(s, "sweep",
               {"param", "grid", "trials", "base_seed", "schemes", "threads"});
    auto& sw = cfg.sweep;
    if (s.contains("param"))
      sw.param =
          experiments::sweep_param_from_string(s["param"].get<std::string>());
    if (s.contains("grid")) {
      if (!s["grid"].is_array())
        throw ConfigParseError("'grid' must be an array");
      sw.grid.clear();
      for (const auto& e : s["grid"]) sw.grid.push_back(e.get<double>());
    }
    sw.trials = get_int(s, "trials", sw.trials);
    if (s.contains("base_seed"))
      sw.base_seed = s["base_seed"].get<std::uint64_t>();
    sw.threads = get_int(s, "threads", sw.threads);
    if (s.contains("schemes")) {
      if (!s["schemes"].is_array())
        throw ConfigParseError("'schemes' must be an array");
      sw.scheme_list.clear();
      for (const auto& e : s["schemes"]) {
        const std::string name = e.get<std::string>();
        if (name == "fcbt") sw.scheme_list.push_back(model::SchemeTag::FCBT);
        else if (name == "pcbt") sw.scheme_list.push_back(model::SchemeTag::PCBT);
        else if (name == "pcpt") sw.scheme_list.push_back(model::SchemeTag::PCPT);
        else if (name == "tswc") sw.scheme_list.push_back(model::SchemeTag::TSWC);
        else if (name == "jceo") sw.scheme_list.push_back(model::SchemeTag::JCEO);
        else throw ConfigParseError("unknown scheme '" + name + "'");
      }
    }
  }

  cfg.sweep.base = cfg.network;
  cfg.sweep.settings = cfg.algorithm;
  cfg.network.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigParseError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace cmll::cli
