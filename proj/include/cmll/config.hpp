#pragma once

#include <string>

#include "cmll/experiments.hpp"

namespace cmll::cli {

struct ConfigParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File-backed run configuration: network + algorithm + solver + sweep
/// sections, all keys optional with Table-II-style defaults, unknown keys
/// rejected. `schema_version` must be 1 when present.
struct RunConfig {
  model::NetworkConfig network;
  schemes::OuterLoopSettings algorithm;
  experiments::SweepSpec sweep;  // base/settings filled from the above

  RunConfig();
};

/// Parse and validate a config document (JSON-compatible subset). Errors
/// carry the offending key or the line of a syntax error.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace cmll::cli
