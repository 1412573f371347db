#pragma once

#include <json.hpp>

#include "kpnw/config.hpp"

namespace kpnw {

using Json = nlohmann::ordered_json;

// Version string baked in at configure time (project version and git describe).
const char* version_string();

// Effective configuration. Execution settings that cannot change a number
// (out, workers) are left out so records compare across output directories.
Json config_json(const RunConfig& c);

Json params_json(const RunConfig& c);
Json grid_json(const RGrid& g);
Json constants_json(const GNConstants& gn);
Json provenance_json(const RunConfig& c, const std::optional<GNConstants>& gn);

// Every SolveResult field except the field itself.
Json result_json(const SolveResult& r, bool with_trace);
Json probe_json(const ProbeReport& r, bool with_trace);
Json threshold_json(const ThresholdReport& r);

}  // namespace kpnw
