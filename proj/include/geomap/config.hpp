#pragma once

#include <filesystem>
#include <string>

#include "geomap/harness.hpp"

namespace geomap::config {

/// Parses JSON with // and /* */ comments. Keys left out keep their defaults;
/// unknown keys, wrong types and out-of-range values raise ConfigError.
harness::ExperimentConfig parse(const std::string& text);

/// A readable file path, or one of the built-in names "default" and
/// "flat_plane".
harness::ExperimentConfig load(const std::string& path_or_name);

/// Canonical JSON with every field spelled out.
std::string dump(const harness::ExperimentConfig& cfg);

/// Flat plane seen through a near-identity suite and a warped suite.
harness::ExperimentConfig flat_plane_config();

}  // namespace geomap::config
