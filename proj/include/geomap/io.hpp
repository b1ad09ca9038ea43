#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "geomap/harness.hpp"

namespace geomap::io {

/// Shortest text that reads back to the same double.
std::string format_double(double x);
/// Throws ConfigError unless the whole field is a number.
double parse_double(std::string_view s);

/// Writes to a sibling temporary file, then renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// segment_id,t,m_1..m_m with one row per measurement.
std::string series_csv(const MeasurementSeries& series);
/// Rows with the same id and consecutive times form one segment; dt comes
/// from the world configuration.
MeasurementSeries parse_series_csv(const std::string& text, double dt);

/// test_id,s1,s2,converged,residual. Failed tests leave s1 and s2 empty.
std::string map_csv(const harness::Map& map);
harness::Map parse_map_csv(const std::string& text);

/// test_id,s1_a,s2_a,s1_b,s2_b,ds1,ds2 followed by "# key,value" summary
/// lines.
std::string report_csv(const harness::AgreementReport& report, const std::string& name_a, const std::string& name_b,
                       std::size_t segments_a, std::size_t segments_b);

/// Fitted model, covariance and metric fields, and diagnostics as JSON.
std::string artifacts_json(const harness::MachineArtifacts& art);
harness::MachineArtifacts parse_artifacts_json(const std::string& text);

std::string trajectory_file(const std::string& machine);
std::string model_file(const std::string& machine);
std::string map_file(const std::string& machine);
inline constexpr const char* report_file = "report.csv";
inline constexpr const char* config_file = "config.json";

/// Every experiment output, each written atomically.
void write_experiment(const std::filesystem::path& dir, const harness::ExperimentConfig& cfg,
                      const harness::ExperimentResult& result);

}  // namespace geomap::io
