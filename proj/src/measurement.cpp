#include "geomap/measurement.hpp"

namespace geomap {

Eigen::Index MeasurementSeries::width() const {
  for (const auto& s : segments)
    if (!s.values.empty()) return s.values.front().size();
  return 0;
}

std::size_t MeasurementSeries::point_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.values.size();
  return n;
}

}  // namespace geomap
