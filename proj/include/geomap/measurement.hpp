#pragma once

#include <cstddef>
#include <vector>

#include "geomap/types.hpp"

namespace geomap {

using MeasurementVector = Vec;

struct MeasurementSegment {
  long id = 0;
  double t0 = 0.0;
  std::vector<MeasurementVector> values;
};

struct MeasurementSeries {
  double dt = 0.0;
  std::vector<MeasurementSegment> segments;

  Eigen::Index width() const;
  std::size_t point_count() const;
};

/// Bookkeeping for per-point failures that cut segments apart.
struct TruncationReport {
  std::size_t input_segments = 0;
  std::size_t output_segments = 0;
  std::size_t failed_points = 0;
  std::size_t split_segments = 0;
  std::size_t dropped_segments = 0;
  std::size_t short_pieces = 0;  // runs shorter than two points, discarded
};

/// Splits one segment at the points flagged false. Runs of at least two
/// points are emitted through `emit(first_index, last_index)`.
template <class Emit>
void split_runs(const std::vector<bool>& ok, TruncationReport& report, Emit&& emit) {
  ++report.input_segments;
  std::size_t pieces = 0;
  bool failed = false;
  std::size_t i = 0;
  while (i < ok.size()) {
    if (!ok[i]) {
      ++report.failed_points;
      failed = true;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < ok.size() && ok[j + 1]) ++j;
    if (j > i) {
      emit(i, j);
      ++pieces;
    } else {
      ++report.short_pieces;
    }
    i = j + 1;
  }
  report.output_segments += pieces;
  if (pieces == 0) ++report.dropped_segments;
  if (failed && pieces > 0) ++report.split_segments;
}

}  // namespace geomap
