#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geomap/geometry.hpp"
#include "geomap/grid.hpp"
#include "geomap/types.hpp"

namespace geomap::statistics {

/// Uniformly sampled chart path. t0 is the time of points[0].
struct TrajectorySegment {
  double dt = 0.0;
  double t0 = 0.0;
  std::vector<ChartPoint> points;
  long segment_id = 0;
};

struct VelocitySample {
  ChartPoint at;
  Vec velocity;
};

/// Central differences at interior points. A two-point segment yields one
/// forward difference placed at the segment midpoint.
std::vector<VelocitySample> estimate_velocities(const TrajectorySegment& seg);

struct StatisticsParams {
  int cells = 24;
  double expand = 0.05;
  std::size_t support_threshold = 20;
  double shrinkage = 0.05;
  double bandwidth = 1.5;  // cell units
  int smoothing_order = 0;
  double condition_cap = 1e8;
};

/// Per-cell second moments <v v^T>.
struct CovarianceField {
  GridSpec grid;
  std::vector<std::size_t> counts;
  std::vector<Mat> cov;
  std::vector<bool> supported;
  std::vector<bool> filled;  // supported only through smoothing
  std::size_t support_threshold = 0;

  std::size_t supported_count() const;
  std::size_t visited_count() const;
};

/// Running sums in a fixed grid. Samples outside the grid are counted and
/// otherwise ignored.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(GridSpec grid);

  bool add(const VelocitySample& sample);
  void add(std::span<const VelocitySample> samples);

  const GridSpec& grid() const { return grid_; }
  std::size_t outside() const { return outside_; }
  std::size_t total() const { return total_; }

  CovarianceField finish(std::size_t support_threshold) const;

 private:
  GridSpec grid_;
  std::vector<std::size_t> counts_;
  std::vector<Mat> sums_;
  std::size_t outside_ = 0;
  std::size_t total_ = 0;
};

CovarianceField accumulate(std::span<const VelocitySample> samples, const GridSpec& grid,
                           std::size_t support_threshold = 20);

/// Grid covering the sample locations with the configured expansion.
GridSpec covering_grid(std::span<const VelocitySample> samples, const StatisticsParams& params);

/// Count-weighted Gaussian smoothing over supported cells, kernel width in
/// cell units. Order 0 is the kernel-weighted mean; order 1 fits a local
/// linear trend and keeps its value at the cell, which removes the one-sided
/// bias at the edge of the supported region. Unsupported cells with a
/// supported cell within 2 bandwidths are filled with the weighted mean.
CovarianceField smooth(const CovarianceField& field, double bandwidth, int order = 0);

/// Shrinks every supported cell toward the count-weighted mean covariance and
/// inverts it. Unsupported cells become invalid metric nodes.
geometry::MetricField to_metric(const CovarianceField& field, double shrinkage, double condition_cap = 1e8);

}  // namespace geomap::statistics
