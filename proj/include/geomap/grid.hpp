#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "geomap/types.hpp"

namespace geomap {

/// Axis-aligned box split into a regular lattice of cells. Cell values are
/// treated as samples at the cell centers.
class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(Vec lower, Vec upper, std::vector<int> cells);

  /// Bounding box of `points` grown by `expand` times its extent (split evenly
  /// between the two sides), cut into `cells_per_axis` cells on every axis.
  static GridSpec covering(std::span<const ChartPoint> points, int cells_per_axis, double expand = 0.05);

  Eigen::Index dim() const { return lower_.size(); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  const std::vector<int>& cells() const { return cells_; }
  std::size_t size() const { return size_; }

  double spacing(Eigen::Index axis) const { return (upper_[axis] - lower_[axis]) / cells_[static_cast<std::size_t>(axis)]; }
  Vec spacing() const;

  /// Flat index of the cell holding p, or nullopt if p is outside the box.
  std::optional<std::size_t> cell_of(const Vec& p) const;
  std::size_t flat(std::span<const int> index) const;
  std::vector<int> unflatten(std::size_t flat) const;
  Vec center(std::size_t flat) const;

  bool operator==(const GridSpec& other) const;

 private:
  Vec lower_;
  Vec upper_;
  std::vector<int> cells_;
  std::size_t size_ = 0;
};

}  // namespace geomap
