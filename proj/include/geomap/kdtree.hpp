#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "geomap/types.hpp"

namespace geomap {

/// Exact k-nearest-neighbour search over the columns of a matrix.
class KdTree {
 public:
  struct Neighbor {
    double distance;
    int index;
  };

  KdTree() = default;
  explicit KdTree(const Mat& points, int leaf_size = 16);

  int size() const { return static_cast<int>(points_.cols()); }
  const Mat& points() const { return points_; }

  /// Up to k neighbours by increasing distance; ties broken by index. The
  /// column `exclude` (if >= 0) is skipped.
  std::vector<Neighbor> knn(const Vec& query, int k, int exclude = -1) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end);
  void search(int node, const Vec& query, int k, int exclude, std::vector<std::pair<double, int>>& heap) const;

  Mat points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_ = 16;
};

}  // namespace geomap
