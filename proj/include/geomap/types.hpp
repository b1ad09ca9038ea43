#pragma once

#include <initializer_list>
#include <utility>

#include <Eigen/Core>

namespace geomap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Location of a stimulus in one machine's chart.
struct ChartPoint {
  Vec coords;

  ChartPoint() = default;
  explicit ChartPoint(Vec c) : coords(std::move(c)) {}
  ChartPoint(std::initializer_list<double> values) : coords(static_cast<Eigen::Index>(values.size())) {
    Eigen::Index i = 0;
    for (double v : values) coords[i++] = v;
  }

  Eigen::Index dim() const { return coords.size(); }
  bool finite() const { return coords.allFinite(); }
};

/// Vector attached to a chart point; components in chart units per count.
struct TangentVector {
  ChartPoint base;
  Vec components;
};

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace geomap
