#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geomap/grid.hpp"
#include "geomap/types.hpp"

namespace geomap::geometry {

/// Symmetric positive-definite d x d tensor g_kl.
class MetricTensor {
 public:
  /// Throws PreconditionError unless g is symmetric (relative 1e-12) and
  /// positive definite.
  explicit MetricTensor(Mat g);

  const Mat& matrix() const { return g_; }
  Eigen::Index dim() const { return g_.rows(); }
  Mat inverse() const;
  double squared_length(const Vec& v) const { return v.dot(g_ * v); }

 private:
  Mat g_;
};

/// Metric tensors stored at the cell centers of a grid, multilinearly
/// interpolated. A node may be invalid (no data); interpolation needs every
/// surrounding node to be valid.
class MetricField {
 public:
  MetricField(GridSpec grid, std::vector<Mat> tensors, std::vector<bool> valid);

  /// Samples an analytic metric at every node.
  static MetricField sample(const GridSpec& grid, const std::function<Mat(const Vec&)>& metric);

  const GridSpec& grid() const { return grid_; }
  Eigen::Index dim() const { return grid_.dim(); }
  const std::vector<Mat>& tensors() const { return tensors_; }
  const std::vector<bool>& valid() const { return valid_; }
  std::size_t valid_count() const;

  bool contains(const Vec& p) const;
  /// Interpolated, symmetrized tensor. Throws DomainError outside the valid
  /// territory.
  Mat metric_at(const Vec& p) const;

  MetricField scaled(double factor) const;

 private:
  struct Stencil {
    std::vector<int> base;
    Vec frac;
  };
  std::optional<Stencil> stencil(const Vec& p) const;

  GridSpec grid_;
  std::vector<Mat> tensors_;
  std::vector<bool> valid_;
};

/// Connection coefficients at one point, indexed (k, l, m) for the symbol
/// with upper index k and lower pair (l, m).
class ChristoffelSymbols {
 public:
  explicit ChristoffelSymbols(Eigen::Index d) : d_(d), data_(static_cast<std::size_t>(d * d * d), 0.0) {}

  Eigen::Index dim() const { return d_; }
  double& operator()(Eigen::Index k, Eigen::Index l, Eigen::Index m) { return data_[index(k, l, m)]; }
  double operator()(Eigen::Index k, Eigen::Index l, Eigen::Index m) const { return data_[index(k, l, m)]; }

  /// out^k = sum_lm gamma^k_lm a^l b^m
  Vec contract(const Vec& a, const Vec& b) const;
  double max_abs() const;

 private:
  std::size_t index(Eigen::Index k, Eigen::Index l, Eigen::Index m) const {
    return static_cast<std::size_t>((k * d_ + l) * d_ + m);
  }
  Eigen::Index d_;
  std::vector<double> data_;
};

/// Torsion-free metric connection from central differences of the
/// interpolated metric, step h[n] along axis n.
ChristoffelSymbols christoffel_at(const MetricField& field, const ChartPoint& p, const Vec& h);
ChristoffelSymbols christoffel_at(const MetricField& field, const ChartPoint& p, double h);

/// Anything that can supply connection coefficients along a path.
class Connection {
 public:
  virtual ~Connection() = default;
  virtual Eigen::Index dim() const = 0;
  /// Throws DomainError where the connection is unknown.
  virtual ChristoffelSymbols christoffel(const Vec& p) const = 0;
  virtual Mat metric(const Vec& p) const = 0;
  /// Largest allowed transport substep along each axis.
  virtual Vec max_substep() const = 0;
};

struct GeometryParams {
  double fd_fraction = 0.5;        // finite-difference step / grid spacing
  double substep_fraction = 0.25;  // max transport substep / grid spacing
  double tolerance = 1e-6;         // shooting residual, chart units
  int max_iterations = 100;
  double jacobian_step = 1e-4;
};

class FieldConnection final : public Connection {
 public:
  explicit FieldConnection(const MetricField& field, const GeometryParams& params = {});

  Eigen::Index dim() const override { return field_->dim(); }
  ChristoffelSymbols christoffel(const Vec& p) const override;
  Mat metric(const Vec& p) const override { return field_->metric_at(p); }
  Vec max_substep() const override { return h_max_; }

  const MetricField& field() const { return *field_; }

 private:
  const MetricField* field_;
  Vec h_;
  Vec h_max_;
};

/// One explicit application of the parallel-transfer rule:
/// V'^k = V^k - sum_lm gamma^k_lm V^l delta^m, based at V.base + delta.
TangentVector transport_step(const TangentVector& v, const Vec& delta, const ChristoffelSymbols& gamma);

struct SelfTransportResult {
  ChartPoint end;
  TangentVector carried;
  std::vector<ChartPoint> path;
};

/// Moves `count` times along the increment while carrying the increment with
/// it. Whole steps first, then a fractional step of the remaining part.
SelfTransportResult self_transport(const ChartPoint& start, const Vec& increment, double count,
                                   const Connection& connection);
SelfTransportResult self_transport(const ChartPoint& start, const Vec& increment, double count,
                                   const MetricField& field);

/// Carries v along a polyline; v must be based at path.front().
TangentVector co_transport(const TangentVector& v, std::span<const ChartPoint> path, const Connection& connection);
TangentVector co_transport(const TangentVector& v, std::span<const ChartPoint> path, const MetricField& field);

struct AnchorFrame {
  ChartPoint a;
  ChartPoint b;
  ChartPoint c;
};

/// Throws InvalidFrameError for coincident anchors or parallel increments.
void validate_frame(const AnchorFrame& frame);

/// Counts of self-transports: s1 along A->C, then s2 along the carried A->B.
struct RelativeLocation {
  double s1 = 0.0;
  double s2 = 0.0;
};

struct LocateReport {
  RelativeLocation location;
  double residual = 0.0;
  int iterations = 0;
};

/// Point reached from A by s1 self-transports of C - A followed by s2
/// self-transports of the co-transported B - A. Negative counts run the
/// increment backwards.
ChartPoint shoot(const AnchorFrame& frame, const RelativeLocation& s, const Connection& connection);

LocateReport locate_report(const ChartPoint& target, const AnchorFrame& frame, const Connection& connection,
                           const GeometryParams& params = {});
RelativeLocation locate(const ChartPoint& target, const AnchorFrame& frame, const Connection& connection,
                        const GeometryParams& params = {});
RelativeLocation locate(const ChartPoint& target, const AnchorFrame& frame, const MetricField& field,
                        const GeometryParams& params = {});

struct LocateOutcome {
  std::optional<RelativeLocation> location;
  double residual = 0.0;
  int iterations = 0;
  std::string error;

  bool converged() const { return location.has_value(); }
};

/// Locates every test point; failures are recorded, never thrown. Output
/// order matches input order.
std::vector<LocateOutcome> map_grid(std::span<const ChartPoint> tests, const AnchorFrame& frame,
                                    const Connection& connection, const GeometryParams& params = {});
std::vector<LocateOutcome> map_grid(std::span<const ChartPoint> tests, const AnchorFrame& frame,
                                    const MetricField& field, const GeometryParams& params = {});

}  // namespace geomap::geometry
