#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "geomap/kdtree.hpp"
#include "geomap/measurement.hpp"
#include "geomap/statistics.hpp"
#include "geomap/types.hpp"

namespace geomap::embedding {

struct EmbeddingParams {
  int k = 12;
  int d = 0;  // 0: estimate from the data
  double reg = 1e-3;
  std::size_t max_training = 5000;
};

/// Training points, one per column, picked with a fixed stride over the
/// concatenated series so at most `max_training` remain.
Mat select_training(const MeasurementSeries& series, std::size_t max_training);

/// Modal count of local principal values (standard deviations of the k-point
/// neighbourhoods) at or above 10% of the largest.
int estimate_dimension(const Mat& points, int k);
int estimate_dimension(const MeasurementSeries& series, int k, std::size_t max_training = 5000);

/// Locally linear embedding of fixed training data with out-of-sample
/// extension by reconstruction weights.
class EmbeddingModel {
 public:
  EmbeddingModel(Mat training, Mat embedded, int k, double reg, std::vector<double> eigenvalues);

  const Mat& training() const { return tree_.points(); }
  /// d x n, one column per training point.
  const Mat& embedded() const { return embedded_; }
  int k() const { return k_; }
  int dim() const { return static_cast<int>(embedded_.rows()); }
  Eigen::Index width() const { return training().rows(); }
  double reg() const { return reg_; }
  double support_radius() const { return support_radius_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }

  /// Throws OutOfSupportError when the nearest training point is more than
  /// 3 median k-th-neighbour distances away.
  ChartPoint embed(const MeasurementVector& v) const;
  std::optional<ChartPoint> try_embed(const MeasurementVector& v) const;

 private:
  KdTree tree_;
  Mat embedded_;
  int k_;
  double reg_;
  double support_radius_ = 0.0;
  std::vector<double> eigenvalues_;
};

/// Reconstruction weights of x over the given neighbour columns, summing to
/// one. The Gram matrix is regularized by reg * trace.
Vec reconstruction_weights(const Mat& neighbors, const Vec& x, double reg);

/// (I - W)^T (I - W) for the k-neighbour reconstruction weights W. Throws
/// EmbeddingError when the neighbour graph is disconnected.
Eigen::SparseMatrix<double> lle_matrix(const Mat& points, int k, double reg);

EmbeddingModel fit(const Mat& points, int k, int d, double reg);
EmbeddingModel fit(const MeasurementSeries& series, int k, int d, double reg, std::size_t max_training = 5000);

/// Pointwise embedding. Points outside the support cut their segment; pieces
/// of two or more points keep the segment id.
std::vector<statistics::TrajectorySegment> embed_series(const EmbeddingModel& model, const MeasurementSeries& series,
                                                        TruncationReport* report = nullptr);

/// Fraction of each point's k nearest neighbours in `a` that are also among
/// its k nearest neighbours in `b` (columns correspond).
double neighbor_preservation(const Mat& a, const Mat& b, int k);

}  // namespace geomap::embedding
