#include "geomap/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "geomap/errors.hpp"

namespace geomap::statistics {

std::vector<VelocitySample> estimate_velocities(const TrajectorySegment& seg) {
  if (!(seg.dt > 0.0) || !std::isfinite(seg.dt)) throw InvalidSegmentError("segment: dt must be positive");
  const std::size_t n = seg.points.size();
  if (n < 2) throw InvalidSegmentError("segment: need at least two points");
  for (const auto& p : seg.points)
    if (!p.finite() || p.dim() != seg.points.front().dim()) throw InvalidSegmentError("segment: bad point");

  std::vector<VelocitySample> out;
  if (n == 2) {
    out.push_back({ChartPoint(0.5 * (seg.points[0].coords + seg.points[1].coords)),
                   (seg.points[1].coords - seg.points[0].coords) / seg.dt});
    return out;
  }
  out.reserve(n - 2);
  const double inv = 1.0 / (2.0 * seg.dt);
  for (std::size_t i = 1; i + 1 < n; ++i)
    out.push_back({seg.points[i], (seg.points[i + 1].coords - seg.points[i - 1].coords) * inv});
  return out;
}

std::size_t CovarianceField::supported_count() const {
  return static_cast<std::size_t>(std::count(supported.begin(), supported.end(), true));
}

std::size_t CovarianceField::visited_count() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
}

CovarianceAccumulator::CovarianceAccumulator(GridSpec grid)
    : grid_(std::move(grid)), counts_(grid_.size(), 0), sums_(grid_.size(), Mat::Zero(grid_.dim(), grid_.dim())) {}

bool CovarianceAccumulator::add(const VelocitySample& sample) {
  ++total_;
  if (sample.at.dim() != grid_.dim() || sample.velocity.size() != grid_.dim())
    throw PreconditionError("accumulate: dimension mismatch");
  const auto cell = grid_.cell_of(sample.at.coords);
  if (!cell) {
    ++outside_;
    return false;
  }
  sums_[*cell].noalias() += sample.velocity * sample.velocity.transpose();
  ++counts_[*cell];
  return true;
}

void CovarianceAccumulator::add(std::span<const VelocitySample> samples) {
  for (const auto& s : samples) add(s);
}

CovarianceField CovarianceAccumulator::finish(std::size_t support_threshold) const {
  CovarianceField f;
  f.grid = grid_;
  f.counts = counts_;
  f.support_threshold = support_threshold;
  f.cov.resize(grid_.size());
  f.supported.resize(grid_.size());
  f.filled.assign(grid_.size(), false);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    f.cov[i] = counts_[i] > 0 ? Mat(sums_[i] / static_cast<double>(counts_[i])) : Mat::Zero(grid_.dim(), grid_.dim());
    f.supported[i] = counts_[i] >= support_threshold && counts_[i] > 0;
  }
  return f;
}

CovarianceField accumulate(std::span<const VelocitySample> samples, const GridSpec& grid,
                           std::size_t support_threshold) {
  CovarianceAccumulator acc(grid);
  acc.add(samples);
  return acc.finish(support_threshold);
}

GridSpec covering_grid(std::span<const VelocitySample> samples, const StatisticsParams& params) {
  std::vector<ChartPoint> at;
  at.reserve(samples.size());
  for (const auto& s : samples) at.push_back(s.at);
  return GridSpec::covering(at, params.cells, params.expand);
}

namespace {

struct Neighbor {
  Vec offset;  // cell units
  double w;
  const Mat* cov;
};

// Weighted least-squares fit of c(offset) = c0 + sum_a offset_a B_a; returns
// c0, or nothing when the fit is ill-posed or c0 is not positive definite.
std::optional<Mat> local_linear(const std::vector<Neighbor>& near, Eigen::Index d) {
  const Eigen::Index p = d + 1;
  if (static_cast<Eigen::Index>(near.size()) < 2 * p) return std::nullopt;
  Mat xtx = Mat::Zero(p, p);
  for (const auto& n : near) {
    Vec x(p);
    x << 1.0, n.offset;
    xtx.noalias() += n.w * x * x.transpose();
  }
  Eigen::LDLT<Mat> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-9 * ldlt.vectorD().maxCoeff())) return std::nullopt;
  // Intercept weights: first row of (X^T W X)^-1 X^T W.
  const Vec e0 = ldlt.solve(Vec::Unit(p, 0));
  Mat c0 = Mat::Zero(d, d);
  for (const auto& n : near) {
    Vec x(p);
    x << 1.0, n.offset;
    c0.noalias() += (n.w * e0.dot(x)) * *n.cov;
  }
  c0 = 0.5 * (c0 + c0.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(c0, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) return std::nullopt;
  return c0;
}

struct CellEstimate {
  std::optional<Mat> mean;    // kernel-weighted mean
  std::optional<Mat> linear;  // local linear fit
  bool fillable = false;
};

CellEstimate smooth_cell(const CovarianceField& field, std::size_t i, double bandwidth, int order) {
  const auto& grid = field.grid;
  const Eigen::Index d = grid.dim();
  const int reach = static_cast<int>(std::ceil(3.0 * bandwidth));
  const double fill_radius2 = 4.0 * bandwidth * bandwidth;
  const auto idx = grid.unflatten(i);
  std::vector<int> offset(static_cast<std::size_t>(d), -reach);
  std::vector<int> neighbor(static_cast<std::size_t>(d));
  std::vector<Neighbor> near;
  Mat sum = Mat::Zero(d, d);
  double weight = 0.0;
  CellEstimate out;
  while (true) {
    bool inside = true;
    double r2 = 0.0;
    for (std::size_t a = 0; a < offset.size(); ++a) {
      neighbor[a] = idx[a] + offset[a];
      if (neighbor[a] < 0 || neighbor[a] >= grid.cells()[a]) inside = false;
      r2 += static_cast<double>(offset[a]) * offset[a];
    }
    if (inside && r2 <= 9.0 * bandwidth * bandwidth) {
      const std::size_t j = grid.flat(neighbor);
      if (field.supported[j] && !field.filled[j]) {
        const double w = std::exp(-r2 / (2.0 * bandwidth * bandwidth)) * static_cast<double>(field.counts[j]);
        sum.noalias() += w * field.cov[j];
        weight += w;
        if (r2 <= fill_radius2) out.fillable = true;
        Vec o(d);
        for (Eigen::Index a = 0; a < d; ++a) o[a] = offset[static_cast<std::size_t>(a)];
        near.push_back({std::move(o), w, &field.cov[j]});
      }
    }
    std::size_t a = 0;
    while (a < offset.size() && ++offset[a] > reach) offset[a++] = -reach;
    if (a == offset.size()) break;
  }
  if (weight > 0.0) out.mean = Mat(sum / weight);
  if (order == 1) out.linear = local_linear(near, d);
  return out;
}

}  // namespace

CovarianceField smooth(const CovarianceField& field, double bandwidth, int order) {
  if (!(bandwidth >= 0.0)) throw PreconditionError("smooth: bandwidth must be >= 0");
  if (order != 0 && order != 1) throw PreconditionError("smooth: order must be 0 or 1");
  if (bandwidth == 0.0) return field;

  CovarianceField out = field;
  for (std::size_t i = 0; i < field.grid.size(); ++i) {
    const bool own = field.supported[i] && !field.filled[i];
    const auto est = smooth_cell(field, i, bandwidth, own ? order : 0);
    if (own) {
      out.cov[i] = est.linear ? *est.linear : *est.mean;
    } else if (est.fillable && est.mean) {
      out.cov[i] = *est.mean;
      out.supported[i] = true;
      out.filled[i] = true;
    }
  }
  return out;
}

geometry::MetricField to_metric(const CovarianceField& field, double shrinkage, double condition_cap) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw PreconditionError("to_metric: shrinkage must lie in [0, 1]");
  const auto& grid = field.grid;
  const Eigen::Index d = grid.dim();
  if (field.support_threshold < static_cast<std::size_t>(d))
    throw PreconditionError("to_metric: support threshold below the dimension");

  Mat mean = Mat::Zero(d, d);
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!field.supported[i] || field.filled[i]) continue;
    mean += static_cast<double>(field.counts[i]) * field.cov[i];
    total += static_cast<double>(field.counts[i]);
  }
  if (total > 0.0) mean /= total;

  std::vector<Mat> tensors(grid.size(), Mat::Zero(d, d));
  std::vector<bool> valid(grid.size(), false);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!field.supported[i]) continue;
    const Mat c = shrinkage == 0.0 ? field.cov[i] : Mat((1.0 - shrinkage) * field.cov[i] + shrinkage * mean);
    Eigen::SelfAdjointEigenSolver<Mat> eig(c);
    if (eig.info() != Eigen::Success)
      throw SingularCovarianceError("to_metric: eigen-decomposition failed in cell " + std::to_string(i), i);
    const Vec lambda = eig.eigenvalues();
    if (!(lambda.minCoeff() > 0.0) || lambda.maxCoeff() / lambda.minCoeff() > condition_cap)
      throw SingularCovarianceError("to_metric: covariance not invertible in cell " + std::to_string(i), i);
    const Mat& v = eig.eigenvectors();
    Mat g = v * lambda.cwiseInverse().asDiagonal() * v.transpose();
    tensors[i] = 0.5 * (g + g.transpose());
    valid[i] = true;
  }
  return geometry::MetricField(grid, std::move(tensors), std::move(valid));
}

}  // namespace geomap::statistics
