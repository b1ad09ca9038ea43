#include "geomap/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "geomap/errors.hpp"

namespace geomap::embedding {

using SpMat = Eigen::SparseMatrix<double>;

Mat select_training(const MeasurementSeries& series, std::size_t max_training) {
  const std::size_t total = series.point_count();
  if (total == 0) throw PreconditionError("embedding: empty series");
  if (max_training == 0) throw PreconditionError("embedding: max_training must be positive");
  const std::size_t stride = (total + max_training - 1) / max_training;
  const Eigen::Index m = series.width();
  Mat out(m, static_cast<Eigen::Index>((total + stride - 1) / stride));
  std::size_t flat = 0;
  Eigen::Index col = 0;
  for (const auto& seg : series.segments)
    for (const auto& v : seg.values) {
      if (flat++ % stride != 0) continue;
      if (v.size() != m) throw PreconditionError("embedding: inconsistent measurement width");
      out.col(col++) = v;
    }
  return out;
}

int estimate_dimension(const Mat& points, int k) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw PreconditionError("estimate_dimension: k must be positive");
  if (n < 10 * static_cast<Eigen::Index>(k)) throw PreconditionError("estimate_dimension: need at least 10 k points");
  if ((points.colwise() - points.col(0)).cwiseAbs().maxCoeff() == 0.0)
    throw DegenerateDataError("estimate_dimension: all points identical");

  KdTree tree(points);
  const Eigen::Index centers = std::min<Eigen::Index>(200, n);
  std::map<int, int> votes;
  for (Eigen::Index c = 0; c < centers; ++c) {
    const int i = static_cast<int>(c * n / centers);
    const auto nb = tree.knn(points.col(i), k + 1);
    Mat local(points.rows(), static_cast<Eigen::Index>(nb.size()));
    for (std::size_t j = 0; j < nb.size(); ++j) local.col(static_cast<Eigen::Index>(j)) = points.col(nb[j].index);
    local = local.colwise() - local.rowwise().mean();
    const Vec s = Eigen::JacobiSVD<Mat>(local).singularValues();
    if (s.size() == 0 || s[0] == 0.0) continue;
    int count = 0;
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (s[j] >= 0.1 * s[0]) ++count;
    ++votes[count];
  }
  if (votes.empty()) throw DegenerateDataError("estimate_dimension: no non-degenerate neighbourhood");
  int best = 0, best_votes = -1;
  for (const auto& [dim, v] : votes)
    if (v > best_votes) {
      best = dim;
      best_votes = v;
    }
  return best;
}

int estimate_dimension(const MeasurementSeries& series, int k, std::size_t max_training) {
  return estimate_dimension(select_training(series, max_training), k);
}

Vec reconstruction_weights(const Mat& neighbors, const Vec& x, double reg) {
  const Eigen::Index k = neighbors.cols();
  const Mat z = neighbors.colwise() - x;
  Mat gram = z.transpose() * z;
  const double trace = gram.trace();
  gram.diagonal().array() += trace > 0.0 ? reg * trace : 1.0;
  Vec w = gram.ldlt().solve(Vec::Ones(k));
  const double sum = w.sum();
  if (!w.allFinite() || sum == 0.0) w = Vec::Constant(k, 1.0);
  return w / w.sum();
}

namespace {

struct BottomEigen {
  Mat vectors;
  Vec values;
};

// Smallest eigenpairs of the PSD matrix m orthogonal to the constant vector,
// by shift-inverted subspace iteration with Rayleigh-Ritz projection.
BottomEigen bottom_eigenpairs(const SpMat& m, int count) {
  const Eigen::Index n = m.rows();
  const Eigen::Index q = std::min<Eigen::Index>(count + 6, n - 1);
  const double scale = m.diagonal().mean();
  SpMat shifted = m;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += 1e-9 * scale;
  Eigen::SimplicialLDLT<SpMat> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw EmbeddingError("embedding: factorization failed");

  const Vec ones = Vec::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  auto deflate = [&](Mat& x) { x -= ones * (ones.transpose() * x); };
  auto orthonormal = [&](const Mat& y) {
    Eigen::HouseholderQR<Mat> qr(y);
    return Mat(qr.householderQ() * Mat::Identity(n, q));
  };

  std::mt19937_64 rng(0x1e5eedULL);
  std::normal_distribution<double> normal;
  Mat x(n, q);
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = normal(rng);
  deflate(x);
  x = orthonormal(x);

  Vec theta;
  for (int iter = 0; iter < 500; ++iter) {
    Mat y = ldlt.solve(x);
    if (!y.allFinite()) throw EmbeddingError("embedding: eigen-solve produced non-finite values");
    deflate(y);
    const Mat basis = orthonormal(y);
    const Mat mb = m * basis;
    Mat h = basis.transpose() * mb;
    h = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(h);
    theta = eig.eigenvalues();
    x = basis * eig.eigenvectors();
    const Mat residual = mb * eig.eigenvectors() - x * theta.asDiagonal();
    bool converged = true;
    for (int j = 0; j < count; ++j)
      if (residual.col(j).norm() > 1e-10 * scale) converged = false;
    if (converged) return BottomEigen{x.leftCols(count), theta.head(count)};
  }
  throw EmbeddingError("embedding: eigen-solve did not converge");
}

void check_connected(const std::vector<std::vector<int>>& adjacency) {
  std::vector<char> seen(adjacency.size(), 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    for (int j : adjacency[static_cast<std::size_t>(i)])
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        ++reached;
        queue.push_back(j);
      }
  }
  if (reached != adjacency.size()) throw DisconnectedGraphError("embedding: neighbour graph is disconnected");
}

}  // namespace

EmbeddingModel::EmbeddingModel(Mat training, Mat embedded, int k, double reg, std::vector<double> eigenvalues)
    : tree_(training), embedded_(std::move(embedded)), k_(k), reg_(reg), eigenvalues_(std::move(eigenvalues)) {
  if (embedded_.cols() != tree_.size()) throw PreconditionError("embedding: one embedded point per training point");
  if (k_ < 1 || k_ >= tree_.size()) throw PreconditionError("embedding: bad neighbour count");
  std::vector<double> kth(static_cast<std::size_t>(tree_.size()));
  for (int i = 0; i < tree_.size(); ++i)
    kth[static_cast<std::size_t>(i)] = tree_.knn(tree_.points().col(i), k_, i).back().distance;
  auto mid = kth.begin() + static_cast<std::ptrdiff_t>(kth.size() / 2);
  std::nth_element(kth.begin(), mid, kth.end());
  support_radius_ = *mid;
}

std::optional<ChartPoint> EmbeddingModel::try_embed(const MeasurementVector& v) const {
  if (v.size() != width()) throw PreconditionError("embed: measurement width mismatch");
  if (!v.allFinite()) return std::nullopt;
  const auto nb = tree_.knn(v, k_);
  if (nb.front().distance > 3.0 * support_radius_) return std::nullopt;
  if (nb.front().distance == 0.0) return ChartPoint(Vec(embedded_.col(nb.front().index)));
  Mat local(width(), k_);
  for (int j = 0; j < k_; ++j) local.col(j) = training().col(nb[static_cast<std::size_t>(j)].index);
  const Vec w = reconstruction_weights(local, v, reg_);
  Vec out = Vec::Zero(dim());
  for (int j = 0; j < k_; ++j) out += w[j] * embedded_.col(nb[static_cast<std::size_t>(j)].index);
  return ChartPoint(out);
}

ChartPoint EmbeddingModel::embed(const MeasurementVector& v) const {
  auto p = try_embed(v);
  if (!p) throw OutOfSupportError("embed: measurement is outside the training support");
  return *p;
}

SpMat lle_matrix(const Mat& points, int k, double reg) {
  const Eigen::Index n = points.cols();
  KdTree tree(points);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k + 1));
  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(n));
  Mat local(points.rows(), k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto nb = tree.knn(points.col(i), k, static_cast<int>(i));
    for (int j = 0; j < k; ++j) local.col(j) = points.col(nb[static_cast<std::size_t>(j)].index);
    const Vec w = reconstruction_weights(local, points.col(i), reg);
    triplets.emplace_back(i, i, 1.0);
    for (int j = 0; j < k; ++j) {
      const int nj = nb[static_cast<std::size_t>(j)].index;
      triplets.emplace_back(i, nj, -w[j]);
      adjacency[static_cast<std::size_t>(i)].push_back(nj);
      adjacency[static_cast<std::size_t>(nj)].push_back(static_cast<int>(i));
    }
  }
  check_connected(adjacency);

  SpMat iw(n, n);
  iw.setFromTriplets(triplets.begin(), triplets.end());
  const SpMat m = SpMat(iw.transpose() * iw);

  return m;
}

EmbeddingModel fit(const Mat& points, int k, int d, double reg) {
  const Eigen::Index n = points.cols();
  if (d < 1) throw PreconditionError("fit: d must be positive");
  if (k <= d) throw PreconditionError("fit: k must exceed d");
  if (n < 50 * static_cast<Eigen::Index>(d)) throw PreconditionError("fit: need at least 50 d training points");
  if (k >= n) throw PreconditionError("fit: k must be below the number of points");
  if (!(reg >= 0.0)) throw PreconditionError("fit: reg must be >= 0");
  if (d >= points.rows()) throw PreconditionError("fit: d must be below the measurement width");
  if (!points.allFinite()) throw PreconditionError("fit: non-finite training point");

  const SpMat m = lle_matrix(points, k, reg);
  const auto eig = bottom_eigenpairs(m, d + 1);
  const double next = eig.values[d], last = eig.values[d - 1];
  if (!(next - last > 1e-6 * std::abs(next))) throw EmbeddingError("fit: near-zero eigen-gap");

  Mat y = eig.vectors.leftCols(d) * std::sqrt(static_cast<double>(n));
  for (int a = 0; a < d; ++a) {
    Eigen::Index at = 0;
    y.col(a).cwiseAbs().maxCoeff(&at);
    if (y(at, a) < 0.0) y.col(a) = -y.col(a);
  }
  std::vector<double> values(eig.values.data(), eig.values.data() + eig.values.size());
  return EmbeddingModel(points, y.transpose(), k, reg, std::move(values));
}

EmbeddingModel fit(const MeasurementSeries& series, int k, int d, double reg, std::size_t max_training) {
  return fit(select_training(series, max_training), k, d, reg);
}

std::vector<statistics::TrajectorySegment> embed_series(const EmbeddingModel& model, const MeasurementSeries& series,
                                                        TruncationReport* report) {
  std::vector<statistics::TrajectorySegment> out;
  TruncationReport local;
  for (const auto& seg : series.segments) {
    std::vector<std::optional<ChartPoint>> pts(seg.values.size());
    std::vector<bool> ok(seg.values.size());
    for (std::size_t i = 0; i < seg.values.size(); ++i) {
      pts[i] = model.try_embed(seg.values[i]);
      ok[i] = pts[i].has_value();
    }
    split_runs(ok, local, [&](std::size_t a, std::size_t b) {
      statistics::TrajectorySegment t;
      t.dt = series.dt;
      t.t0 = seg.t0 + static_cast<double>(a) * series.dt;
      t.segment_id = seg.id;
      for (std::size_t i = a; i <= b; ++i) t.points.push_back(*pts[i]);
      out.push_back(std::move(t));
    });
  }
  if (report) *report = local;
  return out;
}

double neighbor_preservation(const Mat& a, const Mat& b, int k) {
  if (a.cols() != b.cols()) throw PreconditionError("neighbor_preservation: point counts differ");
  KdTree ta(a), tb(b);
  std::size_t shared = 0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    auto na = ta.knn(a.col(i), k, static_cast<int>(i));
    auto nb = tb.knn(b.col(i), k, static_cast<int>(i));
    std::vector<int> ia, ib;
    for (const auto& x : na) ia.push_back(x.index);
    for (const auto& x : nb) ib.push_back(x.index);
    std::sort(ia.begin(), ia.end());
    std::sort(ib.begin(), ib.end());
    std::vector<int> common;
    std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(common));
    shared += common.size();
  }
  return static_cast<double>(shared) / (static_cast<double>(a.cols()) * k);
}

}  // namespace geomap::embedding
