#include "geomap/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "geomap/errors.hpp"

namespace geomap::geometry {

namespace {

void require_square(const Mat& g, Eigen::Index d, const char* what) {
  if (g.rows() != d || g.cols() != d) throw PreconditionError(std::string(what) + ": tensor has wrong shape");
}

}  // namespace

MetricTensor::MetricTensor(Mat g) : g_(std::move(g)) {
  if (g_.rows() != g_.cols() || g_.rows() == 0) throw PreconditionError("metric tensor: not square");
  if (!g_.allFinite()) throw PreconditionError("metric tensor: non-finite entry");
  const double scale = std::max(1.0, g_.cwiseAbs().maxCoeff());
  if ((g_ - g_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw PreconditionError("metric tensor: not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(g_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0) throw PreconditionError("metric tensor: not positive definite");
}

Mat MetricTensor::inverse() const { return g_.inverse(); }

// ---------------------------------------------------------------------------

MetricField::MetricField(GridSpec grid, std::vector<Mat> tensors, std::vector<bool> valid)
    : grid_(std::move(grid)), tensors_(std::move(tensors)), valid_(std::move(valid)) {
  if (tensors_.size() != grid_.size() || valid_.size() != grid_.size())
    throw PreconditionError("metric field: one tensor and flag per grid node required");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!valid_[i]) continue;
    require_square(tensors_[i], grid_.dim(), "metric field");
    MetricTensor check(tensors_[i]);
  }
}

MetricField MetricField::sample(const GridSpec& grid, const std::function<Mat(const Vec&)>& metric) {
  std::vector<Mat> tensors(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) tensors[i] = metric(grid.center(i));
  return MetricField(grid, std::move(tensors), std::vector<bool>(grid.size(), true));
}

std::size_t MetricField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), true));
}

std::optional<MetricField::Stencil> MetricField::stencil(const Vec& p) const {
  const Eigen::Index d = dim();
  if (p.size() != d || !p.allFinite()) return std::nullopt;
  Stencil s{std::vector<int>(static_cast<std::size_t>(d)), Vec(d)};
  for (Eigen::Index a = 0; a < d; ++a) {
    const int n = grid_.cells()[static_cast<std::size_t>(a)];
    if (n < 2) return std::nullopt;
    const double q = (p[a] - grid_.lower()[a]) / grid_.spacing(a) - 0.5;
    if (!(q >= 0.0 && q <= n - 1)) return std::nullopt;
    int i = static_cast<int>(std::floor(q));
    if (i > n - 2) i = n - 2;
    s.base[static_cast<std::size_t>(a)] = i;
    s.frac[a] = q - i;
  }
  const std::size_t corners = std::size_t{1} << d;
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (std::size_t mask = 0; mask < corners; ++mask) {
    for (Eigen::Index a = 0; a < d; ++a)
      idx[static_cast<std::size_t>(a)] = s.base[static_cast<std::size_t>(a)] + static_cast<int>((mask >> a) & 1U);
    if (!valid_[grid_.flat(idx)]) return std::nullopt;
  }
  return s;
}

bool MetricField::contains(const Vec& p) const { return stencil(p).has_value(); }

Mat MetricField::metric_at(const Vec& p) const {
  const auto s = stencil(p);
  if (!s) throw DomainError("metric field: point outside the known territory");
  const Eigen::Index d = dim();
  Mat g = Mat::Zero(d, d);
  const std::size_t corners = std::size_t{1} << d;
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (std::size_t mask = 0; mask < corners; ++mask) {
    double w = 1.0;
    for (Eigen::Index a = 0; a < d; ++a) {
      const bool upper = (mask >> a) & 1U;
      idx[static_cast<std::size_t>(a)] = s->base[static_cast<std::size_t>(a)] + (upper ? 1 : 0);
      w *= upper ? s->frac[a] : 1.0 - s->frac[a];
    }
    if (w != 0.0) g.noalias() += w * tensors_[grid_.flat(idx)];
  }
  return 0.5 * (g + g.transpose());
}

MetricField MetricField::scaled(double factor) const {
  std::vector<Mat> t = tensors_;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (valid_[i]) t[i] *= factor;
  return MetricField(grid_, std::move(t), valid_);
}

// ---------------------------------------------------------------------------

Vec ChristoffelSymbols::contract(const Vec& a, const Vec& b) const {
  Vec out = Vec::Zero(d_);
  for (Eigen::Index k = 0; k < d_; ++k) {
    double sum = 0.0;
    for (Eigen::Index l = 0; l < d_; ++l) {
      if (a[l] == 0.0) continue;
      for (Eigen::Index m = 0; m < d_; ++m) sum += (*this)(k, l, m) * a[l] * b[m];
    }
    out[k] = sum;
  }
  return out;
}

double ChristoffelSymbols::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

ChristoffelSymbols christoffel_at(const MetricField& field, const ChartPoint& p, const Vec& h) {
  const Eigen::Index d = field.dim();
  if (p.dim() != d || h.size() != d) throw PreconditionError("christoffel_at: dimension mismatch");
  if ((h.array() <= 0.0).any()) throw PreconditionError("christoffel_at: step must be positive");

  const Mat g = field.metric_at(p.coords);
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success) throw SingularMetricError("christoffel_at: interpolated metric not invertible");
  const Mat ginv = llt.solve(Mat::Identity(d, d));
  if (!ginv.allFinite()) throw SingularMetricError("christoffel_at: interpolated metric not invertible");

  // dg[n](a, b) = d g_ab / d x_n
  std::vector<Mat> dg(static_cast<std::size_t>(d));
  for (Eigen::Index n = 0; n < d; ++n) {
    Vec plus = p.coords, minus = p.coords;
    plus[n] += h[n];
    minus[n] -= h[n];
    dg[static_cast<std::size_t>(n)] = (field.metric_at(plus) - field.metric_at(minus)) / (2.0 * h[n]);
  }

  ChristoffelSymbols gamma(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index l = 0; l < d; ++l) {
      for (Eigen::Index m = l; m < d; ++m) {
        double sum = 0.0;
        for (Eigen::Index n = 0; n < d; ++n) {
          sum += ginv(k, n) * (dg[static_cast<std::size_t>(l)](m, n) + dg[static_cast<std::size_t>(m)](n, l) -
                               dg[static_cast<std::size_t>(n)](l, m));
        }
        gamma(k, l, m) = 0.5 * sum;
        gamma(k, m, l) = gamma(k, l, m);
      }
    }
  }
  return gamma;
}

ChristoffelSymbols christoffel_at(const MetricField& field, const ChartPoint& p, double h) {
  return christoffel_at(field, p, Vec::Constant(field.dim(), h));
}

FieldConnection::FieldConnection(const MetricField& field, const GeometryParams& params)
    : field_(&field),
      h_(params.fd_fraction * field.grid().spacing()),
      h_max_(params.substep_fraction * field.grid().spacing()) {
  if (!(params.fd_fraction > 0.0) || !(params.substep_fraction > 0.0))
    throw PreconditionError("geometry: step fractions must be positive");
}

ChristoffelSymbols FieldConnection::christoffel(const Vec& p) const { return christoffel_at(*field_, ChartPoint(p), h_); }

// ---------------------------------------------------------------------------

TangentVector transport_step(const TangentVector& v, const Vec& delta, const ChristoffelSymbols& gamma) {
  if (v.components.size() != gamma.dim() || delta.size() != gamma.dim() || v.base.dim() != gamma.dim())
    throw PreconditionError("transport_step: dimension mismatch");
  if (!v.components.allFinite() || !delta.allFinite()) throw PreconditionError("transport_step: non-finite input");
  TangentVector out{ChartPoint(v.base.coords + delta), v.components - gamma.contract(v.components, delta)};
  if (!out.components.allFinite()) throw PreconditionError("transport_step: non-finite result");
  return out;
}

namespace {

int substeps_for(const Vec& displacement, const Vec& h_max) {
  double ratio = 0.0;
  for (Eigen::Index a = 0; a < displacement.size(); ++a) ratio = std::max(ratio, std::abs(displacement[a]) / h_max[a]);
  if (!std::isfinite(ratio)) throw PreconditionError("transport: non-finite displacement");
  return std::max(1, static_cast<int>(std::ceil(ratio - 1e-12)));
}

// Moves x along v for parameter span tau while carrying v (predictor-corrector
// pair of transfer steps per substep). Appends every substep vertex to path.
void advance(Vec& x, Vec& v, double tau, const Connection& connection, std::vector<ChartPoint>& path) {
  const int n = substeps_for(tau * v, connection.max_substep());
  const double h = tau / n;
  for (int i = 0; i < n; ++i) {
    const Vec d0 = h * v;
    const Vec a0 = connection.christoffel(x).contract(v, d0);
    const Vec x1 = x + d0;
    const Vec v1 = v - a0;
    const Vec d1 = h * v1;
    const Vec a1 = connection.christoffel(x1).contract(v1, d1);
    x += 0.5 * (d0 + d1);
    v -= 0.5 * (a0 + a1);
    if (!x.allFinite() || !v.allFinite()) throw DomainError("transport: diverged", path.back().coords);
    path.emplace_back(x);
  }
}

}  // namespace

SelfTransportResult self_transport(const ChartPoint& start, const Vec& increment, double count,
                                   const Connection& connection) {
  if (start.dim() != connection.dim() || increment.size() != connection.dim())
    throw PreconditionError("self_transport: dimension mismatch");
  if (!(count >= 0.0) || !std::isfinite(count)) throw PreconditionError("self_transport: count must be >= 0");
  if (!start.finite() || !increment.allFinite()) throw PreconditionError("self_transport: non-finite input");

  SelfTransportResult result;
  result.path.push_back(start);
  Vec x = start.coords;
  Vec v = increment;
  const double whole = std::floor(count);
  const double frac = count - whole;
  try {
    for (long i = 0; i < static_cast<long>(whole); ++i) advance(x, v, 1.0, connection, result.path);
    if (frac > 0.0) advance(x, v, frac, connection, result.path);
  } catch (const DomainError&) {
    throw DomainError("self_transport: path left the metric domain", result.path.back().coords);
  }
  result.end = ChartPoint(x);
  result.carried = TangentVector{result.end, v};
  return result;
}

SelfTransportResult self_transport(const ChartPoint& start, const Vec& increment, double count,
                                   const MetricField& field) {
  return self_transport(start, increment, count, FieldConnection(field));
}

TangentVector co_transport(const TangentVector& v, std::span<const ChartPoint> path, const Connection& connection) {
  if (path.empty()) return v;
  const Eigen::Index d = connection.dim();
  if (v.components.size() != d || path.front().dim() != d) throw PreconditionError("co_transport: dimension mismatch");
  const double scale = std::max(1.0, path.front().coords.cwiseAbs().maxCoeff());
  if (v.base.dim() != d || (v.base.coords - path.front().coords).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw PreconditionError("co_transport: vector is not based at the path start");
  if (path.size() == 1) return TangentVector{path.front(), v.components};

  Vec x = path.front().coords;
  Vec carried = v.components;
  const Vec h_max = connection.max_substep();
  try {
    ChristoffelSymbols g0 = connection.christoffel(x);
    for (std::size_t i = 1; i < path.size(); ++i) {
      const Vec& target = path[i].coords;
      const Vec delta = target - x;
      const int n = substeps_for(delta, h_max);
      const Vec sub = delta / n;
      for (int j = 0; j < n; ++j) {
        const Vec next = (j + 1 == n) ? target : Vec(x + sub);
        const Vec a0 = g0.contract(carried, sub);
        ChristoffelSymbols g1 = connection.christoffel(next);
        const Vec a1 = g1.contract(carried - a0, sub);
        carried -= 0.5 * (a0 + a1);
        x = next;
        g0 = std::move(g1);
      }
    }
  } catch (const DomainError&) {
    throw DomainError("co_transport: path left the metric domain", x);
  }
  return TangentVector{path.back(), carried};
}

TangentVector co_transport(const TangentVector& v, std::span<const ChartPoint> path, const MetricField& field) {
  return co_transport(v, path, FieldConnection(field));
}

// ---------------------------------------------------------------------------

void validate_frame(const AnchorFrame& frame) {
  const Eigen::Index d = frame.a.dim();
  if (d < 2 || frame.b.dim() != d || frame.c.dim() != d) throw InvalidFrameError("anchor frame: dimension mismatch");
  if (!frame.a.finite() || !frame.b.finite() || !frame.c.finite())
    throw InvalidFrameError("anchor frame: non-finite anchor");
  const Vec ab = frame.b.coords - frame.a.coords;
  const Vec ac = frame.c.coords - frame.a.coords;
  if (ab.norm() == 0.0 || ac.norm() == 0.0 || (frame.b.coords - frame.c.coords).norm() == 0.0)
    throw InvalidFrameError("anchor frame: anchors must be pairwise distinct");
  Mat basis(d, 2);
  basis.col(0) = ac / ac.norm();
  basis.col(1) = ab / ab.norm();
  Eigen::JacobiSVD<Mat> svd(basis);
  const auto sv = svd.singularValues();
  if (sv[1] <= 1e-9 * sv[0]) throw InvalidFrameError("anchor frame: increments A->B and A->C are parallel");
}

namespace {

SelfTransportResult signed_self_transport(const ChartPoint& start, const Vec& increment, double count,
                                          const Connection& connection) {
  if (count >= 0.0) return self_transport(start, increment, count, connection);
  auto r = self_transport(start, -increment, -count, connection);
  r.carried.components = -r.carried.components;
  return r;
}

}  // namespace

ChartPoint shoot(const AnchorFrame& frame, const RelativeLocation& s, const Connection& connection) {
  const Vec ac = frame.c.coords - frame.a.coords;
  const Vec ab = frame.b.coords - frame.a.coords;
  const auto leg1 = signed_self_transport(frame.a, ac, s.s1, connection);
  const auto local_ab = co_transport(TangentVector{frame.a, ab}, leg1.path, connection);
  const auto leg2 = signed_self_transport(leg1.end, local_ab.components, s.s2, connection);
  return leg2.end;
}

LocateReport locate_report(const ChartPoint& target, const AnchorFrame& frame, const Connection& connection,
                           const GeometryParams& params) {
  validate_frame(frame);
  const Eigen::Index d = connection.dim();
  if (frame.a.dim() != d || target.dim() != d) throw PreconditionError("locate: dimension mismatch");
  if (!target.finite()) throw PreconditionError("locate: non-finite target");

  Mat basis(d, 2);
  basis.col(0) = frame.c.coords - frame.a.coords;
  basis.col(1) = frame.b.coords - frame.a.coords;

  auto residual_at = [&](const Vec& s) -> Vec {
    return shoot(frame, RelativeLocation{s[0], s[1]}, connection).coords - target.coords;
  };

  // Affine solution in the flat frame; exact when the connection vanishes.
  Vec s = basis.colPivHouseholderQr().solve(target.coords - frame.a.coords);
  Vec r;
  try {
    r = residual_at(s);
  } catch (const DomainError&) {
    s = Vec::Zero(2);
    r = residual_at(s);
  }
  double best = r.norm();

  for (int iter = 0; iter <= params.max_iterations; ++iter) {
    if (best < params.tolerance) return LocateReport{RelativeLocation{s[0], s[1]}, best, iter};
    if (iter == params.max_iterations) break;

    Mat jac(d, 2);
    for (int i = 0; i < 2; ++i) {
      Vec probe = s;
      probe[i] += params.jacobian_step;
      try {
        jac.col(i) = (residual_at(probe) - r) / params.jacobian_step;
      } catch (const DomainError&) {
        probe[i] = s[i] - params.jacobian_step;
        jac.col(i) = (r - residual_at(probe)) / params.jacobian_step;
      }
    }
    const Vec step = jac.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) break;

    bool accepted = false;
    for (double damping = 1.0; damping >= 1e-6; damping *= 0.5) {
      const Vec trial = s + damping * step;
      Vec trial_r;
      try {
        trial_r = residual_at(trial);
      } catch (const DomainError&) {
        continue;
      }
      if (trial_r.norm() < best) {
        s = trial;
        r = trial_r;
        best = r.norm();
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NoSolutionError("locate: damped Gauss-Newton stalled", best);
  }
  throw NoSolutionError("locate: iteration cap reached", best);
}

RelativeLocation locate(const ChartPoint& target, const AnchorFrame& frame, const Connection& connection,
                        const GeometryParams& params) {
  return locate_report(target, frame, connection, params).location;
}

RelativeLocation locate(const ChartPoint& target, const AnchorFrame& frame, const MetricField& field,
                        const GeometryParams& params) {
  return locate(target, frame, FieldConnection(field, params), params);
}

std::vector<LocateOutcome> map_grid(std::span<const ChartPoint> tests, const AnchorFrame& frame,
                                    const Connection& connection, const GeometryParams& params) {
  std::vector<LocateOutcome> out(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    try {
      const auto report = locate_report(tests[i], frame, connection, params);
      out[i].location = report.location;
      out[i].residual = report.residual;
      out[i].iterations = report.iterations;
    } catch (const NoSolutionError& e) {
      out[i].residual = e.best_residual();
      out[i].error = e.what();
    } catch (const Error& e) {
      out[i].residual = std::numeric_limits<double>::quiet_NaN();
      out[i].error = e.what();
    }
  }
  return out;
}

std::vector<LocateOutcome> map_grid(std::span<const ChartPoint> tests, const AnchorFrame& frame,
                                    const MetricField& field, const GeometryParams& params) {
  return map_grid(tests, frame, FieldConnection(field, params), params);
}

}  // namespace geomap::geometry
