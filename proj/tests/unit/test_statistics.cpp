#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "geomap/errors.hpp"
#include "geomap/statistics.hpp"

using namespace geomap;
using namespace geomap::statistics;

namespace {

std::vector<VelocitySample> gaussian_samples(std::size_t n, double sigma, std::uint64_t seed, const Vec& lo,
                                             const Vec& hi) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<VelocitySample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec at(lo.size()), v(lo.size());
    for (Eigen::Index a = 0; a < lo.size(); ++a) {
      at[a] = lo[a] + (hi[a] - lo[a]) * u(rng);
      v[a] = normal(rng);
    }
    out.push_back({ChartPoint(at), v});
  }
  return out;
}

GridSpec unit_grid(int cells) { return GridSpec(Vec::Zero(2), Vec::Ones(2), {cells, cells}); }

}  // namespace

TEST_CASE("velocity estimation examples") {
  TrajectorySegment seg{0.1, 0.0, {ChartPoint{0.0, 0.0}, ChartPoint{0.1, 0.0}, ChartPoint{0.2, 0.0}}, 1};
  auto v = estimate_velocities(seg);
  REQUIRE(v.size() == 1);
  CHECK(v[0].at.coords == make_vec({0.1, 0.0}));
  CHECK(v[0].velocity[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v[0].velocity[1] == 0.0);

  seg.points = {ChartPoint{0.3, 0.3}, ChartPoint{0.3, 0.3}, ChartPoint{0.3, 0.3}, ChartPoint{0.3, 0.3}};
  v = estimate_velocities(seg);
  REQUIRE(v.size() == 2);
  for (const auto& s : v) CHECK(s.velocity.norm() == 0.0);

  seg.points = {ChartPoint{0.0, 0.0}, ChartPoint{0.2, 0.1}};
  v = estimate_velocities(seg);
  REQUIRE(v.size() == 1);
  CHECK(v[0].velocity[0] == doctest::Approx(2.0));
  CHECK(v[0].at.coords[0] == doctest::Approx(0.1));

  seg.dt = 0.0;
  CHECK_THROWS_AS(estimate_velocities(seg), InvalidSegmentError);
  seg.dt = -1.0;
  CHECK_THROWS_AS(estimate_velocities(seg), InvalidSegmentError);
  seg.dt = 0.1;
  seg.points.resize(1);
  CHECK_THROWS_AS(estimate_velocities(seg), InvalidSegmentError);
}

TEST_CASE("central differences meet the Taylor remainder bound") {
  const double dt = 0.01;
  TrajectorySegment seg{dt, 0.0, {}, 0};
  for (int i = 0; i < 700; ++i) seg.points.push_back(ChartPoint{std::sin(i * dt)});
  const auto v = estimate_velocities(seg);
  REQUIRE(v.size() == 698);
  const double bound = dt * dt / 6.0 + 1e-12;
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i].velocity[0] - std::cos((i + 1) * dt)) <= bound);
}

TEST_CASE("alternating velocities give a rank-one moment that cannot be inverted") {
  std::vector<VelocitySample> s;
  for (int i = 0; i < 40; ++i) s.push_back({ChartPoint{0.5, 0.5}, make_vec({i % 2 ? 0.3 : -0.3, 0.0})});
  auto field = accumulate(s, GridSpec(Vec::Zero(2), Vec::Ones(2), {1, 1}));
  CHECK(field.counts[0] == 40);
  CHECK(field.cov[0](0, 0) == doctest::Approx(0.09));
  CHECK(field.cov[0](1, 1) == 0.0);
  CHECK(field.cov[0](0, 1) == 0.0);
  CHECK_THROWS_AS(to_metric(field, 0.0), SingularCovarianceError);
}

TEST_CASE("isotropic Gaussian velocities give sigma squared identity") {
  const double sigma = 0.1;
  const std::size_t n = 100000;
  auto s = gaussian_samples(n, sigma, 11, Vec::Zero(2), Vec::Ones(2));
  auto field = accumulate(s, GridSpec(Vec::Zero(2), Vec::Ones(2), {1, 1}));
  const double var = sigma * sigma;
  const double se_diag = var * std::sqrt(2.0 / n);
  const double se_off = var / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(field.cov[0](0, 0) - var) <= 3 * se_diag);
  CHECK(std::abs(field.cov[0](1, 1) - var) <= 3 * se_diag);
  CHECK(std::abs(field.cov[0](0, 1)) <= 3 * se_off);
}

TEST_CASE("samples outside the grid are counted and skipped") {
  CovarianceAccumulator acc(unit_grid(4));
  CHECK(acc.add({ChartPoint{0.5, 0.5}, make_vec({1.0, 0.0})}));
  CHECK_FALSE(acc.add({ChartPoint{1.5, 0.5}, make_vec({1.0, 0.0})}));
  CHECK(acc.outside() == 1);
  CHECK(acc.total() == 2);
  auto f = acc.finish(1);
  CHECK(f.visited_count() == 1);
}

TEST_CASE("smoothing") {
  auto s = gaussian_samples(20000, 0.1, 5, Vec::Zero(2), Vec::Ones(2));
  auto field = accumulate(s, unit_grid(8));
  auto same = smooth(field, 0.0);
  for (std::size_t i = 0; i < field.cov.size(); ++i) CHECK(same.cov[i] == field.cov[i]);

  CovarianceField uniform = field;
  for (auto& c : uniform.cov) c = 0.01 * Mat::Identity(2, 2);
  for (double b : {0.5, 1.0, 2.5}) {
    auto sm = smooth(uniform, b);
    for (const auto& c : sm.cov) CHECK((c - 0.01 * Mat::Identity(2, 2)).norm() <= 1e-15);
  }

  CovarianceField hole = uniform;
  const std::size_t mid = hole.grid.flat(std::vector<int>{4, 4});
  hole.counts[mid] = 0;
  hole.cov[mid] = Mat::Zero(2, 2);
  hole.supported[mid] = false;
  auto filled = smooth(hole, 1.0);
  CHECK(filled.supported[mid]);
  CHECK(filled.filled[mid]);
  CHECK((filled.cov[mid] - 0.01 * Mat::Identity(2, 2)).norm() <= 1e-15);

  // A hole further than two bandwidths from support stays empty.
  CovarianceField sparse = uniform;
  for (std::size_t i = 0; i < sparse.cov.size(); ++i) {
    const auto idx = sparse.grid.unflatten(i);
    if (idx[0] > 1) {
      sparse.supported[i] = false;
      sparse.counts[i] = 0;
    }
  }
  auto sm = smooth(sparse, 1.0);
  CHECK(sm.supported[sparse.grid.flat(std::vector<int>{3, 0})]);
  CHECK_FALSE(sm.supported[sparse.grid.flat(std::vector<int>{4, 0})]);
  CHECK_THROWS_AS(smooth(field, -1.0), PreconditionError);
}

TEST_CASE("to_metric examples") {
  auto s = gaussian_samples(5000, 0.1, 2, Vec::Zero(2), Vec::Ones(2));
  auto field = accumulate(s, unit_grid(3));
  for (auto& c : field.cov) c = 0.01 * Mat::Identity(2, 2);
  auto g = to_metric(field, 0.0);
  for (const auto& t : g.tensors()) CHECK((t - 100.0 * Mat::Identity(2, 2)).norm() <= 1e-10);

  const double v = 1.0;
  for (auto& c : field.cov) c = 0.5 * v * v * Mat::Identity(2, 2);
  g = to_metric(field, 0.05);
  for (const auto& t : g.tensors()) CHECK((t - 2.0 * Mat::Identity(2, 2)).norm() <= 1e-12);

  CHECK_THROWS_AS(to_metric(field, 1.5), PreconditionError);
}

TEST_CASE("unsupported cells become invalid metric nodes") {
  auto s = gaussian_samples(400, 0.1, 2, Vec::Zero(2), make_vec({0.5, 1.0}));
  auto field = accumulate(s, unit_grid(4), 20);
  auto g = to_metric(field, 0.05);
  for (std::size_t i = 0; i < field.cov.size(); ++i) CHECK(g.valid()[i] == field.supported[i]);
  CHECK(g.valid_count() < field.cov.size());
}

TEST_CASE("inversion round trip recovers the shrunk covariance") {
  auto s = gaussian_samples(20000, 0.2, 9, Vec::Zero(2), Vec::Ones(2));
  for (auto& x : s) x.velocity[1] += 0.5 * x.velocity[0];
  auto field = accumulate(s, unit_grid(4));
  const double shrink = 0.3;
  Mat mean = Mat::Zero(2, 2);
  double total = 0;
  for (std::size_t i = 0; i < field.cov.size(); ++i) {
    mean += static_cast<double>(field.counts[i]) * field.cov[i];
    total += static_cast<double>(field.counts[i]);
  }
  mean /= total;
  auto g = to_metric(field, shrink);
  for (std::size_t i = 0; i < field.cov.size(); ++i) {
    const Mat expect = (1 - shrink) * field.cov[i] + shrink * mean;
    CHECK((g.tensors()[i].inverse() - expect).cwiseAbs().maxCoeff() <= 1e-10 * expect.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("contravariant transformation of the second moment") {
  auto s = gaussian_samples(3000, 0.2, 4, Vec::Zero(2), Vec::Ones(2));
  Mat j(2, 2);
  j << 1.3, 0.4, -0.2, 0.7;
  std::vector<VelocitySample> t;
  for (const auto& x : s) t.push_back({ChartPoint(j * x.at.coords), j * x.velocity});

  // One cell holding everything so the cell correspondence is exact.
  auto a = accumulate(s, GridSpec(make_vec({-5.0, -5.0}), make_vec({5.0, 5.0}), {1, 1}));
  auto b = accumulate(t, GridSpec(make_vec({-5.0, -5.0}), make_vec({5.0, 5.0}), {1, 1}));
  const Mat expect = j * a.cov[0] * j.transpose();
  CHECK((b.cov[0] - expect).cwiseAbs().maxCoeff() <= 1e-14);
  const Mat ga = to_metric(a, 0.0).tensors()[0];
  const Mat gb = to_metric(b, 0.0).tensors()[0];
  const Mat jinv = j.inverse();
  CHECK((gb - jinv.transpose() * ga * jinv).cwiseAbs().maxCoeff() <= 1e-10 * ga.cwiseAbs().maxCoeff());

  // Diagonal map on a multi-cell grid: cells correspond one to one.
  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 2.0;
  diag(1, 1) = 0.5;
  std::vector<VelocitySample> u;
  for (const auto& x : s) u.push_back({ChartPoint(diag * x.at.coords), diag * x.velocity});
  auto fa = accumulate(s, unit_grid(5));
  auto fb = accumulate(u, GridSpec(Vec::Zero(2), make_vec({2.0, 0.5}), {5, 5}));
  for (std::size_t i = 0; i < fa.cov.size(); ++i) {
    CHECK(fa.counts[i] == fb.counts[i]);
    CHECK((fb.cov[i] - diag * fa.cov[i] * diag).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("rescaling time scales the moment and the metric quadratically") {
  TrajectorySegment seg{0.05, 0.0, {}, 0};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.01);
  Vec p = make_vec({0.5, 0.5});
  for (int i = 0; i < 4000; ++i) {
    p += make_vec({n(rng), n(rng)});
    p = p.cwiseMax(0.0).cwiseMin(1.0);
    seg.points.push_back(ChartPoint(p));
  }
  for (double alpha : {2.0, 3.0}) {
    TrajectorySegment slow = seg;
    slow.dt *= alpha;
    auto fa = accumulate(estimate_velocities(seg), unit_grid(3));
    auto fb = accumulate(estimate_velocities(slow), unit_grid(3));
    auto ga = to_metric(fa, 0.05);
    auto gb = to_metric(fb, 0.05);
    for (std::size_t i = 0; i < fa.cov.size(); ++i) {
      if (alpha == 2.0) {
        CHECK(fb.cov[i] == fa.cov[i] / 4.0);
        CHECK(gb.tensors()[i] == 4.0 * ga.tensors()[i]);
      } else {
        CHECK((fb.cov[i] * alpha * alpha - fa.cov[i]).cwiseAbs().maxCoeff() <= 1e-13 * fa.cov[i].norm());
        CHECK((gb.tensors()[i] - alpha * alpha * ga.tensors()[i]).cwiseAbs().maxCoeff() <=
              1e-12 * gb.tensors()[i].norm());
      }
    }
  }
}

TEST_CASE("local linear smoothing reproduces a linear field up to the edge") {
  auto s = gaussian_samples(20000, 0.1, 5, Vec::Zero(2), Vec::Ones(2));
  CovarianceField field = accumulate(s, unit_grid(10));
  auto truth = [&](std::size_t i) {
    const auto idx = field.grid.unflatten(i);
    Mat c(2, 2);
    c << 0.01 + 0.002 * idx[0], 0.0005 * idx[1], 0.0005 * idx[1], 0.02 - 0.001 * idx[1];
    return c;
  };
  for (std::size_t i = 0; i < field.cov.size(); ++i) field.cov[i] = truth(i);

  const auto lin = smooth(field, 1.5, 1);
  const auto mean = smooth(field, 1.5, 0);
  const std::size_t corner = field.grid.flat(std::vector<int>{0, 0});
  for (std::size_t i = 0; i < field.cov.size(); ++i) CHECK((lin.cov[i] - truth(i)).norm() <= 1e-12);
  // the kernel mean is pulled inward at the boundary
  CHECK((mean.cov[corner] - truth(corner)).norm() > 1e-3);
  CHECK_THROWS_AS(smooth(field, 1.0, 2), PreconditionError);
}
