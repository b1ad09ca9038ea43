// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "analytic.hpp"
#include "geomap/config.hpp"
#include "geomap/geometry.hpp"
#include "geomap/harness.hpp"
#include "geomap/sensors.hpp"
#include "geomap/statistics.hpp"
#include "geomap/world.hpp"

using namespace geomap;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds, double limit) {
  const bool in_time = seconds <= limit;
  if (!(pass && in_time)) ++failures;
  std::printf("%s criterion %d: %s; %.1f s (limit %.0f s)\n", pass && in_time ? "PASS" : "FAIL", id, what.c_str(),
              seconds, limit);
  std::fflush(stdout);
}

template <class F>
void run(int id, double limit, F&& body) {
  const auto t0 = Clock::now();
  std::string what;
  bool pass = false;
  try {
    pass = body(what);
  } catch (const std::exception& e) {
    what += std::string(" threw: ") + e.what();
    pass = false;
  }
  report(id, pass, what, std::chrono::duration<double>(Clock::now() - t0).count(), limit);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

struct CellCheck {
  std::size_t cells = 0;
  double diag = 0.0;  // worst |c_kk - ref| / ref
  double off = 0.0;   // worst |c_kl| / ref
};

// Per-cell second moment on the intrinsic chart, streamed so millions of
// segments fit in memory.
CellCheck intrinsic_cells(const harness::WorldConfig& w, std::size_t segments, std::uint64_t seed, int cells,
                          std::size_t min_samples, double ref) {
  const auto surface = w.patch();
  GridSpec grid(Vec(surface.lower), Vec(surface.upper), {cells, cells});
  statistics::CovarianceAccumulator acc(grid);
  world::SamplingOptions opt;
  opt.lab = false;
  world::for_each_segment(
      surface, w.motion(), segments, w.duration, w.dt, seed,
      [&](const world::WorldSegment& s) { acc.add(statistics::estimate_velocities(world::intrinsic_segment(s))); }, 0,
      opt);
  const auto f = acc.finish(min_samples);
  CellCheck out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!f.supported[i]) continue;
    ++out.cells;
    const Mat e = f.cov[i] - ref * Mat::Identity(2, 2);
    out.diag = std::max({out.diag, std::abs(e(0, 0)) / ref, std::abs(e(1, 1)) / ref});
    out.off = std::max(out.off, std::abs(e(0, 1)) / ref);
  }
  return out;
}

// s-coordinates of the layout's tests on a flat or developable patch:
// intrinsic offsets from A in units of the anchor increments.
std::vector<Vec2> affine_truth(const harness::ExperimentConfig& cfg) {
  const auto layout = harness::make_layout(cfg.world.patch(), cfg.layout);
  const Vec2 ac = layout.c - layout.a, ab = layout.b - layout.a;
  std::vector<Vec2> out;
  for (const auto& t : layout.tests) {
    const Vec2 d = t - layout.a;
    out.emplace_back(d.x() / ac.x(), d.y() / ab.y());
  }
  return out;
}

struct TruthError {
  std::size_t located = 0;
  double rel1 = 0.0, rel2 = 0.0;  // per-component RMS / truth span
};

TruthError truth_error(const harness::Map& map, const std::vector<Vec2>& truth, std::size_t n) {
  double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300, s1 = 0.0, s2 = 0.0;
  TruthError r;
  for (std::size_t i = 0; i < n; ++i) {
    lo1 = std::min(lo1, truth[i].x());
    hi1 = std::max(hi1, truth[i].x());
    lo2 = std::min(lo2, truth[i].y());
    hi2 = std::max(hi2, truth[i].y());
    if (!map[i].location) continue;
    ++r.located;
    s1 += std::pow(map[i].location->s1 - truth[i].x(), 2);
    s2 += std::pow(map[i].location->s2 - truth[i].y(), 2);
  }
  if (r.located == 0) return {0, 1e300, 1e300};
  r.rel1 = std::sqrt(s1 / r.located) / (hi1 - lo1);
  r.rel2 = std::sqrt(s2 / r.located) / (hi2 - lo2);
  return r;
}

std::size_t located(const harness::Map& m) {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](const auto& e) { return e.location.has_value(); }));
}

}  // namespace

int main() {
  // 1. Equilibrium covariance kT * I on the cylinder's intrinsic chart.
  run(1, 60.0, [](std::string& what) {
    const auto cfg = harness::default_config();
    const std::size_t segments = 6000000;
    const auto r = intrinsic_cells(cfg.world, segments, cfg.seed, cfg.machines[0].statistics.cells, 1000, cfg.world.kT);
    what = fmt("%.0f segments, %.0f cells with >= 1000 samples, worst diagonal %.2f%%, worst off-diagonal %.2f%% of kT "
               "(bound 5%%)",
               static_cast<double>(segments), static_cast<double>(r.cells), 100 * r.diag, 100 * r.off);
    return r.cells > 0 && r.diag <= 0.05 && r.off <= 0.05;
  });

  // 2. Christoffel symbols of the sampled polar-plane metric.
  run(2, 1.0, [](std::string& what) {
    const auto field = testing::polar_field(0.02);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ur(0.8, 3.2), ut(-1.2, 1.7);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const double r = ur(rng), t = ut(rng);
      const auto g = geometry::christoffel_at(field, ChartPoint{r, t}, 0.01);
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
          for (int m = 0; m < 2; ++m) {
            double exact = 0.0;
            if (k == 0 && l == 1 && m == 1) exact = -r;
            if (k == 1 && l + m == 1) exact = 1.0 / r;
            worst = std::max(worst, std::abs(g(k, l, m) - exact));
          }
    }
    what = fmt("20 points at grid spacing 0.02, max |Gamma error| %.2e (bound 1e-3)", worst);
    return worst <= 1e-3;
  });

  // 3. Length drift of transport along a unit-length polyline.
  run(3, 1.0, [](std::string& what) {
    auto drift = [](double substep) {
      testing::PolarConnection conn(substep);
      // r = 1 arc of length 0.5, then a radial leg of length 0.5
      std::vector<ChartPoint> path{ChartPoint{1.0, 0.0}, ChartPoint{1.0, 0.5}, ChartPoint{1.5, 0.5}};
      const Vec v = make_vec({0.6, 0.8});
      const auto out = geometry::co_transport(TangentVector{path.front(), v}, path, conn);
      const double before = std::sqrt(v.dot(conn.metric(path.front().coords) * v));
      const double after = std::sqrt(out.components.dot(conn.metric(path.back().coords) * out.components));
      return std::abs(after - before) / before;
    };
    const double d1 = drift(1e-3), d4 = drift(2.5e-4);
    what = fmt("drift %.2e at substep 1e-3 (bound 1e-4), %.2e at 2.5e-4, ratio %.1f (bound >= 4)", d1, d4, d1 / d4);
    return d1 <= 1e-4 && d1 / d4 >= 4.0;
  });

  // 4. Near-identity and warped suites on a flat plane agree.
  run(4, 300.0, [](std::string& what) {
    const auto cfg = config::flat_plane_config();
    const auto r = harness::experiment(cfg);
    const std::size_t g = static_cast<std::size_t>(cfg.layout.grid * cfg.layout.grid);
    const harness::Map a(r.machines[0].map.begin(), r.machines[0].map.begin() + g);
    const harness::Map b(r.machines[1].map.begin(), r.machines[1].map.begin() + g);
    const auto rep = harness::compare_maps(a, b);
    what = fmt("%.0f/49 compared, RMS deviation %.2f%% / %.2f%% of span (s1 / s2, bound 5%%)",
               static_cast<double>(rep.compared), 100 * rep.rms_ds1 / rep.span1, 100 * rep.rms_ds2 / rep.span2);
    return rep.compared == g && rep.relative_rms() <= 0.05;
  });

  // 5. Two-machine cylinder experiment.
  run(5, 600.0, [](std::string& what) {
    const auto cfg = harness::default_config();
    const auto r = harness::experiment(cfg);
    const auto& ob = r.machines[0];
    const auto& obp = r.machines[1];
    const double n = static_cast<double>(ob.map.size());
    const double conv_a = located(ob.map) / n, conv_b = located(obp.map) / n;
    what = fmt("RMS deviation %.2f%% / %.2f%% of span (bound 5%%), converged %.0f%% / %.0f%% (bound 90%%)",
               100 * r.report.rms_ds1 / r.report.span1, 100 * r.report.rms_ds2 / r.report.span2, 100 * conv_a,
               100 * conv_b);
    what += fmt(", %.0f and %.0f segments, %.0f and %.0f measurements", static_cast<double>(ob.series.segments.size()),
                static_cast<double>(obp.series.segments.size()), static_cast<double>(ob.series.width()),
                static_cast<double>(obp.series.width()));
    return r.report.relative_rms() <= 0.05 && conv_a >= 0.9 && conv_b >= 0.9 && ob.series.width() == 6 &&
           obp.series.width() == 8 && ob.series.segments.size() == 18274 && obp.series.segments.size() == 17674;
  });

  // 6. Constant speed v = 1: c = v^2 I / 2, and locate gives affine coordinates.
  run(6, 120.0, [](std::string& what) {
    auto cfg = config::flat_plane_config();
    cfg.world.constant_speed = true;
    cfg.world.speed = 1.0;
    const double ref = 0.5 * cfg.world.speed * cfg.world.speed;
    const std::size_t segments = 1000000;
    const auto cells = intrinsic_cells(cfg.world, segments, cfg.seed, cfg.machines[0].statistics.cells, 1000, ref);
    const auto r = harness::experiment(cfg);
    const auto truth = affine_truth(cfg);
    const auto e = truth_error(r.machines[0].map, truth, truth.size());
    what = fmt("worst cell %.2f%% diagonal, %.2f%% off-diagonal of 0.5 (bound 5%%); ", 100 * cells.diag,
               100 * cells.off);
    what += fmt("near-identity locate vs affine RMS %.2f%% / %.2f%% of span (bound 2%%), %.0f located", 100 * e.rel1,
                100 * e.rel2, static_cast<double>(e.located));
    return cells.cells > 0 && cells.diag <= 0.05 && cells.off <= 0.05 && e.located == truth.size() &&
           std::max(e.rel1, e.rel2) <= 0.02;
  });

  // 7. dt * 3 on the flat-plane experiment leaves every location unchanged.
  run(7, 120.0, [](std::string& what) {
    const auto cfg = config::flat_plane_config();
    const auto surface = cfg.world.patch();
    const auto probes = harness::probe_points(cfg);
    double worst = 0.0;
    std::size_t compared = 0, mismatched = 0;
    for (std::size_t i = 0; i < cfg.machines.size(); ++i) {
      const auto& m = cfg.machines[i];
      const auto traj = harness::simulate(cfg.world, m.segments, harness::trajectory_seed(cfg.seed, i));
      const auto suite = sensors::make_suite(m.suite, surface);
      const auto series = sensors::measure_trajectory(suite, traj);
      auto slow = series;
      slow.dt *= 3.0;
      for (auto& seg : slow.segments) seg.t0 *= 3.0;
      const auto a = harness::locate_tests(harness::fit_machine(m, series), m, suite, probes.anchors, probes.tests);
      const auto b = harness::locate_tests(harness::fit_machine(m, slow), m, suite, probes.anchors, probes.tests);
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j].location.has_value() != b[j].location.has_value()) ++mismatched;
        if (!a[j].location || !b[j].location) continue;
        ++compared;
        worst = std::max({worst, std::abs(a[j].location->s1 - b[j].location->s1),
                          std::abs(a[j].location->s2 - b[j].location->s2)});
      }
    }
    const double tol = cfg.machines[0].geometry.tolerance;
    what = fmt("%.0f locations, max |ds| %.2e (bound: solver tolerance %.0e), %.0f convergence mismatches",
               static_cast<double>(compared), worst, tol, static_cast<double>(mismatched));
    return compared > 0 && mismatched == 0 && worst <= tol;
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
