#include "geomap/harness.hpp"

#include <cmath>
#include <future>
#include <random>

#include "geomap/errors.hpp"
#include "geomap/io.hpp"

namespace geomap::harness {

namespace {

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::vector<Vec3> lab_points(const world::SurfacePatch& surface, const std::vector<Vec2>& pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(world::lab_position(surface, p));
  return out;
}

}  // namespace

world::SurfacePatch WorldConfig::patch() const {
  if (!(upper[0] > lower[0] && upper[1] > lower[1])) throw ConfigError("world: patch upper must exceed lower");
  const auto pose = world::Pose::from_euler_degrees(pose_degrees[0], pose_degrees[1], pose_degrees[2], translation);
  auto s = surface == world::SurfaceKind::cylinder ? world::SurfacePatch::cylinder(radius, pose)
                                                   : world::SurfacePatch::plane(pose);
  s.lower = lower;
  s.upper = upper;
  return s;
}

world::MotionSpec WorldConfig::motion() const {
  if (constant_speed) return world::ConstantSpeedSpec{speed};
  return world::BoltzmannSpec{kT, mass, {}};
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;

  MachineConfig ob;
  ob.name = "ob";
  ob.segments = 18274;
  ob.suite = sensors::SuiteSpec{};
  ob.suite.seed = 1;

  MachineConfig ob_prime;
  ob_prime.name = "ob_prime";
  ob_prime.segments = 17674;
  ob_prime.suite = sensors::SuiteSpec::fourier(4, 2);

  cfg.machines = {ob, ob_prime};
  return cfg;
}

std::uint64_t trajectory_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x7a11u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Layout make_layout(const world::SurfacePatch& surface, const LayoutConfig& cfg) {
  if (cfg.grid < 1) throw ConfigError("layout.grid must be positive");
  if (!(cfg.coverage > 0.0 && cfg.coverage <= 1.0)) throw ConfigError("layout.coverage must lie in (0, 1]");
  if (!(cfg.anchor_length > 0.0)) throw ConfigError("layout.anchor_length must be positive");
  const Vec2 lo = surface.lower, ext = surface.extent();
  Layout out;
  out.a = surface.center();
  out.c = out.a + Vec2(cfg.anchor_length * ext[0], 0.0);
  out.b = out.a + Vec2(0.0, cfg.anchor_length * ext[1]);
  const double margin = 0.5 * (1.0 - cfg.coverage);
  for (int i = 0; i < cfg.grid; ++i)
    for (int j = 0; j < cfg.grid; ++j) {
      const double fu = cfg.grid == 1 ? 0.5 : margin + cfg.coverage * j / (cfg.grid - 1);
      const double fw = cfg.grid == 1 ? 0.5 : margin + cfg.coverage * i / (cfg.grid - 1);
      out.tests.push_back(lo + Vec2(fu * ext[0], fw * ext[1]));
    }
  out.tests.push_back(out.a + cfg.extra);
  return out;
}

Probes probe_points(const ExperimentConfig& cfg) {
  const auto surface = cfg.world.patch();
  const Layout layout = make_layout(surface, cfg.layout);
  return {lab_points(surface, {layout.a, layout.b, layout.c}), lab_points(surface, layout.tests)};
}

std::size_t machine_index(const ExperimentConfig& cfg, const std::string& name) {
  for (std::size_t i = 0; i < cfg.machines.size(); ++i)
    if (cfg.machines[i].name == name) return i;
  throw ConfigError("no machine named '" + name + "'");
}

const MachineConfig& find_machine(const ExperimentConfig& cfg, const std::string& name) {
  return cfg.machines[machine_index(cfg, name)];
}

double Diagnostics::support_fraction() const {
  return visited_cells == 0 ? 0.0 : static_cast<double>(supported_cells) / static_cast<double>(visited_cells);
}

world::WorldTrajectory simulate(const WorldConfig& world, std::size_t segments, std::uint64_t seed) {
  return staged("simulate", [&] {
    return world::sample_trajectory(world.patch(), world.motion(), segments, world.duration, world.dt, seed);
  });
}

MachineArtifacts fit_machine(const MachineConfig& cfg, const MeasurementSeries& series) {
  Diagnostics diag;
  diag.input_segments = series.segments.size();
  diag.input_points = series.point_count();
  if (series.segments.empty()) throw StageError("embed", "empty measurement series");

  const auto& ep = cfg.embedding;
  // Small runs: fewer neighbours for the dimension estimate (it needs 10 k
  // points) and more for the fit when short segments leave the graph split.
  const std::size_t usable = std::min(diag.input_points, ep.max_training);
  const int k_dim = std::max(1, static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(ep.k), usable / 10)));
  diag.dimension = ep.d > 0 ? ep.d : staged("dimension", [&] {
    return embedding::estimate_dimension(series, k_dim, ep.max_training);
  });
  diag.k = ep.k;
  auto model = staged("embed", [&] {
    while (true) {
      try {
        return embedding::fit(series, diag.k, diag.dimension, ep.reg, ep.max_training);
      } catch (const DisconnectedGraphError&) {
        const int wider = std::min<int>(2 * diag.k, static_cast<int>(usable) - 1);
        if (usable > 2000 || wider <= diag.k) throw;
        diag.k = wider;
      }
    }
  });
  diag.training_points = static_cast<std::size_t>(model.embedded().cols());
  const auto chart = embedding::embed_series(model, series, &diag.embedding);

  auto covariance = staged("statistics", [&] {
    std::vector<statistics::VelocitySample> samples;
    for (const auto& seg : chart) {
      auto v = statistics::estimate_velocities(seg);
      samples.insert(samples.end(), v.begin(), v.end());
    }
    if (samples.empty()) throw PreconditionError("no velocity samples");
    const GridSpec grid = statistics::covering_grid(samples, cfg.statistics);
    statistics::CovarianceAccumulator acc(grid);
    acc.add(samples);
    diag.velocity_samples = acc.total();
    diag.outside_grid = acc.outside();
    const auto raw = acc.finish(cfg.statistics.support_threshold);
    diag.support_histogram.assign(5, 0);
    for (std::size_t n : raw.counts) {
      const std::size_t bin = n == 0 ? 0 : n < 20 ? 1 : n < 100 ? 2 : n < 1000 ? 3 : 4;
      ++diag.support_histogram[bin];
    }
    return statistics::smooth(raw, cfg.statistics.bandwidth, cfg.statistics.smoothing_order);
  });
  diag.visited_cells = covariance.visited_count();
  for (std::size_t i = 0; i < covariance.grid.size(); ++i) {
    if (covariance.counts[i] > 0 && covariance.supported[i]) ++diag.supported_cells;
    if (covariance.filled[i]) ++diag.filled_cells;
  }
  diag.sparse = diag.support_fraction() < 0.9;

  auto metric = staged("metric", [&] {
    return statistics::to_metric(covariance, cfg.statistics.shrinkage, cfg.statistics.condition_cap);
  });
  return MachineArtifacts{std::move(model), std::move(covariance), std::move(metric), std::move(diag)};
}

MachineArtifacts run_machine(const MachineConfig& cfg, const world::SurfacePatch& surface,
                             const world::WorldTrajectory& traj) {
  if (traj.segments.empty()) throw PreconditionError("run_machine: empty trajectory");
  const auto suite = staged("suite", [&] { return sensors::make_suite(cfg.suite, surface); });
  TruncationReport report;
  const auto series = staged("measure", [&] { return sensors::measure_trajectory(suite, traj, &report); });
  auto art = fit_machine(cfg, series);
  art.diagnostics.measurement = report;
  return art;
}

Map locate_tests(const MachineArtifacts& art, const MachineConfig& cfg, const sensors::SensorSuite& suite,
                 const std::vector<Vec3>& anchors, const std::vector<Vec3>& tests) {
  if (anchors.size() != 3) throw PreconditionError("locate_tests: need three anchors");
  const auto frame = staged("anchors", [&] {
    auto at = [&](const Vec3& p) { return art.model.embed(sensors::measure(suite, p)); };
    geometry::AnchorFrame f{at(anchors[0]), at(anchors[1]), at(anchors[2])};
    geometry::validate_frame(f);
    return f;
  });

  Map out(tests.size());
  std::vector<ChartPoint> located;
  std::vector<std::size_t> slot;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    out[i].test_id = static_cast<long>(i);
    try {
      located.push_back(art.model.embed(sensors::measure(suite, tests[i])));
      slot.push_back(i);
    } catch (const Error& e) {
      out[i].error = e.what();
    }
  }
  const geometry::FieldConnection connection(art.metric, cfg.geometry);
  const auto outcomes = geometry::map_grid(located, frame, connection, cfg.geometry);
  for (std::size_t j = 0; j < outcomes.size(); ++j) {
    auto& e = out[slot[j]];
    e.location = outcomes[j].location;
    e.residual = outcomes[j].residual;
    e.error = outcomes[j].error;
  }
  return out;
}

double AgreementReport::relative_rms() const {
  auto rel = [](double rms, double span) { return span > 0.0 ? rms / span : (rms > 0.0 ? INFINITY : 0.0); };
  return std::max(rel(rms_ds1, span1), rel(rms_ds2, span2));
}

AgreementReport compare_maps(const Map& a, const Map& b) {
  if (a.size() != b.size()) throw PreconditionError("compare_maps: maps differ in length");
  AgreementReport r;
  double lo1 = INFINITY, hi1 = -INFINITY, lo2 = INFINITY, hi2 = -INFINITY;
  double sum1 = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].test_id != b[i].test_id) throw PreconditionError("compare_maps: test ids differ");
    r.rows.push_back({a[i].test_id, a[i].location, b[i].location});
    if (!a[i].location) ++r.failed_a;
    if (!b[i].location) ++r.failed_b;
    if (!a[i].location || !b[i].location) continue;
    const auto& p = *a[i].location;
    const auto& q = *b[i].location;
    const double d1 = q.s1 - p.s1, d2 = q.s2 - p.s2;
    sum1 += d1 * d1;
    sum2 += d2 * d2;
    r.max_ds1 = std::max(r.max_ds1, std::abs(d1));
    r.max_ds2 = std::max(r.max_ds2, std::abs(d2));
    lo1 = std::min({lo1, p.s1, q.s1});
    hi1 = std::max({hi1, p.s1, q.s1});
    lo2 = std::min({lo2, p.s2, q.s2});
    hi2 = std::max({hi2, p.s2, q.s2});
    ++r.compared;
  }
  if (r.compared > 0) {
    const double n = static_cast<double>(r.compared);
    r.rms_ds1 = std::sqrt(sum1 / n);
    r.rms_ds2 = std::sqrt(sum2 / n);
    r.rms_point = std::sqrt((sum1 + sum2) / n);
    r.span1 = hi1 - lo1;
    r.span2 = hi2 - lo2;
  }
  return r;
}

ExperimentResult experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out) {
  if (cfg.machines.size() != 2) throw ConfigError("experiment needs exactly two machines");
  const auto surface = cfg.world.patch();
  const Probes probes = probe_points(cfg);

  auto run = [&](std::size_t i) {
    const MachineConfig& m = cfg.machines[i];
    auto traj = simulate(cfg.world, m.segments, trajectory_seed(cfg.seed, i));
    const auto suite = staged("suite", [&] { return sensors::make_suite(m.suite, surface); });
    TruncationReport report;
    auto series = staged("measure", [&] { return sensors::measure_trajectory(suite, traj, &report); });
    auto art = fit_machine(m, series);
    art.diagnostics.measurement = report;
    auto map = locate_tests(art, m, suite, probes.anchors, probes.tests);
    return MachineRun{m.name, std::move(traj), std::move(series), std::move(art), std::move(map)};
  };
  auto second = std::async(std::launch::async, run, std::size_t{1});
  MachineRun first = run(0);
  ExperimentResult result;
  result.machines.push_back(std::move(first));
  result.machines.push_back(second.get());
  result.report = compare_maps(result.machines[0].map, result.machines[1].map);

  if (out) io::write_experiment(*out, cfg, result);
  return result;
}

}  // namespace geomap::harness
