#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>

#include <unistd.h>

#include "geomap/config.hpp"
#include "geomap/errors.hpp"
#include "geomap/harness.hpp"
#include "geomap/io.hpp"

using namespace geomap;
using namespace geomap::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
  static std::atomic<int> n{0};
  auto p = fs::temp_directory_path() / ("geomap_unit_" + std::to_string(::getpid()) + "_" + tag + "_" +
                                        std::to_string(n++));
  fs::remove_all(p);
  return p;
}

std::string source(const std::string& rel) { return std::string(GEOMAP_SOURCE_DIR) + "/" + rel; }

MapEntry at(long id, double s1, double s2) { return {id, geometry::RelativeLocation{s1, s2}, 0.0, {}}; }
MapEntry failed(long id) { return {id, std::nullopt, 1.0, "no solution"}; }

const ExperimentResult& default_run() {
  static const ExperimentResult r = experiment(default_config());
  return r;
}

// Proper crossing of segments pq and rs.
bool cross(const Vec2& p, const Vec2& q, const Vec2& r, const Vec2& s) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  };
  const double d1 = orient(p, q, r), d2 = orient(p, q, s), d3 = orient(r, s, p), d4 = orient(r, s, q);
  return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

}  // namespace

TEST_CASE("config files match the built-in configs") {
  CHECK(config::dump(config::load(source("configs/default.jsonc"))) == config::dump(default_config()));
  CHECK(config::dump(config::load(source("configs/flat_plane.jsonc"))) == config::dump(config::flat_plane_config()));
  CHECK(config::dump(config::load("default")) == config::dump(default_config()));
  // dump is a fixed point of parse
  const auto text = config::dump(config::flat_plane_config());
  CHECK(config::dump(config::parse(text)) == text);
}

TEST_CASE("config parsing") {
  auto cfg = config::parse(R"({
    // comment
    "seed": 42, /* block */
    "world": {"surface": "plane", "dt": 0.1}
  })");
  CHECK(cfg.seed == 42);
  CHECK(cfg.world.surface == world::SurfaceKind::plane);
  CHECK(cfg.world.dt == 0.1);
  CHECK(cfg.machines.size() == 2);
  CHECK(cfg.machines[0].segments == 18274);

  CHECK_THROWS_AS(config::parse("{"), ConfigError);
  CHECK_THROWS_AS(config::parse("[]"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"sed": 1})"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"world": {"dt": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"world": {"dt": -1}})"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"world": {"surface": "torus"}})"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"machines": [{"name": "a"}]})"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"machines": [{"name": "a"}, {"name": "a"}]})"), ConfigError);
  CHECK_THROWS_AS(config::parse(R"({"machines": [{"name": "a", "suite": {"preset": "odd"}}, {"name": "b"}]})"),
                  ConfigError);
  CHECK_THROWS_AS(config::load("/nonexistent/geomap.jsonc"), ConfigError);
  try {
    config::parse(R"({"machines": [{"name": "a", "statistics": {"cels": 3}}, {"name": "b"}]})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cels") != std::string::npos);
  }
}

TEST_CASE("layout") {
  const auto cfg = default_config();
  const auto surface = cfg.world.patch();
  const auto layout = make_layout(surface, cfg.layout);
  CHECK((layout.a - surface.center()).norm() == 0.0);
  CHECK((layout.b - layout.a).norm() == doctest::Approx(1.0 / 30));
  CHECK((layout.c - layout.a).norm() == doctest::Approx(1.0 / 30));
  CHECK(std::abs((layout.b - layout.a).dot(layout.c - layout.a)) < 1e-15);
  REQUIRE(layout.tests.size() == 50);
  for (std::size_t i = 0; i < 49; ++i) {
    CHECK(layout.tests[i].x() >= 0.1 - 1e-12);
    CHECK(layout.tests[i].x() <= 0.9 + 1e-12);
    CHECK(layout.tests[i].y() >= 0.1 - 1e-12);
    CHECK(layout.tests[i].y() <= 0.9 + 1e-12);
  }
  CHECK(layout.tests[1].x() > layout.tests[0].x());
  CHECK(layout.tests[7].y() > layout.tests[0].y());
  CHECK((layout.tests[49] - layout.a - cfg.layout.extra).norm() < 1e-15);

  LayoutConfig bad = cfg.layout;
  bad.coverage = 0.0;
  CHECK_THROWS_AS(make_layout(surface, bad), ConfigError);
}

TEST_CASE("trajectory seeds differ per machine and are stable") {
  CHECK(trajectory_seed(1, 0) != trajectory_seed(1, 1));
  CHECK(trajectory_seed(1, 0) != trajectory_seed(2, 0));
  CHECK(trajectory_seed(7, 1) == trajectory_seed(7, 1));
}

TEST_CASE("compare_maps") {
  Map a, b, c;
  for (int i = 0; i < 10; ++i) {
    a.push_back(at(i, 0.3 * i, -0.2 * i));
    b.push_back(at(i, 0.3 * i + 0.1, -0.2 * i));
  }
  auto same = compare_maps(a, a);
  CHECK(same.compared == 10);
  CHECK(same.rms_point == 0.0);
  CHECK(same.max_ds1 == 0.0);

  auto off = compare_maps(a, b);
  CHECK(off.rms_point == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(off.rms_ds1 == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(off.rms_ds2 == 0.0);
  CHECK(off.max_ds1 == doctest::Approx(0.1).epsilon(1e-12));

  auto back = compare_maps(b, a);
  CHECK(back.rms_ds1 == off.rms_ds1);
  CHECK(back.rms_ds2 == off.rms_ds2);
  CHECK(back.rms_point == off.rms_point);
  CHECK(back.max_ds1 == off.max_ds1);
  CHECK(back.span1 == off.span1);

  c = a;
  c[3] = failed(3);
  b[5] = failed(5);
  auto partial = compare_maps(c, b);
  CHECK(partial.compared == 8);
  CHECK(partial.failed_a == 1);
  CHECK(partial.failed_b == 1);

  c.pop_back();
  CHECK_THROWS_AS(compare_maps(a, c), PreconditionError);
  c = a;
  c[2].test_id = 99;
  CHECK_THROWS_AS(compare_maps(a, c), PreconditionError);
}

TEST_CASE("csv round trips") {
  MeasurementSeries s;
  s.dt = 0.05;
  s.segments.push_back({0, 0.0, {make_vec({0.1, 1.0 / 3}), make_vec({0.2, -1e-17})}});
  s.segments.push_back({0, 0.5, {make_vec({0.3, 0.4}), make_vec({0.5, 0.6})}});  // split piece of segment 0
  s.segments.push_back({4, 0.1, {make_vec({1e300, -2.5})}});
  const auto text = io::series_csv(s);
  CHECK(text.rfind("segment_id,t,m_1,m_2\n", 0) == 0);
  const auto back = io::parse_series_csv(text, 0.05);
  REQUIRE(back.segments.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.segments[i].id == s.segments[i].id);
    CHECK(back.segments[i].t0 == s.segments[i].t0);
    REQUIRE(back.segments[i].values.size() == s.segments[i].values.size());
    for (std::size_t j = 0; j < s.segments[i].values.size(); ++j)
      CHECK(back.segments[i].values[j] == s.segments[i].values[j]);
  }
  CHECK(io::series_csv(back) == text);
  CHECK_THROWS_AS(io::parse_series_csv("segment_id,t,m_1\n0,0,abc\n", 0.05), ConfigError);
  CHECK_THROWS_AS(io::parse_series_csv("id,t,m_1\n", 0.05), ConfigError);

  Map m{at(0, 1.5, -0.25), failed(1), at(2, 1.0 / 3, 30.0)};
  const auto mt = io::map_csv(m);
  CHECK(mt.rfind("test_id,s1,s2,converged,residual\n1,", 0) == std::string::npos);
  const auto mb = io::parse_map_csv(mt);
  REQUIRE(mb.size() == 3);
  CHECK(mb[0].location->s1 == 1.5);
  CHECK_FALSE(mb[1].location);
  CHECK(mb[2].location->s1 == 1.0 / 3);
  CHECK(io::map_csv(mb) == mt);
}

TEST_CASE("empty trajectory is a precondition error") {
  const auto cfg = default_config();
  world::WorldTrajectory empty;
  CHECK_THROWS_AS(run_machine(cfg.machines[0], cfg.world.patch(), empty), PreconditionError);
}

TEST_CASE("a ten-segment run succeeds and is flagged sparse") {
  const auto cfg = default_config();
  const auto surface = cfg.world.patch();
  const auto traj = simulate(cfg.world, 10, 3);
  const auto art = run_machine(cfg.machines[0], surface, traj);
  const auto& d = art.diagnostics;
  CHECK(d.input_segments == 10);
  CHECK(d.k >= cfg.machines[0].embedding.k);
  CHECK(d.sparse);
  CHECK(d.supported_cells * 2 < d.visited_cells);
  std::size_t total = 0;
  for (auto n : d.support_histogram) total += n;
  CHECK(total == art.covariance.grid.size());
}

TEST_CASE("stage errors carry the stage name") {
  auto cfg = default_config();
  cfg.machines[0].embedding.d = 5;  // wider than the data allows at this size
  const auto traj = simulate(cfg.world, 10, 3);
  try {
    run_machine(cfg.machines[0], cfg.world.patch(), traj);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "embed");
  }
}

TEST_CASE("full-size run") {
  const auto& r = default_run();
  REQUIRE(r.machines.size() == 2);
  for (const auto& m : r.machines) {
    const auto& d = m.artifacts.diagnostics;
    CHECK(d.dimension == 2);
    CHECK(d.support_fraction() >= 0.9);
    CHECK_FALSE(d.sparse);
    std::size_t ok = 0;
    for (const auto& e : m.map) ok += e.location ? 1 : 0;
    CHECK(ok == m.map.size());
  }
  CHECK(r.machines[0].series.segments.size() == 18274);
  CHECK(r.machines[1].series.segments.size() == 17674);
  CHECK(r.report.compared == 50);
}

TEST_CASE("tests placed on the anchors locate to the frame corners") {
  const auto cfg = default_config();
  const auto probes = probe_points(cfg);
  const auto surface = cfg.world.patch();
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& m = cfg.machines[i];
    const auto suite = sensors::make_suite(m.suite, surface);
    const auto map = locate_tests(default_run().machines[i].artifacts, m, suite, probes.anchors, probes.anchors);
    REQUIRE(map.size() == 3);
    const double expect[3][2] = {{0, 0}, {0, 1}, {1, 0}};
    // A is exact. B and C sit at the chord end, which the geodesic through the
    // learned chart misses by O(Gamma |AB|).
    for (std::size_t j = 0; j < 3; ++j) {
      REQUIRE(map[j].location);
      const double tol = j == 0 ? 1e-6 : 0.02;
      CHECK(std::abs(map[j].location->s1 - expect[j][0]) <= tol);
      CHECK(std::abs(map[j].location->s2 - expect[j][1]) <= tol);
    }
  }
}

TEST_CASE("cylinder test grid images are connected and do not fold") {
  const int g = default_config().layout.grid;
  for (const auto& m : default_run().machines) {
    std::vector<Vec2> p;
    for (int i = 0; i < g * g; ++i) {
      REQUIRE(m.map[i].location);
      p.emplace_back(m.map[i].location->s1, m.map[i].location->s2);
    }
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) {
        if (j + 1 < g) edges.emplace_back(i * g + j, i * g + j + 1);
        if (i + 1 < g) edges.emplace_back(i * g + j, (i + 1) * g + j);
      }
    int crossings = 0;
    for (std::size_t x = 0; x < edges.size(); ++x)
      for (std::size_t y = x + 1; y < edges.size(); ++y) {
        const auto [a, b] = edges[x];
        const auto [c, d] = edges[y];
        if (a == c || a == d || b == c || b == d) continue;
        crossings += cross(p[a], p[b], p[c], p[d]) ? 1 : 0;
      }
    CHECK(crossings == 0);
    // every grid cell keeps the same orientation
    int positive = 0, negative = 0;
    for (int i = 0; i + 1 < g; ++i)
      for (int j = 0; j + 1 < g; ++j) {
        const Vec2 du = p[i * g + j + 1] - p[i * g + j], dw = p[(i + 1) * g + j] - p[i * g + j];
        (du.x() * dw.y() - du.y() * dw.x() > 0 ? positive : negative)++;
      }
    CHECK((positive == 0 || negative == 0));
  }
}

TEST_CASE("report notes differing training sizes") {
  const auto& r = default_run();
  const auto text = io::report_csv(r.report, "ob", "ob_prime", 18274, 17674);
  CHECK(text.find("training sizes differ") != std::string::npos);
  CHECK(text.rfind("test_id,s1_a,s2_a,s1_b,s2_b,ds1,ds2\n", 0) == 0);
  const auto even = io::report_csv(r.report, "ob", "ob_prime", 100, 100);
  CHECK(even.find("training sizes differ") == std::string::npos);
}

TEST_CASE("fixed seeds give byte-identical files and stages can be re-fed") {
  auto cfg = default_config();
  cfg.machines[0].segments = 6000;
  cfg.machines[1].segments = 5800;
  const auto d1 = scratch("run"), d2 = scratch("run");
  const auto r1 = experiment(cfg, d1);
  experiment(cfg, d2);
  const std::vector<std::string> files = {io::trajectory_file("ob"), io::trajectory_file("ob_prime"),
                                          io::model_file("ob"),      io::model_file("ob_prime"),
                                          io::map_file("ob"),        io::map_file("ob_prime"),
                                          io::report_file,           io::config_file};
  for (const auto& f : files) {
    CAPTURE(f);
    REQUIRE(fs::exists(d1 / f));
    CHECK(io::read_file(d1 / f) == io::read_file(d2 / f));
  }
  for (const auto& f : fs::directory_iterator(d1)) CHECK(f.path().extension() != ".tmp");

  // Re-feed the written trajectory and model; the outputs must not change.
  const auto surface = cfg.world.patch();
  const auto probes = probe_points(cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& m = cfg.machines[i];
    const auto series = io::parse_series_csv(io::read_file(d1 / io::trajectory_file(m.name)), cfg.world.dt);
    const auto art = fit_machine(m, series);
    CHECK(io::artifacts_json(art) == io::read_file(d1 / io::model_file(m.name)));
    const auto loaded = io::parse_artifacts_json(io::read_file(d1 / io::model_file(m.name)));
    const auto suite = sensors::make_suite(m.suite, surface);
    const auto map = locate_tests(loaded, m, suite, probes.anchors, probes.tests);
    CHECK(io::map_csv(map) == io::read_file(d1 / io::map_file(m.name)));
  }
  CHECK(config::dump(config::load((d1 / io::config_file).string())) == config::dump(cfg));
  CHECK(r1.report.compared > 0);
  fs::remove_all(d1);
  fs::remove_all(d2);
}
