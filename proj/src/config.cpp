#include "geomap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "geomap/errors.hpp"

namespace geomap::config {

using nlohmann::json;
using harness::ExperimentConfig;
using harness::MachineConfig;

namespace {

// Reads the members of one JSON object, remembering which were consumed so
// leftovers can be reported as unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail("unknown key '" + key + "'");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void number(const std::string& key, double& out, double lo = -1e300, double hi = 1e300) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    out = v.get<double>();
    if (!(out >= lo && out <= hi)) fail(key, "out of range");
  }

  template <class Int>
  void integer(const std::string& key, Int& out, long long lo, long long hi) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi) fail(key, "out of range");
    out = static_cast<Int>(x);
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    out = v.get<std::string>();
  }

  template <int N>
  void vector(const std::string& key, Eigen::Matrix<double, N, 1>& out) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_array() || v.size() != N) fail(key, "expected " + std::to_string(N) + " numbers");
    for (int i = 0; i < N; ++i) {
      if (!v[static_cast<std::size_t>(i)].is_number()) fail(key, "expected numbers");
      out[i] = v[static_cast<std::size_t>(i)].get<double>();
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: " + path(key) + ": " + what);
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config: " + (where_.empty() ? std::string("top level") : where_) + ": " + what);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_suite(const json& j, const std::string& where, sensors::SuiteSpec& s) {
  Reader r(j, where);
  if (r.has("preset")) {
    std::string preset;
    r.string("preset", preset);
    const int cameras = s.cameras;
    const auto seed = s.seed;
    if (preset == "default") s = sensors::SuiteSpec{};
    else if (preset == "near_identity") s = sensors::SuiteSpec::near_identity(cameras, seed);
    else if (preset == "warped") s = sensors::SuiteSpec::warped(cameras, seed);
    else if (preset == "fourier") s = sensors::SuiteSpec::fourier(cameras, seed);
    else r.fail("preset", "unknown preset '" + preset + "'");
    s.cameras = cameras;
    s.seed = seed;
  }
  if (r.has("kind")) {
    std::string kind;
    r.string("kind", kind);
    try {
      s.kind = sensors::readout_kind_from_string(kind);
    } catch (const ConfigError&) {
      r.fail("kind", "expected 'distorted' or 'fourier'");
    }
  }
  r.integer("cameras", s.cameras, 1, 64);
  r.seed("seed", s.seed);
  r.number("distance_min", s.distance_min, 0.1);
  r.number("distance_max", s.distance_max, 0.1);
  r.number("view_cone", s.view_cone, 0.0, 89.0);
  r.number("aim_jitter", s.aim_jitter, 0.0, 45.0);
  r.number("rotation", s.rotation, 0.0, 180.0);
  r.number("scale_min", s.scale_min, 1e-3);
  r.number("scale_max", s.scale_max, 1e-3);
  r.number("skew", s.skew, 0.0, 1.0);
  r.number("translation", s.translation, 0.0);
  r.number("quadratic", s.quadratic, 0.0);
  r.number("wave_min", s.wave_min, 0.0);
  r.number("wave_max", s.wave_max, 0.0);
  r.number("min_stretch", s.min_stretch, 0.0, 1.0);
  if (s.distance_max < s.distance_min) r.fail("distance_max", "below distance_min");
  if (s.scale_max < s.scale_min) r.fail("scale_max", "below scale_min");
  if (s.wave_max < s.wave_min) r.fail("wave_max", "below wave_min");
}

void read_machine(const json& j, const std::string& where, MachineConfig& m) {
  Reader r(j, where);
  r.string("name", m.name);
  if (m.name.empty()) r.fail("name", "must not be empty");
  for (char c : m.name)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') r.fail("name", "use letters, digits, '_' or '-'");
  r.integer("segments", m.segments, 1, 100000000);
  if (r.has("suite")) read_suite(r.at("suite"), r.path("suite"), m.suite);
  if (r.has("embedding")) {
    Reader e(r.at("embedding"), r.path("embedding"));
    e.integer("k", m.embedding.k, 2, 1000);
    if (e.has("d")) {
      const json& d = e.at("d");
      if (d.is_string() && d.get<std::string>() == "auto") m.embedding.d = 0;
      else e.integer("d", m.embedding.d, 1, 100);
    }
    e.number("reg", m.embedding.reg, 0.0);
    e.integer("max_training", m.embedding.max_training, 100, 1000000);
    if (m.embedding.d > 0 && m.embedding.k <= m.embedding.d) e.fail("k", "must exceed d");
  }
  if (r.has("statistics")) {
    Reader s(r.at("statistics"), r.path("statistics"));
    s.integer("cells", m.statistics.cells, 2, 1000);
    s.number("expand", m.statistics.expand, 0.0, 10.0);
    s.integer("support_threshold", m.statistics.support_threshold, 1, 1000000000);
    s.number("shrinkage", m.statistics.shrinkage, 0.0, 1.0);
    s.number("bandwidth", m.statistics.bandwidth, 0.0, 100.0);
    s.integer("smoothing_order", m.statistics.smoothing_order, 0, 1);
    s.number("condition_cap", m.statistics.condition_cap, 1.0);
  }
  if (r.has("geometry")) {
    Reader g(r.at("geometry"), r.path("geometry"));
    g.number("fd_fraction", m.geometry.fd_fraction, 1e-6, 1.0);
    g.number("substep_fraction", m.geometry.substep_fraction, 1e-6, 1.0);
    g.number("tolerance", m.geometry.tolerance, 1e-15, 1.0);
    g.integer("max_iterations", m.geometry.max_iterations, 1, 100000);
    g.number("jacobian_step", m.geometry.jacobian_step, 1e-12, 1.0);
  }
}

ExperimentConfig read(const json& j) {
  ExperimentConfig cfg = harness::default_config();
  Reader r(j, "");
  r.seed("seed", cfg.seed);
  if (r.has("world")) {
    auto& w = cfg.world;
    Reader wr(r.at("world"), "world");
    if (wr.has("surface")) {
      std::string s;
      wr.string("surface", s);
      if (s == "cylinder") w.surface = world::SurfaceKind::cylinder;
      else if (s == "plane") w.surface = world::SurfaceKind::plane;
      else wr.fail("surface", "expected 'cylinder' or 'plane'");
    }
    wr.number("radius", w.radius, 1e-6);
    wr.vector("lower", w.lower);
    wr.vector("upper", w.upper);
    wr.vector("pose_degrees", w.pose_degrees);
    wr.vector("translation", w.translation);
    if (wr.has("motion")) {
      std::string s;
      wr.string("motion", s);
      if (s == "boltzmann") w.constant_speed = false;
      else if (s == "constant_speed") w.constant_speed = true;
      else wr.fail("motion", "expected 'boltzmann' or 'constant_speed'");
    }
    wr.number("kT", w.kT, 1e-300);
    wr.number("mass", w.mass, 1e-300);
    wr.number("speed", w.speed, 0.0);
    wr.number("duration", w.duration, 1e-300);
    wr.number("dt", w.dt, 1e-300);
    if (w.duration < 2.0 * w.dt) wr.fail("duration", "must be at least 2 dt");
    if (!(w.upper[0] > w.lower[0] && w.upper[1] > w.lower[1])) wr.fail("upper", "must exceed lower");
  }
  if (r.has("layout")) {
    Reader lr(r.at("layout"), "layout");
    lr.integer("grid", cfg.layout.grid, 1, 100);
    lr.number("coverage", cfg.layout.coverage, 1e-6, 1.0);
    lr.number("anchor_length", cfg.layout.anchor_length, 1e-6, 1.0);
    lr.vector("extra", cfg.layout.extra);
  }
  if (r.has("machines")) {
    const json& ms = r.at("machines");
    if (!ms.is_array() || ms.size() != 2) r.fail("machines", "expected a list of two machines");
    const auto defaults = cfg.machines;
    for (std::size_t i = 0; i < 2; ++i) {
      cfg.machines[i] = defaults[i];
      read_machine(ms[i], "machines[" + std::to_string(i) + "]", cfg.machines[i]);
    }
    if (cfg.machines[0].name == cfg.machines[1].name) r.fail("machines", "machine names must differ");
  }
  return cfg;
}

json vec_json(const auto& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json machine_json(const MachineConfig& m) {
  const auto& s = m.suite;
  json suite = {{"kind", sensors::to_string(s.kind)}, {"cameras", s.cameras}, {"seed", s.seed},
                {"distance_min", s.distance_min}, {"distance_max", s.distance_max}, {"view_cone", s.view_cone},
                {"aim_jitter", s.aim_jitter}, {"rotation", s.rotation}, {"scale_min", s.scale_min},
                {"scale_max", s.scale_max}, {"skew", s.skew}, {"translation", s.translation},
                {"quadratic", s.quadratic}, {"wave_min", s.wave_min}, {"wave_max", s.wave_max},
                {"min_stretch", s.min_stretch}};
  json emb = {{"k", m.embedding.k}, {"reg", m.embedding.reg}, {"max_training", m.embedding.max_training}};
  emb["d"] = m.embedding.d > 0 ? json(m.embedding.d) : json("auto");
  const auto& st = m.statistics;
  json stats = {{"cells", st.cells}, {"expand", st.expand}, {"support_threshold", st.support_threshold},
                {"shrinkage", st.shrinkage}, {"bandwidth", st.bandwidth}, {"smoothing_order", st.smoothing_order},
                 {"condition_cap", st.condition_cap}};
  const auto& g = m.geometry;
  json geo = {{"fd_fraction", g.fd_fraction}, {"substep_fraction", g.substep_fraction}, {"tolerance", g.tolerance},
              {"max_iterations", g.max_iterations}, {"jacobian_step", g.jacobian_step}};
  return {{"name", m.name}, {"segments", m.segments}, {"suite", suite},
          {"embedding", emb}, {"statistics", stats}, {"geometry", geo}};
}

}  // namespace

ExperimentConfig parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return read(j);
}

ExperimentConfig load(const std::string& path_or_name) {
  if (path_or_name == "default") return harness::default_config();
  if (path_or_name == "flat_plane") return flat_plane_config();
  std::ifstream in(path_or_name, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read '" + path_or_name + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string dump(const ExperimentConfig& cfg) {
  const auto& w = cfg.world;
  json world = {{"surface", w.surface == world::SurfaceKind::cylinder ? "cylinder" : "plane"},
                {"radius", w.radius},
                {"lower", vec_json(w.lower)},
                {"upper", vec_json(w.upper)},
                {"pose_degrees", vec_json(w.pose_degrees)},
                {"translation", vec_json(w.translation)},
                {"motion", w.constant_speed ? "constant_speed" : "boltzmann"},
                {"kT", w.kT},
                {"mass", w.mass},
                {"speed", w.speed},
                {"duration", w.duration},
                {"dt", w.dt}};
  json layout = {{"grid", cfg.layout.grid}, {"coverage", cfg.layout.coverage},
                 {"anchor_length", cfg.layout.anchor_length}, {"extra", vec_json(cfg.layout.extra)}};
  json machines = json::array();
  for (const auto& m : cfg.machines) machines.push_back(machine_json(m));
  json j = {{"seed", cfg.seed}, {"world", world}, {"layout", layout}, {"machines", machines}};
  return j.dump(2) + "\n";
}

ExperimentConfig flat_plane_config() {
  ExperimentConfig cfg = harness::default_config();
  cfg.world.surface = world::SurfaceKind::plane;
  cfg.machines[0].name = "near_identity";
  cfg.machines[0].segments = 18000;
  cfg.machines[0].suite = sensors::SuiteSpec::near_identity(3, 3);
  cfg.machines[1].name = "warped";
  cfg.machines[1].segments = 18000;
  cfg.machines[1].suite = sensors::SuiteSpec::warped(3, 5);
  return cfg;
}

}  // namespace geomap::config
