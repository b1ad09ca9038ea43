#include "geomap/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "geomap/config.hpp"
#include "geomap/errors.hpp"

namespace geomap::io {

using nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = line.find(sep, start);
    if (at == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, at - start));
    start = at + 1;
  }
}

std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

long parse_long(std::string_view s) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("csv: bad integer '" + std::string(s) + "'");
  return v;
}

json matrix_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", a}};
}

Mat matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (data.size() != static_cast<std::size_t>(rows * cols)) throw ConfigError("model: matrix size mismatch");
  Mat m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = data[k++].get<double>();
  return m;
}

json grid_json(const GridSpec& g) {
  return {{"lower", std::vector<double>(g.lower().data(), g.lower().data() + g.lower().size())},
          {"upper", std::vector<double>(g.upper().data(), g.upper().data() + g.upper().size())},
          {"cells", g.cells()}};
}

GridSpec grid_from(const json& j) {
  const auto lo = j.at("lower").get<std::vector<double>>(), hi = j.at("upper").get<std::vector<double>>();
  return GridSpec(Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                  Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size())),
                  j.at("cells").get<std::vector<int>>());
}

json tensors_json(const std::vector<Mat>& ts) {
  json a = json::array();
  for (const auto& t : ts) a.push_back(matrix_json(t));
  return a;
}

std::vector<Mat> tensors_from(const json& j) {
  std::vector<Mat> out;
  for (const auto& t : j) out.push_back(matrix_from(t));
  return out;
}

json truncation_json(const TruncationReport& r) {
  return {{"input_segments", r.input_segments}, {"output_segments", r.output_segments},
          {"failed_points", r.failed_points},   {"split_segments", r.split_segments},
          {"dropped_segments", r.dropped_segments}, {"short_pieces", r.short_pieces}};
}

TruncationReport truncation_from(const json& j) {
  TruncationReport r;
  r.input_segments = j.at("input_segments").get<std::size_t>();
  r.output_segments = j.at("output_segments").get<std::size_t>();
  r.failed_points = j.at("failed_points").get<std::size_t>();
  r.split_segments = j.at("split_segments").get<std::size_t>();
  r.dropped_segments = j.at("dropped_segments").get<std::size_t>();
  r.short_pieces = j.at("short_pieces").get<std::size_t>();
  return r;
}

std::string optional_field(const std::optional<geometry::RelativeLocation>& s, double geometry::RelativeLocation::*m) {
  return s ? format_double((*s).*m) : std::string();
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf, p);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("csv: bad number '" + std::string(s) + "'");
  return v;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename '" + tmp.string() + "': " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string series_csv(const MeasurementSeries& series) {
  std::string out = "segment_id,t";
  for (Eigen::Index i = 1; i <= series.width(); ++i) out += ",m_" + std::to_string(i);
  out += '\n';
  for (const auto& seg : series.segments)
    for (std::size_t i = 0; i < seg.values.size(); ++i) {
      out += std::to_string(seg.id);
      out += ',';
      out += format_double(seg.t0 + static_cast<double>(i) * series.dt);
      for (Eigen::Index k = 0; k < seg.values[i].size(); ++k) {
        out += ',';
        out += format_double(seg.values[i][k]);
      }
      out += '\n';
    }
  return out;
}

MeasurementSeries parse_series_csv(const std::string& text, double dt) {
  if (!(dt > 0.0)) throw PreconditionError("parse_series_csv: dt must be positive");
  const auto rows = lines(text);
  if (rows.empty()) throw ConfigError("trajectory csv: missing header");
  const auto header = split(rows[0], ',');
  if (header.size() < 3 || header[0] != "segment_id" || header[1] != "t")
    throw ConfigError("trajectory csv: expected header segment_id,t,m_1..");
  const std::size_t m = header.size() - 2;
  MeasurementSeries s;
  s.dt = dt;
  double last_t = 0.0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split(rows[r], ',');
    if (f.size() != m + 2) throw ConfigError("trajectory csv: row " + std::to_string(r) + " has the wrong width");
    const long id = parse_long(f[0]);
    const double t = parse_double(f[1]);
    Vec v(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) v[static_cast<Eigen::Index>(k)] = parse_double(f[k + 2]);
    const bool fresh = s.segments.empty() || s.segments.back().id != id || std::abs(t - last_t - dt) > 0.5 * dt;
    if (fresh) s.segments.push_back({id, t, {}});
    s.segments.back().values.push_back(std::move(v));
    last_t = t;
  }
  return s;
}

std::string map_csv(const harness::Map& map) {
  std::string out = "test_id,s1,s2,converged,residual\n";
  for (const auto& e : map) {
    out += std::to_string(e.test_id) + ',' + optional_field(e.location, &geometry::RelativeLocation::s1) + ',' +
           optional_field(e.location, &geometry::RelativeLocation::s2) + ',' + (e.location ? "1" : "0") + ',' +
           format_double(e.residual) + '\n';
  }
  return out;
}

harness::Map parse_map_csv(const std::string& text) {
  const auto rows = lines(text);
  if (rows.empty() || rows[0] != "test_id,s1,s2,converged,residual")
    throw ConfigError("map csv: expected header test_id,s1,s2,converged,residual");
  harness::Map out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split(rows[r], ',');
    if (f.size() != 5) throw ConfigError("map csv: row " + std::to_string(r) + " needs 5 fields");
    harness::MapEntry e;
    e.test_id = parse_long(f[0]);
    if (f[3] == "1") e.location = geometry::RelativeLocation{parse_double(f[1]), parse_double(f[2])};
    else if (f[3] != "0") throw ConfigError("map csv: converged must be 0 or 1");
    e.residual = parse_double(f[4]);
    out.push_back(std::move(e));
  }
  return out;
}

std::string report_csv(const harness::AgreementReport& report, const std::string& name_a, const std::string& name_b,
                       std::size_t segments_a, std::size_t segments_b) {
  std::string out = "test_id,s1_a,s2_a,s1_b,s2_b,ds1,ds2\n";
  using geometry::RelativeLocation;
  for (const auto& row : report.rows) {
    std::string ds1, ds2;
    if (row.a && row.b) {
      ds1 = format_double(row.b->s1 - row.a->s1);
      ds2 = format_double(row.b->s2 - row.a->s2);
    }
    out += std::to_string(row.test_id) + ',' + optional_field(row.a, &RelativeLocation::s1) + ',' +
           optional_field(row.a, &RelativeLocation::s2) + ',' + optional_field(row.b, &RelativeLocation::s1) + ',' +
           optional_field(row.b, &RelativeLocation::s2) + ',' + ds1 + ',' + ds2 + '\n';
  }
  auto line = [&](const std::string& key, const std::string& value) { out += "# " + key + ',' + value + '\n'; };
  line("machine_a", name_a);
  line("machine_b", name_b);
  line("compared", std::to_string(report.compared));
  line("failed_a", std::to_string(report.failed_a));
  line("failed_b", std::to_string(report.failed_b));
  line("rms_ds1", format_double(report.rms_ds1));
  line("rms_ds2", format_double(report.rms_ds2));
  line("rms_point", format_double(report.rms_point));
  line("max_ds1", format_double(report.max_ds1));
  line("max_ds2", format_double(report.max_ds2));
  line("span1", format_double(report.span1));
  line("span2", format_double(report.span2));
  line("relative_rms", format_double(report.relative_rms()));
  if (segments_a || segments_b) {
    line("segments_a", std::to_string(segments_a));
    line("segments_b", std::to_string(segments_b));
    if (segments_a != segments_b)
      line("note", "training sizes differ (" + std::to_string(segments_a) + " vs " + std::to_string(segments_b) +
                       " segments)");
  }
  return out;
}

std::string artifacts_json(const harness::MachineArtifacts& art) {
  const auto& m = art.model;
  const auto& c = art.covariance;
  const auto& d = art.diagnostics;
  json model = {{"k", m.k()}, {"reg", m.reg()}, {"eigenvalues", m.eigenvalues()},
                {"training", matrix_json(m.training())}, {"embedded", matrix_json(m.embedded())}};
  json cov = {{"grid", grid_json(c.grid)}, {"counts", c.counts}, {"cov", tensors_json(c.cov)},
              {"supported", c.supported}, {"filled", c.filled}, {"support_threshold", c.support_threshold}};
  json metric = {{"grid", grid_json(art.metric.grid())}, {"tensors", tensors_json(art.metric.tensors())},
                 {"valid", art.metric.valid()}};
  json diag = {{"input_segments", d.input_segments},
               {"input_points", d.input_points},
               {"embedding", truncation_json(d.embedding)},
               {"training_points", d.training_points},
               {"k", d.k},
               {"dimension", d.dimension},
               {"velocity_samples", d.velocity_samples},
               {"outside_grid", d.outside_grid},
               {"visited_cells", d.visited_cells},
               {"supported_cells", d.supported_cells},
               {"filled_cells", d.filled_cells},
               {"support_histogram", d.support_histogram},
               {"sparse", d.sparse}};
  return json{{"model", model}, {"covariance", cov}, {"metric", metric}, {"diagnostics", diag}}.dump(1) + "\n";
}

harness::MachineArtifacts parse_artifacts_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto& jm = j.at("model");
    embedding::EmbeddingModel model(matrix_from(jm.at("training")), matrix_from(jm.at("embedded")),
                                    jm.at("k").get<int>(), jm.at("reg").get<double>(),
                                    jm.at("eigenvalues").get<std::vector<double>>());
    const auto& jc = j.at("covariance");
    statistics::CovarianceField cov;
    cov.grid = grid_from(jc.at("grid"));
    cov.counts = jc.at("counts").get<std::vector<std::size_t>>();
    cov.cov = tensors_from(jc.at("cov"));
    cov.supported = jc.at("supported").get<std::vector<bool>>();
    cov.filled = jc.at("filled").get<std::vector<bool>>();
    cov.support_threshold = jc.at("support_threshold").get<std::size_t>();
    const auto& jg = j.at("metric");
    geometry::MetricField metric(grid_from(jg.at("grid")), tensors_from(jg.at("tensors")),
                                 jg.at("valid").get<std::vector<bool>>());
    const auto& jd = j.at("diagnostics");
    harness::Diagnostics d;
    d.input_segments = jd.at("input_segments").get<std::size_t>();
    d.input_points = jd.at("input_points").get<std::size_t>();
    d.embedding = truncation_from(jd.at("embedding"));
    d.training_points = jd.at("training_points").get<std::size_t>();
    d.k = jd.at("k").get<int>();
    d.dimension = jd.at("dimension").get<int>();
    d.velocity_samples = jd.at("velocity_samples").get<std::size_t>();
    d.outside_grid = jd.at("outside_grid").get<std::size_t>();
    d.visited_cells = jd.at("visited_cells").get<std::size_t>();
    d.supported_cells = jd.at("supported_cells").get<std::size_t>();
    d.filled_cells = jd.at("filled_cells").get<std::size_t>();
    d.support_histogram = jd.at("support_histogram").get<std::vector<std::size_t>>();
    d.sparse = jd.at("sparse").get<bool>();
    return harness::MachineArtifacts{std::move(model), std::move(cov), std::move(metric), std::move(d)};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }
}

std::string trajectory_file(const std::string& machine) { return "trajectory_" + machine + ".csv"; }
std::string model_file(const std::string& machine) { return "model_" + machine + ".json"; }
std::string map_file(const std::string& machine) { return "map_" + machine + ".csv"; }

void write_experiment(const std::filesystem::path& dir, const harness::ExperimentConfig& cfg,
                      const harness::ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  atomic_write(dir / config_file, config::dump(cfg));
  for (const auto& m : result.machines) {
    atomic_write(dir / trajectory_file(m.name), series_csv(m.series));
    atomic_write(dir / model_file(m.name), artifacts_json(m.artifacts));
    atomic_write(dir / map_file(m.name), map_csv(m.map));
  }
  const auto& a = result.machines.at(0);
  const auto& b = result.machines.at(1);
  atomic_write(dir / report_file,
               report_csv(result.report, a.name, b.name, a.trajectory.segments.size(), b.trajectory.segments.size()));
}

}  // namespace geomap::io
