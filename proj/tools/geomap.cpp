// geomap: run the two-machine mapping experiment, whole or stage by stage.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "geomap/config.hpp"
#include "geomap/errors.hpp"
#include "geomap/harness.hpp"
#include "geomap/io.hpp"
#include "geomap/sensors.hpp"

namespace fs = std::filesystem;
using namespace geomap;

namespace {

struct Common {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::string format = "csv";
  std::string out;
};

harness::ExperimentConfig load_config(const Common& c) {
  auto cfg = config::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  return c.out;
}

// Called only once every output is ready, so failures leave nothing behind.
void write_all(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  fs::create_directories(dir);
  for (const auto& [name, content] : files) io::atomic_write(dir / name, content);
}

std::vector<std::string> selected(const harness::ExperimentConfig& cfg, const std::string& machine) {
  if (!machine.empty()) {
    harness::find_machine(cfg, machine);
    return {machine};
  }
  std::vector<std::string> names;
  for (const auto& m : cfg.machines) names.push_back(m.name);
  return names;
}

void print_report(const harness::AgreementReport& r) {
  std::cout << "compared " << r.compared << "\n"
            << "failed_a " << r.failed_a << "\n"
            << "failed_b " << r.failed_b << "\n"
            << "rms_ds1 " << io::format_double(r.rms_ds1) << "\n"
            << "rms_ds2 " << io::format_double(r.rms_ds2) << "\n"
            << "rms_point " << io::format_double(r.rms_point) << "\n"
            << "max_ds1 " << io::format_double(r.max_ds1) << "\n"
            << "max_ds2 " << io::format_double(r.max_ds2) << "\n"
            << "relative_rms " << io::format_double(r.relative_rms()) << "\n";
}

int cmd_simulate(const Common& c, const std::string& machine) {
  const auto cfg = load_config(c);
  const auto names = selected(cfg, machine);
  const auto surface = cfg.world.patch();
  const auto dir = out_dir(c);
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& name : names) {
    const std::size_t i = harness::machine_index(cfg, name);
    const auto& m = cfg.machines[i];
    const auto traj = harness::simulate(cfg.world, m.segments, harness::trajectory_seed(cfg.seed, i));
    TruncationReport report;
    const auto series = [&] {
      try {
        const auto suite = sensors::make_suite(m.suite, surface);
        return sensors::measure_trajectory(suite, traj, &report);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError("measure", e.what());
      }
    }();
    files.emplace_back(io::trajectory_file(name), io::series_csv(series));
    std::cerr << name << ": " << series.segments.size() << " segments (" << report.failed_points
              << " unmeasurable points)\n";
  }
  files.emplace_back(io::config_file, config::dump(cfg));
  write_all(dir, files);
  return 0;
}

int cmd_fit(const Common& c, const std::string& machine, const std::string& trajectory) {
  const auto cfg = load_config(c);
  const auto& m = harness::find_machine(cfg, machine);
  const auto series = io::parse_series_csv(io::read_file(trajectory), cfg.world.dt);
  const auto dir = out_dir(c);
  const auto art = harness::fit_machine(m, series);
  write_all(dir, {{io::model_file(machine), io::artifacts_json(art)}});
  const auto& d = art.diagnostics;
  std::cerr << machine << ": d=" << d.dimension << " supported " << d.supported_cells << "/" << d.visited_cells
            << (d.sparse ? " (sparse)" : "") << "\n";
  return 0;
}

int cmd_locate(const Common& c, const std::string& machine, const std::string& model) {
  const auto cfg = load_config(c);
  const auto& m = harness::find_machine(cfg, machine);
  const auto dir = out_dir(c);
  const auto art = io::parse_artifacts_json(io::read_file(model));
  const auto surface = cfg.world.patch();
  const auto probes = harness::probe_points(cfg);
  const auto suite = sensors::make_suite(m.suite, surface);
  const auto map = harness::locate_tests(art, m, suite, probes.anchors, probes.tests);
  write_all(dir, {{io::map_file(machine), io::map_csv(map)}});
  std::size_t ok = 0;
  for (const auto& e : map) ok += e.location ? 1 : 0;
  std::cerr << machine << ": located " << ok << "/" << map.size() << "\n";
  return 0;
}

int cmd_compare(const Common& c, bool have_config, const std::string& a, const std::string& b) {
  const auto map_a = io::parse_map_csv(io::read_file(a));
  const auto map_b = io::parse_map_csv(io::read_file(b));
  const auto report = harness::compare_maps(map_a, map_b);
  print_report(report);
  if (!c.out.empty()) {
    std::string name_a = fs::path(a).stem().string(), name_b = fs::path(b).stem().string();
    std::size_t seg_a = 0, seg_b = 0;
    if (have_config) {
      const auto cfg = load_config(c);
      name_a = cfg.machines[0].name;
      name_b = cfg.machines[1].name;
      seg_a = cfg.machines[0].segments;
      seg_b = cfg.machines[1].segments;
    }
    write_all(out_dir(c), {{io::report_file, io::report_csv(report, name_a, name_b, seg_a, seg_b)}});
  }
  return 0;
}

int cmd_experiment(const Common& c) {
  const auto cfg = load_config(c);
  const auto dir = out_dir(c);  // created by the harness after both machines finish
  const auto result = harness::experiment(cfg, dir);
  for (const auto& run : result.machines) {
    const auto& d = run.artifacts.diagnostics;
    std::size_t ok = 0;
    for (const auto& e : run.map) ok += e.location ? 1 : 0;
    std::cerr << run.name << ": " << run.series.segments.size() << " segments, supported " << d.supported_cells
              << "/" << d.visited_cells << ", located " << ok << "/" << run.map.size() << "\n";
  }
  print_report(result.report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Map a stimulus space from the motion statistics of two sensor suites"};
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--config", c.config, "config file, or a built-in name (default, flat_plane)");
  app.add_option("--seed", c.seed, "experiment seed; overrides GEOMAP_SEED and the config")->envname("GEOMAP_SEED");
  app.add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv"}));
  app.add_option("--out", c.out, "output directory");

  std::string machine, input, model, map_a, map_b;

  auto* simulate = app.add_subcommand("simulate", "sample trajectories and write measurement CSVs");
  simulate->add_option("--machine", machine, "only this machine");

  auto* fit = app.add_subcommand("fit", "fit a machine model from a trajectory CSV");
  fit->add_option("--machine", machine)->required();
  fit->add_option("--trajectory", input, "trajectory CSV")->required()->check(CLI::ExistingFile);

  auto* locate = app.add_subcommand("locate", "locate the test points with a fitted model");
  locate->add_option("--machine", machine)->required();
  locate->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "compare two map CSVs");
  compare->add_option("map_a", map_a)->required()->check(CLI::ExistingFile);
  compare->add_option("map_b", map_b)->required()->check(CLI::ExistingFile);

  auto* experiment = app.add_subcommand("experiment", "run both machines end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*simulate) return cmd_simulate(c, machine);
    if (*fit) return cmd_fit(c, machine, input);
    if (*locate) return cmd_locate(c, machine, model);
    if (*compare) return cmd_compare(c, app.get_option("--config")->count() > 0, map_a, map_b);
    if (*experiment) return cmd_experiment(c);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    std::cerr << "geomap: " << (what.rfind("config", 0) == 0 ? "" : "config: ") << what << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << "geomap: stage " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "geomap: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
