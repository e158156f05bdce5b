#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "poolsim/csv.hpp"
#include "poolsim/scenario.hpp"

using namespace poolsim;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) { return csv::format_double(v); }

int cmd_run(const std::string& config_path, const std::string& out_override) {
  ScenarioConfig c = load_config_file(config_path);
  PreparedScenario p = prepare_scenario(c);
  int fleet = 0;
  if (c.fleet_size) {
    fleet = *c.fleet_size;
  } else {
    FleetSolution sol = solve_fleet_for_sr(p, c, c.capacity, *c.target_sr);
    std::cerr << "fleet search: " << sol.fleet_size << " vehicles, SR " << sol.achieved_sr << " after "
              << sol.probes.size() << " runs\n";
    if (!sol.within_tolerance)
      std::cerr << "warning: target SR " << *c.target_sr << " not reached within tolerance; SR over bounds ["
                << sol.sr_at_min << ", " << sol.sr_at_max << "]\n";
    fleet = sol.fleet_size;
  }
  RunResult r = run_prepared(p, c, fleet, c.capacity);
  fs::path dir = out_override.empty() ? fs::path(c.output_dir) / c.name : fs::path(out_override);
  write_outputs(r, p, c, dir);
  std::cout << summary_to_json(r.summary).dump() << '\n';
  std::cerr << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_override, int seeds) {
  ScenarioConfig c = load_config_file(config_path);
  fs::path root = out_override.empty() ? fs::path(c.output_dir) / c.name : fs::path(out_override);
  bool failed = false;
  for (int s = 0; s < seeds; ++s) {
    ScenarioConfig cs = c;
    cs.seed = c.seed + static_cast<std::uint64_t>(s);
    fs::path dir = seeds == 1 ? root : root / ("seed" + std::to_string(cs.seed));
    auto rows = run_sweep(cs, dir);
    for (const auto& r : rows) failed = failed || !r.ok;
    std::cerr << "wrote " << (dir / "sweep.csv").string() << '\n';
  }
  return failed ? 3 : 0;
}

int cmd_bench(int capacity, std::size_t instances, std::uint64_t seed, const std::string& config_path,
              const std::string& out_path) {
  ScenarioConfig c = config_path.empty() ? default_bench_config() : load_config_file(config_path);
  c.dispatch.routing = RoutingMode::nn;
  if (!c.fleet_size) {
    c.fleet_size = default_bench_config().fleet_size;
    c.target_sr.reset();
  }
  auto inst = collect_bench_instances(c, capacity, instances, seed);
  if (inst.size() < instances)
    std::cerr << "warning: only " << inst.size() << " instances with two or more passengers were found\n";
  BenchResult b = nn_benchmark(inst, capacity);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    file.open(p);
    if (!file) throw LoadError("cannot write " + out_path);
    out = &file;
  }
  const auto& k = b.counts;
  auto cons = k.consistency();
  *out << "capacity,method,instances,tp,tn,fp,fn,sp,accuracy,consistency,wall_s\n";
  for (int m = 0; m < 2; ++m)
    *out << capacity << ',' << (m == 0 ? "nn" : "enumeration") << ',' << b.instances << ',' << k.tp << ',' << k.tn
         << ',' << k.fp << ',' << k.fn << ',' << k.sp << ',' << fmt(k.accuracy()) << ','
         << (cons ? fmt(*cons) : std::string{}) << ',' << fmt(m == 0 ? b.nn_wall_s : b.enum_wall_s) << '\n';
  std::cerr << "accuracy " << k.accuracy() << ", consistency " << (cons ? fmt(*cons) : "undefined")
            << ", speedup " << (b.nn_wall_s > 0 ? b.enum_wall_s / b.nn_wall_s : 0.0) << "x\n";
  return 0;
}

int cmd_analyze(bool regression, const std::vector<std::string>& dirs, const std::string& config_path,
                const std::string& out_path) {
  ScenarioConfig c;
  if (!config_path.empty()) {
    c = load_config_file(config_path);
  } else {
    // Each run directory carries the config it was produced with.
    c = load_config_file((fs::path(dirs.at(0)) / "config.json").string());
  }
  RoadNetwork net = load_scenario_network(c);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw LoadError("cannot write " + out_path);
    out = &file;
  }
  if (regression) {
    *out << "pollutant,slope,r2,n\n";
    for (const auto& r : analyze_regression(dirs.at(0), dirs.at(1), net))
      *out << r.pollutant << ',' << fmt(r.fit.slope) << ',' << fmt(r.fit.r2) << ',' << r.fit.n << '\n';
  } else {
    auto params = load_coefficients_file(resolve_path(c, c.coefficients_path));
    SpeedEffect s = analyze_speed_effect(dirs.at(0), dirs.at(1), net, params);
    *out << "pollutant,saved_g,ns_total_g,saved_pct\n";
    for (std::size_t k = 0; k < s.pollutants.size(); ++k)
      *out << s.pollutants[k] << ',' << fmt(s.saved_g[k]) << ',' << fmt(s.ns_total_g[k]) << ','
           << fmt(s.saved_pct[k]) << '\n';
    if (s.edges_filled_with_mean > 0)
      std::cerr << s.edges_filled_with_mean << " edges had no NS traversal; the NS network mean speed was used\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ride-pooling fleet simulator with congestion and emission accounting"};
  app.require_subcommand(1);

  std::string config, out;
  auto* run = app.add_subcommand("run", "Run one scenario and write its output directory");
  run->add_option("config", config, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (default <output_dir>/<name>)");

  int seeds = 1;
  auto* sweep = app.add_subcommand("sweep", "Capacity x service-rate sweep with fleet sizing");
  sweep->add_option("config", config, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory (default <output_dir>/<name>)");
  sweep->add_option("--seeds", seeds, "Replicate the sweep over this many consecutive seeds")
      ->check(CLI::PositiveNumber);

  int capacity = 4;
  std::size_t instances = 2000;
  std::uint64_t seed = 1;
  auto* bench = app.add_subcommand("bench-nn", "Nearest-neighbour routing against exhaustive enumeration");
  bench->add_option("--capacity", capacity)->required()->check(CLI::Range(2, 8));
  bench->add_option("--instances", instances)->required();
  bench->add_option("--seed", seed)->required();
  bench->add_option("--config", config, "Scenario used to generate instances");
  bench->add_option("--out", out, "bench.csv path (default stdout)");

  std::vector<std::string> reg_dirs, speed_dirs;
  auto* analyze = app.add_subcommand("analyze", "Compare two run directories");
  auto* reg_opt = analyze->add_option("--regression", reg_dirs, "<dirA> <dirB>: per-edge emission regression")
                      ->expected(2);
  auto* speed_opt =
      analyze->add_option("--speed-effect", speed_dirs, "<dirNS> <dirRS>: speed-increase emission saving")
          ->expected(2);
  reg_opt->excludes(speed_opt);
  analyze->add_option("--config", config, "Scenario config (default: config.json in the first directory)");
  analyze->add_option("--out", out, "CSV path (default stdout)");

  GridSpec grid;
  NetworkDefaults defaults;
  std::string out_dir = ".";
  auto* mk = app.add_subcommand("make-grid", "Write a grid network as node and edge CSVs");
  mk->add_option("--rows", grid.rows);
  mk->add_option("--cols", grid.cols);
  mk->add_option("--spacing", grid.spacing_m);
  mk->add_option("--lanes", grid.lanes);
  mk->add_option("--base-density", defaults.base_density);
  mk->add_option("--out-dir", out_dir);

  auto* print = app.add_subcommand("print-config", "Print a config with every default filled in");
  print->add_option("config", config)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out);
    if (*sweep) return cmd_sweep(config, out, seeds);
    if (*bench) return cmd_bench(capacity, instances, seed, config, out);
    if (*analyze) {
      if (reg_dirs.empty() && speed_dirs.empty()) {
        std::cerr << "analyze: give --regression or --speed-effect\n";
        return 2;
      }
      bool regression = !reg_dirs.empty();
      return cmd_analyze(regression, regression ? reg_dirs : speed_dirs, config, out);
    }
    if (*mk) {
      RoadNetwork net = make_grid(grid, defaults);
      fs::create_directories(out_dir);
      std::ofstream nodes(fs::path(out_dir) / "nodes.csv"), edges(fs::path(out_dir) / "edges.csv");
      if (!nodes || !edges) throw LoadError("cannot write to " + out_dir);
      write_network(net, nodes, edges);
      return 0;
    }
    if (*print) {
      std::cout << config_to_json(load_config_file(config)).dump(2) << '\n';
      return 0;
    }
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
