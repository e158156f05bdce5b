#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolsim/demand.hpp"
#include "poolsim/emissions.hpp"
#include "poolsim/engine.hpp"
#include "poolsim/metrics.hpp"
#include "poolsim/netgraph.hpp"

namespace poolsim {

struct DemandSpec {
  std::string source = "generator";  // "generator" or "file"
  std::string file;
  double downsample_fraction = 1.0;  // probability that a request is kept
  DemandProfile profile;
  std::optional<BBox> hot_zone;  // unset: central 40% of the network extent
};

struct FleetSearch {
  double tolerance = 0.02;
  int min_fleet = 1;
  int max_fleet = 2000;
  int initial_fleet = 16;
};

struct SweepSpec {
  std::vector<int> capacities{1, 2, 4, 6};
  std::vector<double> sr_levels{0.5, 0.8};
};

struct ScenarioConfig {
  std::string name = "scenario";
  // Empty paths select the built-in grid.
  std::string nodes_path;
  std::string edges_path;
  GridSpec grid;
  NetworkDefaults network_defaults;
  DemandSpec demand;
  std::string coefficients_path = "data/copert_euro4_petrol_small.csv";
  double step_s = 2.0;
  double horizon_s = 7200.0;
  double travel_time_refresh_s = 2.0;
  double df_log_interval_s = 60.0;
  bool drain = true;
  double max_drain_s = 14400.0;
  DispatchConfig dispatch;
  int capacity = 1;
  std::optional<int> fleet_size;
  std::optional<double> target_sr;
  FleetSearch fleet_search;
  SweepSpec sweep;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::filesystem::path base_dir;  // relative input paths resolve against this
};

// Unknown keys, wrong types and a missing or doubled fleet_size / target_sr
// are rejected with LoadError.
ScenarioConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const ScenarioConfig& c);
ScenarioConfig load_config_file(const std::string& path);

std::string resolve_path(const ScenarioConfig& c, const std::string& p);
BBox default_hot_zone(const RoadNetwork& net);

struct PreparedScenario {
  RoadNetwork net;
  std::vector<Request> requests;
  std::vector<PollutantParams> params;
  std::size_t dropped_degenerate = 0;
  std::vector<std::string> rejected_rows;
  BBox hot_zone;
};

RoadNetwork load_scenario_network(const ScenarioConfig& c);
PreparedScenario prepare_scenario(const ScenarioConfig& c);

SimConfig sim_config(const ScenarioConfig& c, int fleet_size, int capacity);

struct RunResult {
  SimOutput sim;
  EmissionLedger emissions;
  MetricLedger ledger;
  RegionSplit regions;
  Summary summary;
  std::string digest;
};

RunResult run_prepared(PreparedScenario& p, const ScenarioConfig& c, int fleet_size, int capacity,
                       const ProblemObserver* observer = nullptr);

// traversals.csv, df.csv, requests.csv, summary.json, emissions.csv, plus
// diagnostics.json.
void write_outputs(const RunResult& r, const PreparedScenario& p, const ScenarioConfig& c,
                   const std::filesystem::path& dir);

struct FleetProbe {
  int fleet_size = 0;
  Summary summary;
  double df_inside = 0.0;
  double df_outside = 0.0;
  std::string digest;
};

struct FleetSolution {
  int fleet_size = 0;
  double achieved_sr = 0.0;
  bool within_tolerance = false;
  double sr_at_min = 0.0;
  double sr_at_max = 0.0;
  std::vector<FleetProbe> probes;  // every run made, in probe order
};

// Doubling from fleet_search.initial_fleet until the target is bracketed, then
// bisection; the simulation seed stays fixed throughout. A fleet at or below
// min_fleet that already meets the target is returned as is. `memo` shares
// runs between searches on the same scenario and capacity without changing
// which probes a search reports.
FleetSolution solve_fleet_for_sr(PreparedScenario& p, const ScenarioConfig& c, int capacity, double target,
                                 std::map<int, FleetProbe>* memo = nullptr);

// Linear interpolation of a probe quantity at `target` SR between the two
// probes bracketing it; outside the probed range the nearest probe is used.
double interpolate_at_sr(const std::vector<FleetProbe>& probes, double target,
                         double (*field)(const FleetProbe&));

struct SweepRow {
  int capacity = 0;
  double target_sr = 0.0;
  int fleet_size = 0;
  double achieved_sr = 0.0;
  bool ok = false;
  std::string error;
  // Interpolated at target_sr.
  double def = 0, pef_co2 = 0, pef_co = 0, pef_nox = 0, pef_hc = 0, df = 0, avg_scheduled = 0;
  double df_inside = 0, df_outside = 0;
  // Relative change against capacity 1 at the same target, e.g. -0.3 = 30% lower.
  double d_def = 0, d_pef_co2 = 0, d_pef_co = 0, d_pef_nox = 0, d_pef_hc = 0, d_df = 0;
  double d_df_inside = 0, d_df_outside = 0;
  std::vector<FleetProbe> probes;
  std::filesystem::path run_dir;
};

// Runs every (capacity, SR) cell and writes sweep.csv and sweep_probes.csv
// under the output directory; each cell's chosen run is written to
// <output>/<name>_cap<c>_sr<pct>/.
std::vector<SweepRow> run_sweep(const ScenarioConfig& c, const std::filesystem::path& out_dir);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

// Readers for the output files.
std::vector<TraversalEvent> read_traversals_csv(const std::filesystem::path& path, const RoadNetwork& net);
std::vector<Request> read_requests_csv(const std::filesystem::path& path, const RoadNetwork& net);
// pollutant -> per-edge grams (dense edge order)
std::map<std::string, std::vector<double>> read_emissions_csv(const std::filesystem::path& path,
                                                               const RoadNetwork& net);

struct RegressionReport {
  std::string pollutant;
  RegressionResult fit;
};
// x = per-edge grams in dirA, y = dirA minus dirB.
std::vector<RegressionReport> analyze_regression(const std::filesystem::path& dir_a,
                                                 const std::filesystem::path& dir_b, const RoadNetwork& net);

SpeedEffect analyze_speed_effect(const std::filesystem::path& dir_ns, const std::filesystem::path& dir_rs,
                                 const RoadNetwork& net, const std::vector<PollutantParams>& params);

// Route problems with at least two passengers, reservoir-sampled from the
// evaluations of NN-mode simulations on the scenario.
std::vector<RouteProblem> collect_bench_instances(const ScenarioConfig& c, int capacity, std::size_t count,
                                                  std::uint64_t seed);
ScenarioConfig default_bench_config();
ScenarioConfig default_grid_config();

}  // namespace poolsim
