#include "poolsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "poolsim/csv.hpp"

namespace poolsim {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads keys from one JSON object and rejects whatever was not consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw LoadError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw LoadError(where_ + "." + key + ": wrong type");
    }
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw LoadError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

BBox read_bbox(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  BBox b;
  r.read("lon_min", b.lon_min);
  r.read("lat_min", b.lat_min);
  r.read("lon_max", b.lon_max);
  r.read("lat_max", b.lat_max);
  r.finish();
  if (!(b.lon_min <= b.lon_max && b.lat_min <= b.lat_max)) throw LoadError(where + ": empty box");
  return b;
}

ordered_json bbox_json(const BBox& b) {
  ordered_json j;
  j["lon_min"] = b.lon_min;
  j["lat_min"] = b.lat_min;
  j["lon_max"] = b.lon_max;
  j["lat_max"] = b.lat_max;
  return j;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw LoadError("config: " + msg);
}

std::string fmt(double v) { return csv::format_double(v); }

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string{}; }

}  // namespace

ScenarioConfig config_from_json(const json& j, const fs::path& base_dir) {
  ScenarioConfig c;
  c.base_dir = base_dir;
  ObjectReader top(j, "config");
  top.read("name", c.name);

  if (top.has("network")) {
    ObjectReader r(top.child("network"), "network");
    r.read("nodes", c.nodes_path);
    r.read("edges", c.edges_path);
    if (r.has("grid")) {
      require(c.nodes_path.empty() && c.edges_path.empty(), "network: give either CSV paths or a grid");
      ObjectReader g(r.child("grid"), "network.grid");
      g.read("rows", c.grid.rows);
      g.read("cols", c.grid.cols);
      g.read("spacing_m", c.grid.spacing_m);
      g.read("lanes", c.grid.lanes);
      g.read("origin_lon", c.grid.origin_lon);
      g.read("origin_lat", c.grid.origin_lat);
      g.finish();
    }
    r.finish();
    require(c.nodes_path.empty() == c.edges_path.empty(), "network: nodes and edges go together");
  }
  if (top.has("network_defaults")) {
    ObjectReader r(top.child("network_defaults"), "network_defaults");
    r.read("free_flow_kmh", c.network_defaults.free_flow_kmh);
    r.read("jam_density", c.network_defaults.jam_density);
    r.read("base_density", c.network_defaults.base_density);
    r.read("speed_floor_kmh", c.network_defaults.speed_floor_kmh);
    r.finish();
  }
  if (top.has("demand")) {
    ObjectReader r(top.child("demand"), "demand");
    r.read("source", c.demand.source);
    r.read("file", c.demand.file);
    r.read("downsample_fraction", c.demand.downsample_fraction);
    if (r.has("profile")) {
      ObjectReader p(r.child("profile"), "demand.profile");
      p.read("base_rate", c.demand.profile.base_rate);
      p.read("hot_zone_weight", c.demand.profile.hot_zone_weight);
      p.read("target_mean_distance_m", c.demand.profile.target_mean_distance_m);
      if (p.has("hot_zone")) c.demand.hot_zone = read_bbox(p.child("hot_zone"), "demand.profile.hot_zone");
      p.finish();
    }
    r.finish();
  }
  if (top.has("emissions")) {
    ObjectReader r(top.child("emissions"), "emissions");
    r.read("coefficients", c.coefficients_path);
    r.finish();
  }
  if (top.has("sim")) {
    ObjectReader r(top.child("sim"), "sim");
    r.read("batch_interval_s", c.step_s);
    r.read("horizon_s", c.horizon_s);
    r.read("travel_time_refresh_s", c.travel_time_refresh_s);
    r.read("df_log_interval_s", c.df_log_interval_s);
    r.read("drain", c.drain);
    r.read("max_drain_s", c.max_drain_s);
    r.finish();
  }
  if (top.has("dispatch")) {
    ObjectReader r(top.child("dispatch"), "dispatch");
    auto& d = c.dispatch;
    r.read("max_wait_s", d.constraints.max_wait_s);
    r.read("max_detour_ratio", d.constraints.max_detour_ratio);
    r.read("matching_radius_s", d.matching_radius_s);
    std::string routing = "nn";
    r.read("routing", routing);
    if (routing == "nn")
      d.routing = RoutingMode::nn;
    else if (routing == "enumeration")
      d.routing = RoutingMode::enumeration;
    else
      throw LoadError("config: dispatch.routing must be nn or enumeration");
    std::string objective = "max_served";
    r.read("objective", objective);
    require(objective == "max_served", "dispatch.objective must be max_served");
    r.read("value_epsilon", d.value_epsilon);
    r.read("max_vehicles_per_request", d.max_vehicles_per_request);
    r.read("max_requests_per_vehicle", d.max_requests_per_vehicle);
    r.read("max_trips_per_vehicle", d.max_trips_per_vehicle);
    r.read("assignment_node_limit", d.assignment_node_limit);
    r.finish();
  }
  top.read("capacity", c.capacity);
  if (top.has("fleet_size")) {
    int f = 0;
    top.read("fleet_size", f);
    c.fleet_size = f;
  }
  if (top.has("target_sr")) {
    double t = 0;
    top.read("target_sr", t);
    c.target_sr = t;
  }
  if (top.has("fleet_search")) {
    ObjectReader r(top.child("fleet_search"), "fleet_search");
    r.read("tolerance", c.fleet_search.tolerance);
    r.read("min_fleet", c.fleet_search.min_fleet);
    r.read("max_fleet", c.fleet_search.max_fleet);
    r.read("initial_fleet", c.fleet_search.initial_fleet);
    r.finish();
  }
  if (top.has("sweep")) {
    ObjectReader r(top.child("sweep"), "sweep");
    r.read("capacities", c.sweep.capacities);
    r.read("sr_levels", c.sweep.sr_levels);
    r.finish();
  }
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);
  top.finish();

  require(!c.name.empty() && c.name.find('/') == std::string::npos, "name must be a plain non-empty string");
  require(c.fleet_size.has_value() != c.target_sr.has_value(), "exactly one of fleet_size and target_sr");
  if (c.fleet_size) require(*c.fleet_size >= 1, "fleet_size must be at least 1");
  if (c.target_sr) require(*c.target_sr > 0 && *c.target_sr < 1, "target_sr must lie in (0, 1)");
  require(c.capacity >= 1, "capacity must be at least 1");
  require(c.step_s > 0, "batch_interval_s must be positive");
  require(c.horizon_s >= 0, "horizon_s must be non-negative");
  double k = c.horizon_s / c.step_s;
  require(std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, k), "horizon_s must be a multiple of batch_interval_s");
  require(c.travel_time_refresh_s >= 0 && c.df_log_interval_s >= 0 && c.max_drain_s >= 0,
          "sim intervals must be non-negative");
  require(c.demand.source == "generator" || c.demand.source == "file", "demand.source must be generator or file");
  require(c.demand.source != "file" || !c.demand.file.empty(), "demand.file is required for a file source");
  require(c.demand.downsample_fraction > 0 && c.demand.downsample_fraction <= 1,
          "downsample_fraction must lie in (0, 1]");
  require(c.demand.profile.base_rate >= 0, "base_rate must be non-negative");
  require(c.demand.profile.hot_zone_weight >= 0 && c.demand.profile.hot_zone_weight <= 1,
          "hot_zone_weight must lie in [0, 1]");
  require(c.demand.profile.target_mean_distance_m > 0, "target_mean_distance_m must be positive");
  require(c.dispatch.constraints.max_wait_s >= 0 && c.dispatch.constraints.max_detour_ratio >= 0,
          "constraints must be non-negative");
  require(c.dispatch.matching_radius_s >= 0, "matching_radius_s must be non-negative");
  require(c.dispatch.max_vehicles_per_request >= 1 && c.dispatch.max_requests_per_vehicle >= 1 &&
              c.dispatch.max_trips_per_vehicle >= 1 && c.dispatch.assignment_node_limit >= 1,
          "dispatch caps must be positive");
  require(c.fleet_search.tolerance > 0, "fleet_search.tolerance must be positive");
  require(c.fleet_search.min_fleet >= 1 && c.fleet_search.min_fleet <= c.fleet_search.max_fleet,
          "fleet_search bounds are inverted");
  require(c.fleet_search.initial_fleet >= 1, "fleet_search.initial_fleet must be positive");
  for (int cap : c.sweep.capacities) require(cap >= 1, "sweep capacities must be at least 1");
  for (double s : c.sweep.sr_levels) require(s > 0 && s < 1, "sweep sr_levels must lie in (0, 1)");
  c.demand.profile.horizon_s = c.horizon_s;
  return c;
}

ordered_json config_to_json(const ScenarioConfig& c) {
  ordered_json j;
  j["name"] = c.name;
  ordered_json net;
  if (!c.nodes_path.empty()) {
    net["nodes"] = c.nodes_path;
    net["edges"] = c.edges_path;
  } else {
    ordered_json g;
    g["rows"] = c.grid.rows;
    g["cols"] = c.grid.cols;
    g["spacing_m"] = c.grid.spacing_m;
    g["lanes"] = c.grid.lanes;
    g["origin_lon"] = c.grid.origin_lon;
    g["origin_lat"] = c.grid.origin_lat;
    net["grid"] = g;
  }
  j["network"] = net;
  ordered_json nd;
  nd["free_flow_kmh"] = c.network_defaults.free_flow_kmh;
  nd["jam_density"] = c.network_defaults.jam_density;
  nd["base_density"] = c.network_defaults.base_density;
  nd["speed_floor_kmh"] = c.network_defaults.speed_floor_kmh;
  j["network_defaults"] = nd;
  ordered_json dem;
  dem["source"] = c.demand.source;
  if (!c.demand.file.empty()) dem["file"] = c.demand.file;
  dem["downsample_fraction"] = c.demand.downsample_fraction;
  ordered_json prof;
  prof["base_rate"] = c.demand.profile.base_rate;
  prof["hot_zone_weight"] = c.demand.profile.hot_zone_weight;
  prof["target_mean_distance_m"] = c.demand.profile.target_mean_distance_m;
  if (c.demand.hot_zone) prof["hot_zone"] = bbox_json(*c.demand.hot_zone);
  dem["profile"] = prof;
  j["demand"] = dem;
  j["emissions"] = ordered_json{{"coefficients", c.coefficients_path}};
  ordered_json sim;
  sim["batch_interval_s"] = c.step_s;
  sim["horizon_s"] = c.horizon_s;
  sim["travel_time_refresh_s"] = c.travel_time_refresh_s;
  sim["df_log_interval_s"] = c.df_log_interval_s;
  sim["drain"] = c.drain;
  sim["max_drain_s"] = c.max_drain_s;
  j["sim"] = sim;
  const auto& d = c.dispatch;
  ordered_json dis;
  dis["max_wait_s"] = d.constraints.max_wait_s;
  dis["max_detour_ratio"] = d.constraints.max_detour_ratio;
  dis["matching_radius_s"] = d.matching_radius_s;
  dis["routing"] = d.routing == RoutingMode::nn ? "nn" : "enumeration";
  dis["objective"] = "max_served";
  dis["value_epsilon"] = d.value_epsilon;
  dis["max_vehicles_per_request"] = d.max_vehicles_per_request;
  dis["max_requests_per_vehicle"] = d.max_requests_per_vehicle;
  dis["max_trips_per_vehicle"] = d.max_trips_per_vehicle;
  dis["assignment_node_limit"] = d.assignment_node_limit;
  j["dispatch"] = dis;
  j["capacity"] = c.capacity;
  if (c.fleet_size) j["fleet_size"] = *c.fleet_size;
  if (c.target_sr) j["target_sr"] = *c.target_sr;
  ordered_json fsj;
  fsj["tolerance"] = c.fleet_search.tolerance;
  fsj["min_fleet"] = c.fleet_search.min_fleet;
  fsj["max_fleet"] = c.fleet_search.max_fleet;
  fsj["initial_fleet"] = c.fleet_search.initial_fleet;
  j["fleet_search"] = fsj;
  j["sweep"] = ordered_json{{"capacities", c.sweep.capacities}, {"sr_levels", c.sweep.sr_levels}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError(path + ": " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path());
}

std::string resolve_path(const ScenarioConfig& c, const std::string& p) {
  fs::path q(p);
  if (q.is_absolute() || c.base_dir.empty()) return q.string();
  return (c.base_dir / q).lexically_normal().string();
}

BBox default_hot_zone(const RoadNetwork& net) {
  double lon0 = std::numeric_limits<double>::infinity(), lon1 = -lon0, lat0 = lon0, lat1 = -lon0;
  for (const Node& n : net.nodes()) {
    lon0 = std::min(lon0, n.lon);
    lon1 = std::max(lon1, n.lon);
    lat0 = std::min(lat0, n.lat);
    lat1 = std::max(lat1, n.lat);
  }
  BBox b;
  b.lon_min = lon0 + 0.3 * (lon1 - lon0);
  b.lon_max = lon0 + 0.7 * (lon1 - lon0);
  b.lat_min = lat0 + 0.3 * (lat1 - lat0);
  b.lat_max = lat0 + 0.7 * (lat1 - lat0);
  return b;
}

RoadNetwork load_scenario_network(const ScenarioConfig& c) {
  if (c.nodes_path.empty()) return make_grid(c.grid, c.network_defaults);
  return load_network_files(resolve_path(c, c.nodes_path), resolve_path(c, c.edges_path), c.network_defaults);
}

PreparedScenario prepare_scenario(const ScenarioConfig& c) {
  PreparedScenario p;
  p.net = load_scenario_network(c);
  p.hot_zone = c.demand.hot_zone ? *c.demand.hot_zone : default_hot_zone(p.net);
  if (c.demand.source == "file") {
    LoadReport rep = load_requests_file(resolve_path(c, c.demand.file), p.net, c.step_s);
    p.requests = std::move(rep.requests);
    p.dropped_degenerate = rep.dropped_degenerate;
    p.rejected_rows = std::move(rep.rejected_rows);
  } else {
    DemandProfile prof = c.demand.profile;
    prof.horizon_s = c.horizon_s;
    prof.hot_zone = p.hot_zone;
    p.requests = generate_demand(prof, p.net, c.seed, c.step_s);
  }
  if (c.demand.downsample_fraction < 1.0)
    p.requests = downsample(p.requests, c.demand.downsample_fraction, splitmix64(c.seed ^ 0x5eed5eedULL));
  p.params = load_coefficients_file(resolve_path(c, c.coefficients_path));
  return p;
}

SimConfig sim_config(const ScenarioConfig& c, int fleet_size, int capacity) {
  SimConfig s;
  s.step_s = c.step_s;
  s.horizon_s = c.horizon_s;
  s.fleet_size = fleet_size;
  s.capacity = capacity;
  s.dispatch = c.dispatch;
  s.dispatch.constraints.capacity = capacity;
  s.seed = c.seed;
  s.travel_time_refresh_s = c.travel_time_refresh_s;
  s.df_log_interval_s = c.df_log_interval_s;
  s.drain = c.drain;
  s.max_drain_s = c.max_drain_s;
  return s;
}

RunResult run_prepared(PreparedScenario& p, const ScenarioConfig& c, int fleet_size, int capacity,
                       const ProblemObserver* observer) {
  SimConfig s = sim_config(c, fleet_size, capacity);
  s.observer = observer;
  RunResult r;
  r.sim = run_simulation(p.net, p.requests, s);
  r.emissions = accumulate(r.sim.traversals, p.net, p.params);
  r.ledger = build_ledger(r.sim, r.emissions);
  r.regions = region_split(r.sim, r.emissions, p.net, p.hot_zone);
  r.summary = summarize(r.ledger, fleet_size, capacity, c.seed);
  r.digest = event_log_digest(r.sim);
  return r;
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw LoadError("cannot write " + p.string());
  return out;
}

void write_traversals(const SimOutput& sim, const RoadNetwork& net, std::ostream& out) {
  out << "vehicle_id,edge_id,t_entry,t_exit,onboard\n";
  for (const TraversalEvent& ev : sim.traversals)
    out << ev.vehicle << ',' << net.edge(ev.edge).id << ',' << fmt(ev.t_entry) << ',' << fmt(ev.t_exit) << ','
        << ev.onboard << '\n';
}

void write_df(const SimOutput& sim, const RoadNetwork& net, std::ostream& out) {
  out << "t,edge_id,speed_kmh\n";
  for (const DfLogRow& r : sim.df_log)
    out << fmt(r.t) << ',' << net.edge(r.edge).id << ',' << fmt(r.speed_kmh) << '\n';
}

void write_request_states(const std::vector<Request>& reqs, const RoadNetwork& net, std::ostream& out) {
  out << "request_id,request_time,origin_node,dest_node,direct_time,direct_distance,state,assign_time,pickup_time,"
         "dropoff_time,vehicle_id\n";
  for (const Request& r : reqs)
    out << r.id << ',' << fmt(r.request_time) << ',' << net.node(r.origin).id << ',' << net.node(r.dest).id << ','
        << fmt(r.direct_time) << ',' << fmt(r.direct_distance) << ',' << to_string(r.state) << ','
        << opt_fmt(r.assign_time) << ',' << opt_fmt(r.pickup_time) << ',' << opt_fmt(r.dropoff_time) << ','
        << r.vehicle << '\n';
}

ordered_json diagnostics_json(const RunResult& r, const PreparedScenario& p) {
  const SimDiagnostics& d = r.sim.diag;
  ordered_json j;
  j["event_log_sha256"] = r.digest;
  j["requests"] = p.requests.size();
  j["requests_dropped_degenerate"] = p.dropped_degenerate;
  j["requests_rejected_rows"] = p.rejected_rows.size();
  j["batches"] = d.batches;
  j["drain_batches"] = d.drain_batches;
  j["end_time_s"] = d.end_time;
  j["trips_built"] = d.trips_built;
  j["assignments_not_proven_optimal"] = d.assignments_not_proven;
  j["wait_drift_violations"] = d.wait_drift_violations;
  j["detour_drift_violations"] = d.detour_drift_violations;
  j["density_audits"] = d.density_audits;
  j["snapshot_rebuilds"] = d.snapshot_rebuilds;
  j["stranded_vehicles"] = d.stranded_vehicles;
  j["max_onboard"] = d.max_onboard;
  j["emission_speed_clamps"] = r.emissions.clamped;
  j["vmt_km"] = r.ledger.vmt_km;
  j["pmd_km"] = r.ledger.pmd_km;
  auto region = [](const MetricLedger& m) {
    ordered_json o;
    o["served"] = m.served;
    o["total"] = m.total;
    o["vmt_km"] = m.vmt_km;
    o["pmd_km"] = m.pmd_km;
    o["df"] = m.df_count > 0 ? json(delay_factor(m)) : json(nullptr);
    return o;
  };
  j["hot_zone"] = region(r.regions.inside);
  j["outside"] = region(r.regions.outside);
  return j;
}

}  // namespace

void write_outputs(const RunResult& r, const PreparedScenario& p, const ScenarioConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "traversals.csv");
    write_traversals(r.sim, p.net, out);
  }
  {
    auto out = open_out(dir / "df.csv");
    write_df(r.sim, p.net, out);
  }
  {
    auto out = open_out(dir / "requests.csv");
    write_request_states(r.sim.requests, p.net, out);
  }
  {
    auto out = open_out(dir / "summary.json");
    out << summary_to_json(r.summary).dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "emissions.csv");
    write_emissions_csv(r.emissions, p.net, out);
  }
  {
    auto out = open_out(dir / "diagnostics.json");
    out << diagnostics_json(r, p).dump(2) << '\n';
  }
  {
    // Input paths made absolute so the copy works from the run directory.
    ScenarioConfig copy = c;
    auto absolute = [&](std::string& path) {
      if (!path.empty()) path = fs::absolute(resolve_path(c, path)).lexically_normal().string();
    };
    absolute(copy.nodes_path);
    absolute(copy.edges_path);
    absolute(copy.demand.file);
    absolute(copy.coefficients_path);
    auto out = open_out(dir / "config.json");
    out << config_to_json(copy).dump(2) << '\n';
  }
}

namespace {

FleetProbe probe(PreparedScenario& p, const ScenarioConfig& c, int fleet, int capacity) {
  RunResult r = run_prepared(p, c, fleet, capacity);
  FleetProbe fp;
  fp.fleet_size = fleet;
  fp.summary = r.summary;
  fp.df_inside = r.regions.inside.df_count > 0 ? delay_factor(r.regions.inside) : 1.0;
  fp.df_outside = r.regions.outside.df_count > 0 ? delay_factor(r.regions.outside) : 1.0;
  fp.digest = r.digest;
  return fp;
}

}  // namespace

FleetSolution solve_fleet_for_sr(PreparedScenario& p, const ScenarioConfig& c, int capacity, double target,
                                 std::map<int, FleetProbe>* memo) {
  if (!(target > 0 && target < 1)) throw LoadError("target SR must lie in (0, 1)");
  const FleetSearch& fsr = c.fleet_search;
  FleetSolution sol;
  std::map<int, double> sr_of;
  std::map<int, FleetProbe> local;
  if (!memo) memo = &local;
  auto run = [&](int fleet) {
    auto it = sr_of.find(fleet);
    if (it != sr_of.end()) return it->second;
    auto m = memo->find(fleet);
    if (m == memo->end()) m = memo->emplace(fleet, probe(p, c, fleet, capacity)).first;
    sol.probes.push_back(m->second);
    double sr = m->second.summary.sr;
    sr_of[fleet] = sr;
    return sr;
  };
  auto close = [&](double sr) { return std::abs(sr - target) <= fsr.tolerance; };

  // Bracket: lo has SR below target, hi at or above it.
  int lo = fsr.min_fleet, hi = -1;
  double sr_lo = run(lo);
  sol.sr_at_min = sr_lo;
  if (sr_lo >= target || lo == fsr.max_fleet) {
    sol.fleet_size = lo;
    sol.achieved_sr = sr_lo;
    sol.within_tolerance = close(sr_lo) || sr_lo >= target;
    sol.sr_at_max = sr_lo;
    return sol;
  }
  int f = std::clamp(fsr.initial_fleet, lo + 1, fsr.max_fleet);
  while (true) {
    double sr = run(f);
    if (sr >= target) {
      hi = f;
      break;
    }
    lo = f;
    if (f == fsr.max_fleet) break;
    f = std::min(fsr.max_fleet, f * 2);
  }
  if (hi < 0) {
    sol.fleet_size = lo;
    sol.achieved_sr = sr_of[lo];
    sol.within_tolerance = close(sol.achieved_sr);
    sol.sr_at_max = sol.achieved_sr;
    return sol;
  }
  while (!close(sr_of[hi]) && !close(sr_of[lo]) && hi - lo > 1) {
    int mid = lo + (hi - lo) / 2;
    if (run(mid) >= target)
      hi = mid;
    else
      lo = mid;
  }
  int best = std::abs(sr_of[hi] - target) <= std::abs(sr_of[lo] - target) ? hi : lo;
  sol.fleet_size = best;
  sol.achieved_sr = sr_of[best];
  sol.within_tolerance = close(sol.achieved_sr);
  sol.sr_at_max = std::prev(sr_of.end())->second;
  return sol;
}

double interpolate_at_sr(const std::vector<FleetProbe>& probes, double target, double (*field)(const FleetProbe&)) {
  if (probes.empty()) throw LoadError("no probes to interpolate");
  // Sort by achieved SR; ties keep the smaller fleet.
  std::vector<const FleetProbe*> v;
  for (const auto& p : probes) v.push_back(&p);
  std::stable_sort(v.begin(), v.end(), [](const FleetProbe* a, const FleetProbe* b) {
    if (a->summary.sr != b->summary.sr) return a->summary.sr < b->summary.sr;
    return a->fleet_size < b->fleet_size;
  });
  if (target <= v.front()->summary.sr) return field(*v.front());
  if (target >= v.back()->summary.sr) return field(*v.back());
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double s0 = v[i - 1]->summary.sr, s1 = v[i]->summary.sr;
    if (target <= s1) {
      if (s1 == s0) return field(*v[i]);
      const double w = (target - s0) / (s1 - s0);
      return field(*v[i - 1]) * (1 - w) + field(*v[i]) * w;
    }
  }
  return field(*v.back());
}

namespace {

std::string cell_name(const std::string& name, int cap, double sr) {
  return name + "_cap" + std::to_string(cap) + "_sr" + std::to_string(static_cast<int>(std::lround(sr * 100)));
}

double rel(double x, double base) { return base != 0 ? (x - base) / base : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::vector<SweepRow> run_sweep(const ScenarioConfig& c, const fs::path& out_dir) {
  std::vector<SweepRow> rows;
  PreparedScenario p = prepare_scenario(c);
  for (int cap : c.sweep.capacities) {
    std::map<int, FleetProbe> memo;
    for (double sr : c.sweep.sr_levels) {
      SweepRow row;
      row.capacity = cap;
      row.target_sr = sr;
      try {
        FleetSolution sol = solve_fleet_for_sr(p, c, cap, sr, &memo);
        row.fleet_size = sol.fleet_size;
        row.achieved_sr = sol.achieved_sr;
        row.probes = sol.probes;
        if (!sol.within_tolerance) {
          std::ostringstream msg;
          msg << "target not reached within tolerance; SR range over bounds [" << sol.sr_at_min << ", "
              << sol.sr_at_max << "]";
          row.error = msg.str();
        }
        auto pick = [&](double (*f)(const FleetProbe&)) { return interpolate_at_sr(row.probes, sr, f); };
        row.def = pick([](const FleetProbe& q) { return q.summary.def; });
        row.pef_co2 = pick([](const FleetProbe& q) { return q.summary.pef_co2; });
        row.pef_co = pick([](const FleetProbe& q) { return q.summary.pef_co; });
        row.pef_nox = pick([](const FleetProbe& q) { return q.summary.pef_nox; });
        row.pef_hc = pick([](const FleetProbe& q) { return q.summary.pef_hc; });
        row.df = pick([](const FleetProbe& q) { return q.summary.df; });
        row.avg_scheduled = pick([](const FleetProbe& q) { return q.summary.avg_scheduled; });
        row.df_inside = pick([](const FleetProbe& q) { return q.df_inside; });
        row.df_outside = pick([](const FleetProbe& q) { return q.df_outside; });
        // The chosen run is re-executed and written out for later analysis.
        RunResult r = run_prepared(p, c, sol.fleet_size, cap);
        row.run_dir = out_dir / cell_name(c.name, cap, sr);
        write_outputs(r, p, c, row.run_dir);
        row.ok = true;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      std::cerr << "sweep: capacity " << cap << " sr " << sr << " -> fleet " << row.fleet_size << ", achieved "
                << row.achieved_sr << (row.error.empty() ? "" : " (" + row.error + ")") << '\n';
      rows.push_back(std::move(row));
    }
  }
  for (SweepRow& row : rows) {
    const SweepRow* base = nullptr;
    for (const SweepRow& b : rows)
      if (b.capacity == 1 && b.target_sr == row.target_sr && b.ok) base = &b;
    if (!base || !row.ok) {
      row.d_def = row.d_pef_co2 = row.d_pef_co = row.d_pef_nox = row.d_pef_hc = row.d_df = row.d_df_inside =
          row.d_df_outside = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    row.d_def = rel(row.def, base->def);
    row.d_pef_co2 = rel(row.pef_co2, base->pef_co2);
    row.d_pef_co = rel(row.pef_co, base->pef_co);
    row.d_pef_nox = rel(row.pef_nox, base->pef_nox);
    row.d_pef_hc = rel(row.pef_hc, base->pef_hc);
    row.d_df = rel(row.df, base->df);
    row.d_df_inside = rel(row.df_inside, base->df_inside);
    row.d_df_outside = rel(row.df_outside, base->df_outside);
  }
  fs::create_directories(out_dir);
  {
    auto out = open_out(out_dir / "sweep.csv");
    write_sweep_csv(rows, out);
  }
  {
    auto out = open_out(out_dir / "sweep_probes.csv");
    out << "capacity,target_sr,fleet_size,sr,def,pef_co2,pef_co,pef_nox,pef_hc,df,avg_scheduled,df_inside,df_outside,"
           "event_log_sha256\n";
    for (const SweepRow& row : rows)
      for (const FleetProbe& q : row.probes)
        out << row.capacity << ',' << fmt(row.target_sr) << ',' << q.fleet_size << ',' << fmt(q.summary.sr) << ','
            << fmt(q.summary.def) << ',' << fmt(q.summary.pef_co2) << ',' << fmt(q.summary.pef_co) << ','
            << fmt(q.summary.pef_nox) << ',' << fmt(q.summary.pef_hc) << ',' << fmt(q.summary.df) << ','
            << fmt(q.summary.avg_scheduled) << ',' << fmt(q.df_inside) << ',' << fmt(q.df_outside) << ','
            << q.digest << '\n';
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "capacity,target_sr,fleet_size,achieved_sr,def,pef_co2,pef_co,pef_nox,pef_hc,df,avg_scheduled,df_inside,"
         "df_outside,d_def,d_pef_co2,d_pef_co,d_pef_nox,d_pef_hc,d_df,d_df_inside,d_df_outside,status,run_dir\n";
  for (const SweepRow& r : rows) {
    out << r.capacity << ',' << fmt(r.target_sr) << ',' << r.fleet_size << ',' << fmt(r.achieved_sr) << ','
        << fmt(r.def) << ',' << fmt(r.pef_co2) << ',' << fmt(r.pef_co) << ',' << fmt(r.pef_nox) << ','
        << fmt(r.pef_hc) << ',' << fmt(r.df) << ',' << fmt(r.avg_scheduled) << ',' << fmt(r.df_inside) << ','
        << fmt(r.df_outside) << ',' << fmt(r.d_def) << ',' << fmt(r.d_pef_co2) << ',' << fmt(r.d_pef_co) << ','
        << fmt(r.d_pef_nox) << ',' << fmt(r.d_pef_hc) << ',' << fmt(r.d_df) << ',' << fmt(r.d_df_inside) << ','
        << fmt(r.d_df_outside) << ',' << (!r.ok ? "failed" : r.error.empty() ? "ok" : "off_target") << ','
        << r.run_dir.string() << '\n';
  }
}

namespace {

double need_double(const csv::Table& t, std::size_t r, std::size_t col) {
  const auto& row = t.rows[r];
  auto v = csv::parse_double(col < row.size() ? row[col] : std::string{});
  if (!v) throw LoadError(t.source + ":" + std::to_string(t.line_numbers[r]) + ": bad " + t.header[col]);
  return *v;
}

std::int64_t need_int(const csv::Table& t, std::size_t r, std::size_t col) {
  const auto& row = t.rows[r];
  auto v = csv::parse_int(col < row.size() ? row[col] : std::string{});
  if (!v) throw LoadError(t.source + ":" + std::to_string(t.line_numbers[r]) + ": bad " + t.header[col]);
  return *v;
}

std::optional<double> maybe_double(const csv::Table& t, std::size_t r, std::size_t col) {
  const auto& row = t.rows[r];
  if (col >= row.size() || row[col].empty()) return std::nullopt;
  return need_double(t, r, col);
}

EdgeIndex edge_of(const RoadNetwork& net, const csv::Table& t, std::size_t r, std::size_t col) {
  auto e = net.find_edge(need_int(t, r, col));
  if (!e) throw LoadError(t.source + ":" + std::to_string(t.line_numbers[r]) + ": unknown edge");
  return *e;
}

NodeIndex node_of(const RoadNetwork& net, const csv::Table& t, std::size_t r, std::size_t col) {
  auto n = net.find_node(need_int(t, r, col));
  if (!n) throw LoadError(t.source + ":" + std::to_string(t.line_numbers[r]) + ": unknown node");
  return *n;
}

}  // namespace

std::vector<TraversalEvent> read_traversals_csv(const fs::path& path, const RoadNetwork& net) {
  csv::Table t = csv::read_file(path.string());
  const auto cv = t.require_column("vehicle_id"), ce = t.require_column("edge_id"),
             c0 = t.require_column("t_entry"), c1 = t.require_column("t_exit"), co = t.require_column("onboard");
  std::vector<TraversalEvent> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    TraversalEvent ev;
    ev.vehicle = static_cast<VehicleId>(need_int(t, r, cv));
    ev.edge = edge_of(net, t, r, ce);
    ev.t_entry = need_double(t, r, c0);
    ev.t_exit = need_double(t, r, c1);
    ev.onboard = static_cast<int>(need_int(t, r, co));
    out.push_back(ev);
  }
  return out;
}

std::vector<Request> read_requests_csv(const fs::path& path, const RoadNetwork& net) {
  csv::Table t = csv::read_file(path.string());
  const auto cid = t.require_column("request_id"), ct = t.require_column("request_time"),
             co = t.require_column("origin_node"), cd = t.require_column("dest_node"),
             cdt = t.require_column("direct_time"), cdd = t.require_column("direct_distance"),
             cs = t.require_column("state"), ca = t.require_column("assign_time"),
             cp = t.require_column("pickup_time"), cdo = t.require_column("dropoff_time"),
             cv = t.require_column("vehicle_id");
  std::vector<Request> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Request q;
    q.id = need_int(t, r, cid);
    q.request_time = need_double(t, r, ct);
    q.origin = node_of(net, t, r, co);
    q.dest = node_of(net, t, r, cd);
    q.direct_time = need_double(t, r, cdt);
    q.direct_distance = need_double(t, r, cdd);
    const std::string& s = t.rows[r][cs];
    bool known = false;
    for (RequestState st : {RequestState::waiting, RequestState::assigned, RequestState::onboard,
                            RequestState::completed, RequestState::abandoned})
      if (s == to_string(st)) {
        q.state = st;
        known = true;
      }
    if (!known) throw LoadError(t.source + ":" + std::to_string(t.line_numbers[r]) + ": bad state");
    q.assign_time = maybe_double(t, r, ca);
    q.pickup_time = maybe_double(t, r, cp);
    q.dropoff_time = maybe_double(t, r, cdo);
    q.vehicle = static_cast<VehicleId>(need_int(t, r, cv));
    out.push_back(q);
  }
  return out;
}

std::map<std::string, std::vector<double>> read_emissions_csv(const fs::path& path, const RoadNetwork& net) {
  csv::Table t = csv::read_file(path.string());
  const auto ce = t.require_column("edge_id"), cp = t.require_column("pollutant"), cg = t.require_column("grams");
  std::map<std::string, std::vector<double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    EdgeIndex e = edge_of(net, t, r, ce);
    auto& v = out[t.rows[r][cp]];
    if (v.empty()) v.assign(net.edge_count(), 0.0);
    v[static_cast<std::size_t>(e)] += need_double(t, r, cg);
  }
  return out;
}

std::vector<RegressionReport> analyze_regression(const fs::path& dir_a, const fs::path& dir_b,
                                                 const RoadNetwork& net) {
  auto a = read_emissions_csv(dir_a / "emissions.csv", net);
  auto b = read_emissions_csv(dir_b / "emissions.csv", net);
  std::vector<RegressionReport> out;
  for (const auto& [pollutant, xa] : a) {
    auto it = b.find(pollutant);
    if (it == b.end()) continue;
    std::vector<double> y(xa.size());
    for (std::size_t e = 0; e < xa.size(); ++e) y[e] = xa[e] - it->second[e];
    out.push_back({pollutant, no_intercept_regression(xa, y)});
  }
  return out;
}

SpeedEffect analyze_speed_effect(const fs::path& dir_ns, const fs::path& dir_rs, const RoadNetwork& net,
                                 const std::vector<PollutantParams>& params) {
  auto ns = read_traversals_csv(dir_ns / "traversals.csv", net);
  auto rs = read_traversals_csv(dir_rs / "traversals.csv", net);
  EmissionLedger ns_ledger = accumulate(ns, net, params);
  auto ns_speed = mean_traversal_speed_per_edge(ns, net);
  return speed_effect_decomposition(rs, ns_speed, ns_ledger, net, params);
}

ScenarioConfig default_grid_config() {
  ScenarioConfig c;
  c.name = "grid20";
  c.coefficients_path = std::string(POOLSIM_DATA_DIR) + "/copert_euro4_petrol_small.csv";
  c.network_defaults.base_density = 2.5;
  c.fleet_size = 100;
  c.capacity = 1;
  return c;
}

ScenarioConfig default_bench_config() {
  ScenarioConfig c = default_grid_config();
  c.name = "bench";
  c.horizon_s = 3600.0;
  c.demand.profile.base_rate = 0.3;
  c.fleet_size = 60;
  c.dispatch.routing = RoutingMode::nn;
  return c;
}

std::vector<RouteProblem> collect_bench_instances(const ScenarioConfig& base, int capacity, std::size_t count,
                                                  std::uint64_t seed) {
  std::vector<RouteProblem> reservoir;
  std::mt19937_64 rng(splitmix64(seed));
  std::uint64_t seen = 0;
  ProblemObserver obs = [&](const RouteProblem& p) {
    if (p.requests().size() < 2) return;
    ++seen;
    if (reservoir.size() < count) {
      reservoir.push_back(p);
      return;
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, seen - 1);
    std::uint64_t k = pick(rng);
    if (k < count) reservoir[static_cast<std::size_t>(k)] = p;
  };
  // More demand seeds until the reservoir fills.
  for (int round = 0; round < 20 && reservoir.size() < count; ++round) {
    ScenarioConfig c = base;
    c.seed = splitmix64(seed + static_cast<std::uint64_t>(round));
    PreparedScenario p = prepare_scenario(c);
    run_prepared(p, c, c.fleet_size.value_or(60), capacity, &obs);
  }
  return reservoir;
}

}  // namespace poolsim
