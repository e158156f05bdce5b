#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "poolsim/common.hpp"
#include "poolsim/demand.hpp"
#include "poolsim/dispatch.hpp"
#include "poolsim/netgraph.hpp"
#include "poolsim/pooling.hpp"

namespace poolsim {

struct SimConfig {
  double step_s = 2.0;  // batch interval
  double horizon_s = 7200.0;
  int fleet_size = 100;
  int capacity = 4;
  DispatchConfig dispatch;  // dispatch.constraints.capacity is overridden by `capacity`
  std::uint64_t seed = 1;
  // How often the travel-time snapshot used for matching and routing is rebuilt.
  double travel_time_refresh_s = 2.0;
  // Per-edge speeds are written to the df log at this interval (0 disables).
  double df_log_interval_s = 60.0;
  // After the horizon: no new arrivals, open requests are still served and
  // idle vehicles park at the end of their edge.
  bool drain = true;
  double max_drain_s = 14400.0;
  bool audit_density = true;
  bool parallel = true;
  const ProblemObserver* observer = nullptr;  // forces the serial trip builder
};

struct TraversalEvent {
  VehicleId vehicle = 0;
  EdgeIndex edge = kNoEdge;
  double t_entry = 0.0;
  double t_exit = 0.0;
  int onboard = 0;
};

struct StopEvent {
  double t = 0.0;
  VehicleId vehicle = 0;
  RequestId request = 0;
  StopKind kind = StopKind::pickup;
};

struct DfLogRow {
  double t = 0.0;
  EdgeIndex edge = kNoEdge;
  double speed_kmh = 0.0;
};

struct SimDiagnostics {
  std::int64_t batches = 0;
  std::int64_t drain_batches = 0;
  std::int64_t trips_built = 0;
  std::int64_t assignments_not_proven = 0;
  std::int64_t wait_drift_violations = 0;    // picked up after the deadline because speeds changed
  std::int64_t detour_drift_violations = 0;  // in-vehicle time over the bound because speeds changed
  std::int64_t density_audits = 0;
  std::int64_t snapshot_rebuilds = 0;
  std::int64_t stranded_vehicles = 0;  // idle at a node without outgoing edges
  int max_onboard = 0;
  double end_time = 0.0;
};

struct SimOutput {
  int fleet_size = 0;
  int capacity = 0;
  double step_s = 0.0;
  double horizon_s = 0.0;
  std::vector<TraversalEvent> traversals;  // in completion order
  std::vector<StopEvent> stops;
  std::vector<Request> requests;           // final states, sorted by (request_time, id)
  std::vector<double> edge_df_sum;         // per edge, sum over samples of u0 / u
  std::int64_t df_samples = 0;             // T: sampling instants
  std::vector<DfLogRow> df_log;
  double scheduled_sum = 0.0;              // sum over (instant, vehicle) of onboard + assigned
  std::int64_t scheduled_samples = 0;      // T * fleet
  std::vector<double> odometer_m;          // per vehicle
  std::vector<NodeIndex> start_nodes;
  SimDiagnostics diag;
};

std::uint64_t splitmix64(std::uint64_t x);

// Start nodes drawn with replacement from the request origins (uniform over
// nodes when there are no requests).
std::vector<NodeIndex> initialize_fleet(const RoadNetwork& net, const std::vector<Request>& requests, int fleet_size,
                                        std::uint64_t seed);

// Uniformly random outgoing edge, or kNoEdge at a dead end.
EdgeIndex cruise_choice(const RoadNetwork& net, NodeIndex node, std::mt19937_64& rng);

class Simulation {
 public:
  // The network is used as the live density state; its vehicle counts are reset.
  Simulation(RoadNetwork& net, std::vector<Request> requests, const SimConfig& cfg);

  // One batch: arrivals, dispatch, movement, cruising, expiry, sampling.
  void step();
  bool finished() const;
  SimOutput run();

  double now() const { return static_cast<double>(tick_) * cfg_.step_s; }
  const std::vector<Request>& requests() const { return requests_; }
  void audit_density() const;

 private:
  struct Vehicle {
    VehicleId id = 0;
    NodeIndex node = kNoNode;  // current node, or the tail of `edge`
    EdgeIndex edge = kNoEdge;
    double progress_m = 0.0;
    double t_entry = 0.0;
    int onboard_at_entry = 0;
    std::vector<std::size_t> onboard;   // request indices
    std::vector<std::size_t> assigned;  // request indices not yet picked up
    std::vector<Stop> plan;
    double odometer_m = 0.0;
    std::mt19937_64 rng;
  };

  bool in_horizon() const { return now() < cfg_.horizon_s - 1e-9; }
  void dispatch();
  void move_vehicle(Vehicle& v, double t0, const std::vector<double>& speed_ms, bool may_cruise);
  void at_node(Vehicle& v, double t, bool may_cruise);
  void execute_stop(Vehicle& v, const Stop& s, double t);
  void expire();
  void sample(double t);

  RoadNetwork& net_;
  SimConfig cfg_;
  std::vector<Request> requests_;
  std::unordered_map<RequestId, std::size_t> index_of_;
  std::vector<Vehicle> vehicles_;
  std::vector<std::size_t> waiting_;
  std::size_t next_arrival_ = 0;
  std::int64_t tick_ = 0;
  std::int64_t open_requests_ = 0;  // waiting, assigned or onboard
  std::unique_ptr<TravelTimes> tt_;
  double last_refresh_ = -1e300;
  SimOutput out_;
};

SimOutput run_simulation(RoadNetwork& net, std::vector<Request> requests, const SimConfig& cfg);

// SHA-256 over a canonical text rendering of traversals, stops and final
// request states.
std::string event_log_digest(const SimOutput& out);

}  // namespace poolsim
