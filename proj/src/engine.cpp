#include "poolsim/engine.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "poolsim/csv.hpp"

namespace poolsim {

namespace {

RideRequest ride_of(const Request& r) {
  RideRequest q;
  q.id = r.id;
  q.origin = r.origin;
  q.dest = r.dest;
  q.request_time = r.request_time;
  q.direct_time = r.direct_time;
  q.onboard = r.state == RequestState::onboard;
  q.pickup_time = r.pickup_time.value_or(0.0);
  return q;
}

bool on_grid(double t, double interval) {
  if (interval <= 0) return false;
  double k = t / interval;
  return std::fabs(k - std::round(k)) < 1e-9;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<NodeIndex> initialize_fleet(const RoadNetwork& net, const std::vector<Request>& requests, int fleet_size,
                                        std::uint64_t seed) {
  if (fleet_size < 1) throw LoadError("fleet_size must be at least 1");
  std::mt19937_64 rng(splitmix64(seed ^ 0x5eed'f1ee'7000'0001ULL));
  std::vector<NodeIndex> out;
  out.reserve(static_cast<std::size_t>(fleet_size));
  if (requests.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, net.node_count() - 1);
    for (int i = 0; i < fleet_size; ++i) out.push_back(static_cast<NodeIndex>(pick(rng)));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, requests.size() - 1);
    for (int i = 0; i < fleet_size; ++i) out.push_back(requests[pick(rng)].origin);
  }
  return out;
}

EdgeIndex cruise_choice(const RoadNetwork& net, NodeIndex node, std::mt19937_64& rng) {
  auto out = net.out_edges(node);
  if (out.empty()) return kNoEdge;
  return out[std::uniform_int_distribution<std::size_t>(0, out.size() - 1)(rng)];
}

Simulation::Simulation(RoadNetwork& net, std::vector<Request> requests, const SimConfig& cfg)
    : net_(net), cfg_(cfg) {
  if (!(cfg_.step_s > 0)) throw LoadError("step must be positive");
  if (cfg_.horizon_s < 0 || !on_grid(cfg_.horizon_s, cfg_.step_s))
    throw LoadError("horizon must be a non-negative multiple of the step");
  cfg_.dispatch.constraints.capacity = cfg_.capacity;
  net_.clear_vehicles();

  for (Request& r : requests) {
    if (r.request_time >= cfg_.horizon_s) continue;
    r.state = RequestState::waiting;
    r.assign_time.reset();
    r.pickup_time.reset();
    r.dropoff_time.reset();
    r.vehicle = -1;
    requests_.push_back(r);
  }
  std::sort(requests_.begin(), requests_.end(), [](const Request& a, const Request& b) {
    if (a.request_time != b.request_time) return a.request_time < b.request_time;
    return a.id < b.id;
  });
  for (std::size_t i = 0; i < requests_.size(); ++i)
    if (!index_of_.emplace(requests_[i].id, i).second)
      throw LoadError("duplicate request id " + std::to_string(requests_[i].id));

  out_.fleet_size = cfg_.fleet_size;
  out_.capacity = cfg_.capacity;
  out_.step_s = cfg_.step_s;
  out_.horizon_s = cfg_.horizon_s;
  out_.edge_df_sum.assign(net_.edge_count(), 0.0);
  out_.start_nodes = initialize_fleet(net_, requests_, cfg_.fleet_size, cfg_.seed);
  vehicles_.resize(static_cast<std::size_t>(cfg_.fleet_size));
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    Vehicle& v = vehicles_[i];
    v.id = static_cast<VehicleId>(i);
    v.node = out_.start_nodes[i];
    v.rng.seed(splitmix64(cfg_.seed ^ splitmix64(i + 1)));
  }
}

bool Simulation::finished() const {
  if (in_horizon()) return false;
  if (!cfg_.drain) return true;
  if (now() >= cfg_.horizon_s + cfg_.max_drain_s - 1e-9) return true;
  if (open_requests_ > 0) return false;
  for (const Vehicle& v : vehicles_)
    if (v.edge != kNoEdge) return false;
  return true;
}

void Simulation::step() {
  const double t = now();
  const bool horizon = in_horizon();

  if (horizon) {
    while (next_arrival_ < requests_.size() && requests_[next_arrival_].request_time <= t + 1e-9) {
      waiting_.push_back(next_arrival_++);
      ++open_requests_;
    }
  }

  dispatch();

  std::vector<double> speed(net_.edge_count());
  for (std::size_t e = 0; e < speed.size(); ++e) speed[e] = net_.speed_ms(static_cast<EdgeIndex>(e));
  for (Vehicle& v : vehicles_) move_vehicle(v, t, speed, horizon);

  expire();

  if (cfg_.audit_density) {
    audit_density();
    ++out_.diag.density_audits;
  }

  const double ts = t + cfg_.step_s;
  if (ts <= cfg_.horizon_s + 1e-9) sample(ts);

  ++out_.diag.batches;
  if (!horizon) ++out_.diag.drain_batches;
  ++tick_;
}

void Simulation::dispatch() {
  const double t = now();
  if (!tt_ || t - last_refresh_ >= cfg_.travel_time_refresh_s - 1e-9) {
    tt_ = std::make_unique<TravelTimes>(net_);
    last_refresh_ = t;
    ++out_.diag.snapshot_rebuilds;
  }
  std::vector<NodeIndex> targets;
  for (const Vehicle& v : vehicles_)
    for (const Stop& s : v.plan) targets.push_back(s.node);
  for (std::size_t i : waiting_) {
    targets.push_back(requests_[i].origin);
    targets.push_back(requests_[i].dest);
  }
  if (cfg_.parallel)
    tt_->prepare(targets);
  else
    tt_->prepare_serial(targets);
  if (waiting_.empty()) return;

  const TravelTimes& tt = *tt_;
  Constraints c = cfg_.dispatch.constraints;
  std::vector<DispatchVehicle> dvs(vehicles_.size());
  for (std::size_t k = 0; k < vehicles_.size(); ++k) {
    const Vehicle& v = vehicles_[k];
    DispatchVehicle& dv = dvs[k];
    dv.snap.id = v.id;
    dv.snap.capacity = cfg_.capacity;
    if (v.edge != kNoEdge) {
      const Edge& e = net_.edge(v.edge);
      dv.snap.node = e.to;
      dv.snap.ready_time = t + (1.0 - v.progress_m / e.length_m) * tt.edge_times()[static_cast<std::size_t>(v.edge)];
    } else {
      dv.snap.node = v.node;
      dv.snap.ready_time = t;
    }
    for (std::size_t i : v.onboard) dv.existing.push_back(ride_of(requests_[i]));
    for (std::size_t i : v.assigned) dv.existing.push_back(ride_of(requests_[i]));
    if (!dv.existing.empty() && static_cast<int>(dv.existing.size()) < cfg_.capacity) {
      RouteProblem base(dv.snap, dv.existing, c, tt);
      auto order = slot_order(base, v.plan);
      if (!order) throw InternalError("vehicle " + std::to_string(v.id) + " plan does not match its passengers");
      dv.base_time = base.plan_for(*order).total_time;
    }
  }

  std::vector<RideRequest> batch;
  std::vector<RequestId> batch_ids;
  for (std::size_t i : waiting_) {
    batch.push_back(ride_of(requests_[i]));
    batch_ids.push_back(requests_[i].id);
  }

  std::vector<FeasibleTrip> trips;
  if (cfg_.observer)
    trips = build_feasible_trips_serial(batch, dvs, cfg_.dispatch, tt, t, cfg_.observer);
  else if (cfg_.parallel)
    trips = build_feasible_trips(batch, dvs, cfg_.dispatch, tt, t);
  else
    trips = build_feasible_trips_serial(batch, dvs, cfg_.dispatch, tt, t);
  out_.diag.trips_built += static_cast<std::int64_t>(trips.size());

  Assignment a = solve_assignment(trips, batch_ids, cfg_.dispatch.assignment_node_limit);
  if (!a.proven_optimal) ++out_.diag.assignments_not_proven;

  for (std::size_t ti : a.chosen) {
    const FeasibleTrip& trip = trips[ti];
    Vehicle& v = vehicles_[static_cast<std::size_t>(trip.vehicle)];
    v.plan = trip.plan.stops;
    for (RequestId id : trip.requests) {
      std::size_t i = index_of_.at(id);
      Request& r = requests_[i];
      if (r.state != RequestState::waiting)
        throw InternalError("request " + std::to_string(id) + " assigned twice");
      r.state = RequestState::assigned;
      r.assign_time = t;
      r.vehicle = v.id;
      v.assigned.push_back(i);
    }
  }
  std::erase_if(waiting_, [&](std::size_t i) { return requests_[i].state != RequestState::waiting; });
}

void Simulation::move_vehicle(Vehicle& v, double t0, const std::vector<double>& speed_ms, bool may_cruise) {
  // Crossing is decided on the computed exit time so that the event log alone
  // tells which edge a vehicle occupied at each sampling instant.
  const double t_end = t0 + cfg_.step_s;
  double t = t0;
  if (v.edge == kNoEdge) {
    at_node(v, t, may_cruise);
    if (v.edge == kNoEdge) return;
  }
  while (true) {
    const Edge& e = net_.edge(v.edge);
    const double sp = speed_ms[static_cast<std::size_t>(v.edge)];
    const double t_cross = t + (e.length_m - v.progress_m) / sp;
    if (t_cross > t_end) {
      v.progress_m = std::min(e.length_m, v.progress_m + sp * (t_end - t));
      return;
    }
    t = t_cross;
    net_.vehicle_leave_edge(v.edge);
    out_.traversals.push_back({v.id, v.edge, v.t_entry, t, v.onboard_at_entry});
    v.odometer_m += e.length_m;
    v.node = e.to;
    v.edge = kNoEdge;
    v.progress_m = 0.0;
    at_node(v, t, may_cruise);
    if (v.edge == kNoEdge) return;
  }
}

void Simulation::at_node(Vehicle& v, double t, bool may_cruise) {
  while (!v.plan.empty() && v.plan.front().node == v.node) {
    Stop s = v.plan.front();
    v.plan.erase(v.plan.begin());
    execute_stop(v, s, t);
  }
  EdgeIndex next = kNoEdge;
  if (!v.plan.empty()) {
    next = tt_->next_edge(v.node, v.plan.front().node);
    if (next == kNoEdge)
      throw InternalError("vehicle " + std::to_string(v.id) + " has no route to node " +
                          std::to_string(net_.node(v.plan.front().node).id));
  } else if (may_cruise) {
    next = cruise_choice(net_, v.node, v.rng);
    if (next == kNoEdge) ++out_.diag.stranded_vehicles;
  }
  if (next == kNoEdge) return;
  net_.vehicle_enter_edge(next);
  v.edge = next;
  v.progress_m = 0.0;
  v.t_entry = t;
  v.onboard_at_entry = static_cast<int>(v.onboard.size());
}

void Simulation::execute_stop(Vehicle& v, const Stop& s, double t) {
  std::size_t i = index_of_.at(s.request);
  Request& r = requests_[i];
  const Constraints& c = cfg_.dispatch.constraints;
  if (s.kind == StopKind::pickup) {
    if (r.state != RequestState::assigned || r.vehicle != v.id)
      throw InternalError("pickup of request " + std::to_string(r.id) + " in state " + to_string(r.state));
    auto it = std::find(v.assigned.begin(), v.assigned.end(), i);
    if (it == v.assigned.end()) throw InternalError("request " + std::to_string(r.id) + " not assigned to vehicle");
    v.assigned.erase(it);
    v.onboard.push_back(i);
    if (static_cast<int>(v.onboard.size()) > cfg_.capacity)
      throw InternalError("vehicle " + std::to_string(v.id) + " over capacity");
    out_.diag.max_onboard = std::max(out_.diag.max_onboard, static_cast<int>(v.onboard.size()));
    r.state = RequestState::onboard;
    r.pickup_time = t;
    if (t > r.request_time + c.max_wait_s + kConstraintSlack) ++out_.diag.wait_drift_violations;
  } else {
    if (r.state != RequestState::onboard || r.vehicle != v.id)
      throw InternalError("dropoff of request " + std::to_string(r.id) + " in state " + to_string(r.state));
    auto it = std::find(v.onboard.begin(), v.onboard.end(), i);
    v.onboard.erase(it);
    r.state = RequestState::completed;
    r.dropoff_time = t;
    --open_requests_;
    if (t - *r.pickup_time > (1.0 + c.max_detour_ratio) * r.direct_time + kConstraintSlack)
      ++out_.diag.detour_drift_violations;
  }
  out_.stops.push_back({t, v.id, r.id, s.kind});
}

void Simulation::expire() {
  const double t = now();
  const double max_wait = cfg_.dispatch.constraints.max_wait_s;
  std::erase_if(waiting_, [&](std::size_t i) {
    Request& r = requests_[i];
    if (r.request_time + max_wait > t + 1e-9) return false;
    r.state = RequestState::abandoned;
    --open_requests_;
    return true;
  });
}

void Simulation::sample(double ts) {
  const bool log = cfg_.df_log_interval_s > 0 && on_grid(ts, cfg_.df_log_interval_s);
  for (std::size_t e = 0; e < net_.edge_count(); ++e) {
    const auto ei = static_cast<EdgeIndex>(e);
    const double u = net_.speed_kmh(ei);
    out_.edge_df_sum[e] += net_.edge(ei).free_flow_kmh / u;
    if (log) out_.df_log.push_back({ts, ei, u});
  }
  ++out_.df_samples;
  for (const Vehicle& v : vehicles_) out_.scheduled_sum += static_cast<double>(v.onboard.size() + v.assigned.size());
  out_.scheduled_samples += static_cast<std::int64_t>(vehicles_.size());
}

void Simulation::audit_density() const {
  std::vector<int> count(net_.edge_count(), 0);
  long on_road = 0;
  for (const Vehicle& v : vehicles_) {
    if (v.edge == kNoEdge) continue;
    ++count[static_cast<std::size_t>(v.edge)];
    ++on_road;
    if (v.progress_m < 0 || v.progress_m > net_.edge(v.edge).length_m)
      throw InternalError("vehicle " + std::to_string(v.id) + " progress outside its edge");
  }
  for (std::size_t e = 0; e < count.size(); ++e)
    if (count[e] != net_.edge(static_cast<EdgeIndex>(e)).sim_vehicles)
      throw InternalError("density audit failed on edge " + std::to_string(net_.edge(static_cast<EdgeIndex>(e)).id));
  if (on_road != net_.on_road_vehicles()) throw InternalError("density audit: on-road total mismatch");
}

SimOutput Simulation::run() {
  while (!finished()) step();
  out_.requests = requests_;
  out_.odometer_m.clear();
  for (const Vehicle& v : vehicles_) out_.odometer_m.push_back(v.odometer_m);
  out_.diag.end_time = now();
  return std::move(out_);
}

SimOutput run_simulation(RoadNetwork& net, std::vector<Request> requests, const SimConfig& cfg) {
  Simulation sim(net, std::move(requests), cfg);
  return sim.run();
}

std::string event_log_digest(const SimOutput& out) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw InternalError("sha256 init failed");
  auto feed = [&](const std::string& s) { EVP_DigestUpdate(ctx, s.data(), s.size()); };
  auto num = [](double d) { return csv::format_double(d); };
  for (const TraversalEvent& e : out.traversals)
    feed("T," + std::to_string(e.vehicle) + "," + std::to_string(e.edge) + "," + num(e.t_entry) + "," +
         num(e.t_exit) + "," + std::to_string(e.onboard) + "\n");
  for (const StopEvent& s : out.stops)
    feed("S," + num(s.t) + "," + std::to_string(s.vehicle) + "," + std::to_string(s.request) + "," +
         (s.kind == StopKind::pickup ? "p" : "d") + "\n");
  for (const Request& r : out.requests)
    feed("R," + std::to_string(r.id) + "," + to_string(r.state) + "," + num(r.assign_time.value_or(-1)) + "," +
         num(r.pickup_time.value_or(-1)) + "," + num(r.dropoff_time.value_or(-1)) + "," + std::to_string(r.vehicle) +
         "\n");
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace poolsim
