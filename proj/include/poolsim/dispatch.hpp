#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "poolsim/common.hpp"
#include "poolsim/netgraph.hpp"
#include "poolsim/pooling.hpp"

namespace poolsim {

enum class RoutingMode { nn, enumeration };

struct DispatchConfig {
  Constraints constraints;
  double matching_radius_s = 360.0;
  RoutingMode routing = RoutingMode::nn;
  double value_epsilon = 1e-3;
  // Work caps. A request keeps its nearest candidate vehicles, a vehicle its
  // nearest candidate requests; trip growth stops once a vehicle has this many.
  int max_vehicles_per_request = 30;
  int max_requests_per_vehicle = 12;
  int max_trips_per_vehicle = 200;
  // Branch-and-bound nodes per conflict component before falling back to the
  // best solution found so far.
  std::int64_t assignment_node_limit = 2'000'000;
};

// A vehicle as the dispatcher sees it at batch start.
struct DispatchVehicle {
  VehicleSnapshot snap;
  std::vector<RideRequest> existing;  // onboard plus assigned-not-yet-picked
  double base_time = 0.0;             // duration of its current plan at snapshot speeds
};

struct FeasibleTrip {
  int vehicle = -1;                 // index into the vehicle list
  std::vector<RequestId> requests;  // new requests only, ascending
  RoutePlan plan;                   // covers existing and new passengers
  double added_time = 0.0;          // plan.total_time - base_time, s
  double value = 0.0;
};

struct Assignment {
  std::vector<std::size_t> chosen;    // indices into the trip list, ascending
  std::vector<RequestId> unmatched;   // batch requests not in any chosen trip
  double objective = 0.0;
  bool proven_optimal = true;
  std::int64_t nodes = 0;
};

using ProblemObserver = std::function<void(const RouteProblem&)>;

// Number of requests minus epsilon times the added vehicle hours.
double value_function(std::size_t n_requests, double added_time_s, double epsilon);

// Vehicles with spare seats whose time to the request origin (including the
// remainder of their current edge) is within the radius, nearest first, capped.
std::vector<int> candidate_vehicles(const RideRequest& request, std::span<const DispatchVehicle> vehicles,
                                    double radius_s, double now, const TravelTimes& tt, int max_candidates);

// Per vehicle: singletons from its candidate requests, then size-k sets whose
// every (k-1)-subset was feasible, up to its spare seats. Parallel over
// vehicles; output ordered by vehicle, then trip size, then request ids.
std::vector<FeasibleTrip> build_feasible_trips(std::span<const RideRequest> batch,
                                               std::span<const DispatchVehicle> vehicles, const DispatchConfig& cfg,
                                               const TravelTimes& tt, double now);
// Serial reference. The observer sees every routing problem evaluated.
std::vector<FeasibleTrip> build_feasible_trips_serial(std::span<const RideRequest> batch,
                                                      std::span<const DispatchVehicle> vehicles,
                                                      const DispatchConfig& cfg, const TravelTimes& tt, double now,
                                                      const ProblemObserver* observer = nullptr);

// Maximum-value set of trips with no vehicle or request used twice. Exact
// branch and bound per conflict component; among optimal sets the
// lexicographically smallest trip-index set wins.
Assignment solve_assignment(std::span<const FeasibleTrip> trips, std::span<const RequestId> batch,
                            std::int64_t node_limit = 2'000'000);

}  // namespace poolsim
