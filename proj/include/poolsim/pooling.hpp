#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poolsim/common.hpp"
#include "poolsim/netgraph.hpp"

namespace poolsim {

struct Constraints {
  double max_wait_s = 300.0;       // pickup deadline, measured from request_time
  double max_detour_ratio = 0.5;   // in-vehicle time <= (1 + ratio) * direct_time
  int capacity = 4;
};

enum class StopKind : std::uint8_t { pickup = 0, dropoff = 1 };

struct Stop {
  RequestId request = 0;
  StopKind kind = StopKind::pickup;
  NodeIndex node = kNoNode;
  auto operator<=>(const Stop&) const = default;
};

// A passenger as seen by the route builder. Onboard passengers contribute
// only a dropoff and carry their actual pickup time.
struct RideRequest {
  RequestId id = 0;
  NodeIndex origin = kNoNode;
  NodeIndex dest = kNoNode;
  double request_time = 0.0;
  double direct_time = 0.0;
  bool onboard = false;
  double pickup_time = 0.0;
};

// Where a vehicle can start a new plan: `node` is its current node, or the
// head of the edge it is on; `ready_time` is when it gets there.
struct VehicleSnapshot {
  VehicleId id = 0;
  int capacity = 4;
  NodeIndex node = kNoNode;
  double ready_time = 0.0;
};

struct RoutePlan {
  std::vector<Stop> stops;
  std::vector<double> arrivals;  // absolute seconds, parallel to stops
  double total_time = 0.0;       // last arrival minus vehicle ready time
  double distance = 0.0;         // meters driven along the plan
};

struct Violation {
  enum class Kind { structure, max_wait, detour, capacity };
  Kind kind = Kind::structure;
  RequestId request = 0;
  std::size_t stop_index = 0;
  std::string describe() const;
};

struct Verdict {
  bool feasible = true;
  std::optional<Violation> violation;  // first violation in stop order
};

// Checks a plan against its requests using the plan's own arrival times:
//   pickup arrival <= request_time + max_wait
//   dropoff arrival - pickup <= (1 + ratio) * direct_time
//     (pickup = plan arrival, or the recorded pickup time when onboard)
//   onboard count after every stop <= capacity
// and that each request appears exactly as required (pickup before dropoff,
// dropoff only when onboard).
Verdict check_plan(const RoutePlan& plan, std::span<const RideRequest> requests, const Constraints& c,
                   int initial_onboard);

// One vehicle with a set of passengers, with the pairwise travel times among
// its start node and every stop node frozen from a speed snapshot.
class RouteProblem {
 public:
  RouteProblem() = default;
  RouteProblem(const VehicleSnapshot& vehicle, std::vector<RideRequest> requests, const Constraints& constraints,
               const TravelTimes& tt);

  const VehicleSnapshot& vehicle() const { return vehicle_; }
  const Constraints& constraints() const { return constraints_; }
  std::span<const RideRequest> requests() const { return requests_; }

  // Stop slots in lexicographic (request, kind) order.
  std::size_t slot_count() const { return slots_.size(); }
  const Stop& slot(std::size_t i) const { return slots_[i]; }
  int slot_request(std::size_t i) const { return slot_req_[i]; }
  int initial_onboard() const { return initial_onboard_; }

  // Position 0 is the vehicle start, position i + 1 is slot i.
  double leg_time(std::size_t from_pos, std::size_t to_pos) const { return time_[from_pos * dim_ + to_pos]; }
  double leg_distance(std::size_t from_pos, std::size_t to_pos) const { return dist_[from_pos * dim_ + to_pos]; }

  // Plan for a sequence of slot indices; arrivals computed from the matrix.
  RoutePlan plan_for(std::span<const int> order) const;

 private:
  VehicleSnapshot vehicle_;
  Constraints constraints_;
  std::vector<RideRequest> requests_;  // sorted by id
  std::vector<Stop> slots_;
  std::vector<int> slot_req_;
  int initial_onboard_ = 0;
  std::size_t dim_ = 1;
  std::vector<double> time_, dist_;
};

struct EnumStats {
  std::uint64_t orderings = 0;  // complete precedence-valid orderings visited
};

// Exhaustive search over every precedence-valid ordering. Returns the feasible
// plan of minimal total time, ties to the lexicographically smallest stop
// sequence.
std::optional<RoutePlan> enumerate_best_route(const RouteProblem& p, EnumStats* stats = nullptr);

// Greedy: always drive to the nearest eligible stop (pickups only while there
// is spare capacity), ties to the lowest request id and pickup first. The
// finished plan must then pass check_plan.
std::optional<RoutePlan> nn_route(const RouteProblem& p);

// Sequence of slot indices for a fixed stop order, or nullopt if the stops do
// not match the problem's slots.
std::optional<std::vector<int>> slot_order(const RouteProblem& p, std::span<const Stop> stops);

// Closed-form count of precedence-valid orderings for p two-stop passengers
// and d single dropoffs: (2p + d)! / 2^p.
std::uint64_t ordering_count(int pickups, int dropoffs_only);

}  // namespace poolsim
