#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "poolsim/common.hpp"
#include "poolsim/netgraph.hpp"

namespace poolsim {

enum class RequestState { waiting, assigned, onboard, completed, abandoned };

const char* to_string(RequestState s);

struct Request {
  RequestId id = 0;
  double request_time = 0.0;
  NodeIndex origin = kNoNode;
  NodeIndex dest = kNoNode;
  double direct_time = 0.0;      // free-flow shortest path, s
  double direct_distance = 0.0;  // length of that path, m
  RequestState state = RequestState::waiting;
  std::optional<double> assign_time;
  std::optional<double> pickup_time;
  std::optional<double> dropoff_time;
  VehicleId vehicle = -1;
};

struct LoadReport {
  std::vector<Request> requests;
  std::size_t dropped_degenerate = 0;    // origin and destination snapped to one node
  std::vector<std::string> rejected_rows;
};

// Nearest multiple of `interval`, halves rounding up.
double round_to_batch(double t, double interval);

// Fills direct_time / direct_distance from free-flow shortest paths.
void fill_direct_paths(const RoadNetwork& net, std::vector<Request>& requests);

// CSV `request_id,t_seconds,origin_lon,origin_lat,dest_lon,dest_lat`.
// Output sorted by (request_time, id).
LoadReport load_requests(std::istream& in, const RoadNetwork& net, double batch_interval,
                         const std::string& source = "requests");
LoadReport load_requests_file(const std::string& path, const RoadNetwork& net, double batch_interval);

void write_requests_csv(const RoadNetwork& net, const std::vector<Request>& requests, double time_offset,
                        std::ostream& out);

// Keeps each request independently with probability `fraction`.
std::vector<Request> downsample(const std::vector<Request>& requests, double fraction, std::uint64_t seed);

struct BBox {
  double lon_min = 0.0, lat_min = 0.0, lon_max = 0.0, lat_max = 0.0;
  bool contains(double lon, double lat) const {
    return lon >= lon_min && lon <= lon_max && lat >= lat_min && lat <= lat_max;
  }
};

struct DemandProfile {
  double horizon_s = 7200.0;
  double base_rate = 0.45;  // requests per second
  BBox hot_zone;
  double hot_zone_weight = 0.7;
  double target_mean_distance_m = 3000.0;
};

// Poisson arrivals; origins from the hot-zone mixture (weight inside the box,
// the rest uniform over nodes outside it); destinations uniform over nodes
// whose free-flow path length from the origin lies in [0.5, 1.5] x target.
std::vector<Request> generate_demand(const DemandProfile& profile, const RoadNetwork& net, std::uint64_t seed,
                                     double batch_interval);

}  // namespace poolsim
