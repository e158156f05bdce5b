#pragma once

// Brute-force references for the dispatcher, shared by unit and acceptance tests.

#include <algorithm>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "poolsim/dispatch.hpp"

namespace oracle {

using namespace poolsim;

// Best total value over every conflict-free subset of trips (bitmask scan).
inline double best_assignment_value(std::span<const FeasibleTrip> trips) {
  const std::size_t n = trips.size();
  double best = 0.0;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    std::set<int> vehicles;
    std::set<RequestId> reqs;
    double v = 0.0;
    bool ok = true;
    for (std::size_t t = 0; t < n && ok; ++t) {
      if (!(mask >> t & 1)) continue;
      ok = vehicles.insert(trips[t].vehicle).second;
      for (RequestId r : trips[t].requests) ok = ok && reqs.insert(r).second;
      v += trips[t].value;
    }
    if (ok) best = std::max(best, v);
  }
  return best;
}

inline bool conflict_free(std::span<const FeasibleTrip> trips, std::span<const std::size_t> chosen) {
  std::set<int> vehicles;
  std::set<RequestId> reqs;
  for (std::size_t t : chosen) {
    if (!vehicles.insert(trips[t].vehicle).second) return false;
    for (RequestId r : trips[t].requests)
      if (!reqs.insert(r).second) return false;
  }
  return true;
}

// Random trips over `n_vehicles` vehicles and `n_requests` requests, each
// vehicle holding a few request sets of size 1..3.
inline std::vector<FeasibleTrip> random_trips(std::mt19937_64& rng, int n_vehicles, int n_requests, int max_trips) {
  std::vector<FeasibleTrip> trips;
  std::uniform_int_distribution<int> veh(0, n_vehicles - 1), req(1, n_requests), size(1, 3);
  std::uniform_real_distribution<double> added(0, 1800);
  std::set<std::pair<int, std::vector<RequestId>>> seen;
  for (int attempt = 0; attempt < 50 * max_trips && static_cast<int>(trips.size()) < max_trips; ++attempt) {
    FeasibleTrip t;
    t.vehicle = veh(rng);
    int k = size(rng);
    std::set<RequestId> s;
    while (static_cast<int>(s.size()) < std::min(k, n_requests)) s.insert(req(rng));
    t.requests.assign(s.begin(), s.end());
    if (!seen.insert({t.vehicle, t.requests}).second) continue;
    t.added_time = added(rng);
    t.value = value_function(t.requests.size(), t.added_time, 1e-3);
    trips.push_back(std::move(t));
  }
  std::sort(trips.begin(), trips.end(), [](const FeasibleTrip& a, const FeasibleTrip& b) {
    return std::tie(a.vehicle, a.requests) < std::tie(b.vehicle, b.requests);
  });
  return trips;
}

}  // namespace oracle
