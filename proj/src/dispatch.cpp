#include "poolsim/dispatch.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

namespace poolsim {

namespace {

constexpr double kValueTieEps = 1e-9;

struct CandidateLists {
  std::vector<std::vector<int>> per_vehicle;  // batch indices, ascending request id
};

CandidateLists collect_candidates(std::span<const RideRequest> batch, std::span<const DispatchVehicle> vehicles,
                                  const DispatchConfig& cfg, const TravelTimes& tt, double now) {
  std::vector<std::vector<std::pair<double, int>>> near(vehicles.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int v : candidate_vehicles(batch[i], vehicles, cfg.matching_radius_s, now, tt, cfg.max_vehicles_per_request)) {
      const auto& vs = vehicles[static_cast<std::size_t>(v)].snap;
      double pickup = (vs.ready_time - now) + tt.time(vs.node, batch[i].origin);
      near[static_cast<std::size_t>(v)].emplace_back(pickup, static_cast<int>(i));
    }
  }
  CandidateLists out;
  out.per_vehicle.resize(vehicles.size());
  for (std::size_t v = 0; v < vehicles.size(); ++v) {
    auto& lst = near[v];
    std::sort(lst.begin(), lst.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return batch[static_cast<std::size_t>(a.second)].id < batch[static_cast<std::size_t>(b.second)].id;
    });
    if (lst.size() > static_cast<std::size_t>(cfg.max_requests_per_vehicle))
      lst.resize(static_cast<std::size_t>(cfg.max_requests_per_vehicle));
    auto& ids = out.per_vehicle[v];
    for (const auto& [t, i] : lst) ids.push_back(i);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      return batch[static_cast<std::size_t>(a)].id < batch[static_cast<std::size_t>(b)].id;
    });
  }
  return out;
}

std::vector<FeasibleTrip> trips_for_vehicle(int v, const std::vector<int>& cands, std::span<const RideRequest> batch,
                                            std::span<const DispatchVehicle> vehicles, const DispatchConfig& cfg,
                                            const TravelTimes& tt, const ProblemObserver* observer) {
  std::vector<FeasibleTrip> trips;
  const DispatchVehicle& dv = vehicles[static_cast<std::size_t>(v)];
  const int spare = dv.snap.capacity - static_cast<int>(dv.existing.size());
  if (spare <= 0 || cands.empty()) return trips;

  Constraints c = cfg.constraints;
  c.capacity = dv.snap.capacity;

  // Sets are positions into `cands`, ascending.
  auto try_set = [&](const std::vector<int>& set) -> bool {
    std::vector<RideRequest> reqs = dv.existing;
    for (int pos : set) reqs.push_back(batch[static_cast<std::size_t>(cands[static_cast<std::size_t>(pos)])]);
    RouteProblem problem(dv.snap, std::move(reqs), c, tt);
    if (observer) (*observer)(problem);
    std::optional<RoutePlan> plan =
        cfg.routing == RoutingMode::nn ? nn_route(problem) : enumerate_best_route(problem);
    if (!plan) return false;
    FeasibleTrip trip;
    trip.vehicle = v;
    for (int pos : set) trip.requests.push_back(batch[static_cast<std::size_t>(cands[static_cast<std::size_t>(pos)])].id);
    trip.added_time = plan->total_time - dv.base_time;
    trip.value = value_function(set.size(), trip.added_time, cfg.value_epsilon);
    trip.plan = std::move(*plan);
    trips.push_back(std::move(trip));
    return true;
  };

  const auto cap = static_cast<std::size_t>(cfg.max_trips_per_vehicle);
  std::vector<std::vector<int>> level;
  for (int i = 0; i < static_cast<int>(cands.size()) && trips.size() < cap; ++i) {
    std::vector<int> s{i};
    if (try_set(s)) level.push_back(std::move(s));
  }
  for (int k = 2; k <= spare && level.size() >= 2 && trips.size() < cap; ++k) {
    std::vector<std::vector<int>> next;
    for (std::size_t i = 0; i < level.size() && trips.size() < cap; ++i) {
      for (std::size_t j = i + 1; j < level.size() && trips.size() < cap; ++j) {
        if (!std::equal(level[i].begin(), level[i].end() - 1, level[j].begin())) break;
        std::vector<int> cand = level[i];
        cand.push_back(level[j].back());
        bool all_subsets = true;
        for (std::size_t drop = 0; drop + 2 < cand.size() && all_subsets; ++drop) {
          std::vector<int> sub;
          for (std::size_t q = 0; q < cand.size(); ++q)
            if (q != drop) sub.push_back(cand[q]);
          all_subsets = std::binary_search(level.begin(), level.end(), sub);
        }
        if (all_subsets && try_set(cand)) next.push_back(std::move(cand));
      }
    }
    level = std::move(next);
  }
  return trips;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

class ComponentSolver {
 public:
  ComponentSolver(std::span<const FeasibleTrip> trips, const std::vector<std::size_t>& members, std::int64_t node_limit)
      : trips_(trips), node_limit_(node_limit) {
    std::map<int, std::vector<std::size_t>> by_vehicle;
    for (std::size_t t : members) {
      by_vehicle[trips[t].vehicle].push_back(t);
      for (RequestId r : trips[t].requests) request_index_.emplace(r, request_index_.size());
    }
    for (auto& [v, ts] : by_vehicle) {
      std::sort(ts.begin(), ts.end(), [&](std::size_t a, std::size_t b) {
        if (trips[a].value != trips[b].value) return trips[a].value > trips[b].value;
        return a < b;
      });
      options_.push_back(ts);
    }
    suffix_best_.assign(options_.size() + 1, 0.0);
    for (std::size_t k = options_.size(); k-- > 0;)
      suffix_best_[k] = suffix_best_[k + 1] + std::max(0.0, trips[options_[k].front()].value);
    share_.assign(request_index_.size(), 0.0);
    for (std::size_t t : members) {
      double s = std::max(0.0, trips[t].value) / static_cast<double>(trips[t].requests.size());
      for (RequestId r : trips[t].requests) {
        double& slot = share_[request_index_.at(r)];
        slot = std::max(slot, s);
      }
    }
    used_.assign(request_index_.size(), 0);
    greedy_incumbent(members);
  }

  void solve() {
    double unused_share = std::accumulate(share_.begin(), share_.end(), 0.0);
    dfs(0, 0.0, unused_share);
  }

  const std::vector<std::size_t>& best() const { return best_; }
  double best_value() const { return best_value_; }
  bool exhausted() const { return !limit_hit_; }
  std::int64_t nodes() const { return nodes_; }

 private:
  void greedy_incumbent(const std::vector<std::size_t>& members) {
    std::vector<std::size_t> order = members;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (trips_[a].value != trips_[b].value) return trips_[a].value > trips_[b].value;
      return a < b;
    });
    std::vector<int> vehicles_used;
    std::vector<char> used(request_index_.size(), 0);
    double total = 0.0;
    for (std::size_t t : order) {
      if (trips_[t].value <= 0.0) continue;
      if (std::find(vehicles_used.begin(), vehicles_used.end(), trips_[t].vehicle) != vehicles_used.end()) continue;
      bool clash = false;
      for (RequestId r : trips_[t].requests) clash = clash || used[request_index_.at(r)];
      if (clash) continue;
      for (RequestId r : trips_[t].requests) used[request_index_.at(r)] = 1;
      vehicles_used.push_back(trips_[t].vehicle);
      best_.push_back(t);
      total += trips_[t].value;
    }
    std::sort(best_.begin(), best_.end());
    best_value_ = total;
  }

  void consider(double value) {
    std::vector<std::size_t> sorted = chosen_;
    std::sort(sorted.begin(), sorted.end());
    if (value > best_value_ + kValueTieEps ||
        (value >= best_value_ - kValueTieEps && std::lexicographical_compare(sorted.begin(), sorted.end(),
                                                                             best_.begin(), best_.end()))) {
      best_value_ = value;
      best_ = std::move(sorted);
    }
  }

  void dfs(std::size_t k, double value, double unused_share) {
    if (limit_hit_) return;
    if (++nodes_ > node_limit_) {
      limit_hit_ = true;
      return;
    }
    if (k == options_.size()) {
      consider(value);
      return;
    }
    double bound = value + std::min(suffix_best_[k], unused_share);
    if (bound < best_value_ - kValueTieEps) return;
    for (std::size_t t : options_[k]) {
      const FeasibleTrip& trip = trips_[t];
      bool clash = false;
      for (RequestId r : trip.requests) clash = clash || used_[request_index_.at(r)];
      if (clash) continue;
      double freed = 0.0;
      for (RequestId r : trip.requests) {
        std::size_t ri = request_index_.at(r);
        used_[ri] = 1;
        freed += share_[ri];
      }
      chosen_.push_back(t);
      dfs(k + 1, value + trip.value, unused_share - freed);
      chosen_.pop_back();
      for (RequestId r : trip.requests) used_[request_index_.at(r)] = 0;
    }
    dfs(k + 1, value, unused_share);
  }

  std::span<const FeasibleTrip> trips_;
  std::int64_t node_limit_;
  std::unordered_map<RequestId, std::size_t> request_index_;
  std::vector<std::vector<std::size_t>> options_;
  std::vector<double> suffix_best_;
  std::vector<double> share_;
  std::vector<char> used_;
  std::vector<std::size_t> chosen_;
  std::vector<std::size_t> best_;
  double best_value_ = 0.0;
  bool limit_hit_ = false;
  std::int64_t nodes_ = 0;
};

}  // namespace

double value_function(std::size_t n_requests, double added_time_s, double epsilon) {
  return static_cast<double>(n_requests) - epsilon * (added_time_s / 3600.0);
}

std::vector<int> candidate_vehicles(const RideRequest& request, std::span<const DispatchVehicle> vehicles,
                                    double radius_s, double now, const TravelTimes& tt, int max_candidates) {
  std::vector<std::pair<double, int>> hits;
  for (std::size_t v = 0; v < vehicles.size(); ++v) {
    const DispatchVehicle& dv = vehicles[v];
    if (static_cast<int>(dv.existing.size()) >= dv.snap.capacity) continue;
    double t = (dv.snap.ready_time - now) + tt.time(dv.snap.node, request.origin);
    if (t <= radius_s + kConstraintSlack) hits.emplace_back(t, static_cast<int>(v));
  }
  std::sort(hits.begin(), hits.end());
  if (max_candidates >= 0 && hits.size() > static_cast<std::size_t>(max_candidates))
    hits.resize(static_cast<std::size_t>(max_candidates));
  std::vector<int> out;
  for (const auto& h : hits) out.push_back(h.second);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FeasibleTrip> build_feasible_trips(std::span<const RideRequest> batch,
                                               std::span<const DispatchVehicle> vehicles, const DispatchConfig& cfg,
                                               const TravelTimes& tt, double now) {
  CandidateLists cl = collect_candidates(batch, vehicles, cfg, tt, now);
  std::vector<std::vector<FeasibleTrip>> per(vehicles.size());
  const long n = static_cast<long>(vehicles.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long v = 0; v < n; ++v)
    per[static_cast<std::size_t>(v)] =
        trips_for_vehicle(static_cast<int>(v), cl.per_vehicle[static_cast<std::size_t>(v)], batch, vehicles, cfg, tt,
                          nullptr);
  std::vector<FeasibleTrip> out;
  for (auto& p : per)
    for (auto& t : p) out.push_back(std::move(t));
  return out;
}

std::vector<FeasibleTrip> build_feasible_trips_serial(std::span<const RideRequest> batch,
                                                      std::span<const DispatchVehicle> vehicles,
                                                      const DispatchConfig& cfg, const TravelTimes& tt, double now,
                                                      const ProblemObserver* observer) {
  CandidateLists cl = collect_candidates(batch, vehicles, cfg, tt, now);
  std::vector<FeasibleTrip> out;
  for (std::size_t v = 0; v < vehicles.size(); ++v)
    for (auto& t : trips_for_vehicle(static_cast<int>(v), cl.per_vehicle[v], batch, vehicles, cfg, tt, observer))
      out.push_back(std::move(t));
  return out;
}

Assignment solve_assignment(std::span<const FeasibleTrip> trips, std::span<const RequestId> batch,
                            std::int64_t node_limit) {
  Assignment a;
  UnionFind uf(trips.size());
  std::unordered_map<int, std::size_t> first_by_vehicle;
  std::unordered_map<RequestId, std::size_t> first_by_request;
  for (std::size_t t = 0; t < trips.size(); ++t) {
    auto [vit, vnew] = first_by_vehicle.emplace(trips[t].vehicle, t);
    if (!vnew) uf.unite(vit->second, t);
    for (RequestId r : trips[t].requests) {
      auto [rit, rnew] = first_by_request.emplace(r, t);
      if (!rnew) uf.unite(rit->second, t);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t t = 0; t < trips.size(); ++t) components[uf.find(t)].push_back(t);

  for (const auto& [root, members] : components) {
    ComponentSolver solver(trips, members, node_limit);
    solver.solve();
    a.nodes += solver.nodes();
    a.proven_optimal = a.proven_optimal && solver.exhausted();
    a.objective += solver.best_value();
    a.chosen.insert(a.chosen.end(), solver.best().begin(), solver.best().end());
  }
  std::sort(a.chosen.begin(), a.chosen.end());

  std::vector<RequestId> served;
  for (std::size_t t : a.chosen) served.insert(served.end(), trips[t].requests.begin(), trips[t].requests.end());
  std::sort(served.begin(), served.end());
  for (RequestId r : batch)
    if (!std::binary_search(served.begin(), served.end(), r)) a.unmatched.push_back(r);
  return a;
}

}  // namespace poolsim
