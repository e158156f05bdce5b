#include "poolsim/pooling.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace poolsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double detour_limit(const RideRequest& r, const Constraints& c) {
  return (1.0 + c.max_detour_ratio) * r.direct_time + kConstraintSlack;
}

double pickup_deadline(const RideRequest& r, const Constraints& c) {
  return r.request_time + c.max_wait_s + kConstraintSlack;
}

// For each slot, the slot holding the same request's pickup (-1 if none).
std::vector<int> pickup_slots(const RouteProblem& p) {
  std::vector<int> out(p.slot_count(), -1);
  for (std::size_t s = 0; s < p.slot_count(); ++s)
    if (p.slot(s).kind == StopKind::dropoff && s > 0 && p.slot(s - 1).request == p.slot(s).request &&
        p.slot(s - 1).kind == StopKind::pickup)
      out[s] = static_cast<int>(s - 1);
  return out;
}

class Enumerator {
 public:
  explicit Enumerator(const RouteProblem& p)
      : p_(p),
        c_(p.constraints()),
        n_(p.slot_count()),
        pickup_slot_(pickup_slots(p)),
        placed_(n_, 0),
        order_(n_, -1),
        pick_arr_(p.requests().size(), 0.0) {}

  void run() { dfs(0, 0, p_.vehicle().ready_time, p_.initial_onboard(), true); }

  bool found() const { return found_; }
  const std::vector<int>& best_order() const { return best_order_; }
  std::uint64_t leaves() const { return leaves_; }

 private:
  void dfs(std::size_t depth, std::size_t pos, double t, int load, bool ok) {
    if (depth == n_) {
      ++leaves_;
      if (!ok) return;
      double total = t - p_.vehicle().ready_time;
      if (!found_ || total < best_ - kTimeTieEps) {
        best_ = total;
        best_order_ = order_;
        found_ = true;
      }
      return;
    }
    for (std::size_t s = 0; s < n_; ++s) {
      if (placed_[s]) continue;
      const Stop& stop = p_.slot(s);
      if (stop.kind == StopKind::dropoff && pickup_slot_[s] >= 0 && !placed_[static_cast<std::size_t>(pickup_slot_[s])])
        continue;
      const auto ri = static_cast<std::size_t>(p_.slot_request(s));
      const RideRequest& r = p_.requests()[ri];
      double ta = t + p_.leg_time(pos, s + 1);
      bool ok2 = ok;
      int load2 = load;
      if (stop.kind == StopKind::pickup) {
        ok2 = ok2 && ta <= pickup_deadline(r, c_);
        ++load2;
        ok2 = ok2 && load2 <= c_.capacity;
        pick_arr_[ri] = ta;
      } else {
        double pick = r.onboard ? r.pickup_time : pick_arr_[ri];
        ok2 = ok2 && ta - pick <= detour_limit(r, c_);
        --load2;
      }
      placed_[s] = 1;
      order_[depth] = static_cast<int>(s);
      dfs(depth + 1, s + 1, ta, load2, ok2);
      placed_[s] = 0;
    }
  }

  const RouteProblem& p_;
  const Constraints& c_;
  std::size_t n_;
  std::vector<int> pickup_slot_;
  std::vector<char> placed_;
  std::vector<int> order_;
  std::vector<double> pick_arr_;
  std::vector<int> best_order_;
  double best_ = kInf;
  bool found_ = false;
  std::uint64_t leaves_ = 0;
};

}  // namespace

std::string Violation::describe() const {
  const char* name = "structure";
  switch (kind) {
    case Kind::structure: name = "structure"; break;
    case Kind::max_wait: name = "max_wait"; break;
    case Kind::detour: name = "detour"; break;
    case Kind::capacity: name = "capacity"; break;
  }
  return std::string(name) + ", request " + std::to_string(request) + " (stop " + std::to_string(stop_index) + ")";
}

Verdict check_plan(const RoutePlan& plan, std::span<const RideRequest> requests, const Constraints& c,
                   int initial_onboard) {
  auto fail = [](Violation::Kind k, RequestId r, std::size_t i) {
    return Verdict{false, Violation{k, r, i}};
  };
  if (plan.arrivals.size() != plan.stops.size()) return fail(Violation::Kind::structure, 0, 0);
  const std::size_t m = requests.size();
  std::vector<char> picked(m, 0), dropped(m, 0);
  std::vector<double> pick_arr(m, 0.0);
  int load = initial_onboard;
  for (std::size_t i = 0; i < plan.stops.size(); ++i) {
    const Stop& s = plan.stops[i];
    std::size_t ri = m;
    for (std::size_t k = 0; k < m; ++k)
      if (requests[k].id == s.request) {
        ri = k;
        break;
      }
    if (ri == m) return fail(Violation::Kind::structure, s.request, i);
    const RideRequest& r = requests[ri];
    const double t = plan.arrivals[i];
    if (s.kind == StopKind::pickup) {
      if (r.onboard || picked[ri] || s.node != r.origin) return fail(Violation::Kind::structure, r.id, i);
      picked[ri] = 1;
      pick_arr[ri] = t;
      if (t > pickup_deadline(r, c)) return fail(Violation::Kind::max_wait, r.id, i);
      if (++load > c.capacity) return fail(Violation::Kind::capacity, r.id, i);
    } else {
      if ((!r.onboard && !picked[ri]) || dropped[ri] || s.node != r.dest)
        return fail(Violation::Kind::structure, r.id, i);
      dropped[ri] = 1;
      double pick = r.onboard ? r.pickup_time : pick_arr[ri];
      if (t - pick > detour_limit(r, c)) return fail(Violation::Kind::detour, r.id, i);
      --load;
    }
  }
  for (std::size_t k = 0; k < m; ++k)
    if (!dropped[k]) return fail(Violation::Kind::structure, requests[k].id, plan.stops.size());
  return Verdict{};
}

RouteProblem::RouteProblem(const VehicleSnapshot& vehicle, std::vector<RideRequest> requests,
                           const Constraints& constraints, const TravelTimes& tt)
    : vehicle_(vehicle), constraints_(constraints), requests_(std::move(requests)) {
  std::sort(requests_.begin(), requests_.end(), [](const RideRequest& a, const RideRequest& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < requests_.size(); ++i) {
    const RideRequest& r = requests_[i];
    if (r.onboard) {
      ++initial_onboard_;
    } else {
      slots_.push_back({r.id, StopKind::pickup, r.origin});
      slot_req_.push_back(static_cast<int>(i));
    }
    slots_.push_back({r.id, StopKind::dropoff, r.dest});
    slot_req_.push_back(static_cast<int>(i));
  }
  dim_ = slots_.size() + 1;
  time_.assign(dim_ * dim_, 0.0);
  dist_.assign(dim_ * dim_, 0.0);
  auto node_at = [&](std::size_t pos) { return pos == 0 ? vehicle_.node : slots_[pos - 1].node; };
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 1; j < dim_; ++j) {
      time_[i * dim_ + j] = tt.time(node_at(i), node_at(j));
      dist_[i * dim_ + j] = tt.length(node_at(i), node_at(j));
    }
  }
}

RoutePlan RouteProblem::plan_for(std::span<const int> order) const {
  RoutePlan plan;
  double t = vehicle_.ready_time;
  std::size_t pos = 0;
  for (int s : order) {
    auto next = static_cast<std::size_t>(s) + 1;
    t += leg_time(pos, next);
    plan.distance += leg_distance(pos, next);
    plan.stops.push_back(slots_[static_cast<std::size_t>(s)]);
    plan.arrivals.push_back(t);
    pos = next;
  }
  plan.total_time = t - vehicle_.ready_time;
  return plan;
}

std::optional<RoutePlan> enumerate_best_route(const RouteProblem& p, EnumStats* stats) {
  Enumerator e(p);
  e.run();
  if (stats) stats->orderings += e.leaves();
  if (!e.found()) return std::nullopt;
  return p.plan_for(e.best_order());
}

std::optional<RoutePlan> nn_route(const RouteProblem& p) {
  // The greedy order does not depend on feasibility, so constraints are
  // checked while the route grows and the first violation ends the search.
  constexpr std::size_t kSmall = 32;
  const std::size_t n = p.slot_count();
  const std::size_t m = p.requests().size();
  if (n > kSmall || m > kSmall) {
    // Rare large instances: plain greedy followed by a full check.
    const auto pickup_slot = pickup_slots(p);
    std::vector<char> placed(n, 0);
    std::vector<int> order;
    std::size_t pos = 0;
    int load = p.initial_onboard();
    for (std::size_t step = 0; step < n; ++step) {
      int best = -1;
      double best_d = kInf;
      for (std::size_t s = 0; s < n; ++s) {
        if (placed[s]) continue;
        if (p.slot(s).kind == StopKind::pickup) {
          if (load >= p.constraints().capacity) continue;
        } else if (pickup_slot[s] >= 0 && !placed[static_cast<std::size_t>(pickup_slot[s])]) {
          continue;
        }
        double d = p.leg_time(pos, s + 1);
        if (best < 0 || d < best_d - kTimeTieEps) {
          best = static_cast<int>(s);
          best_d = d;
        }
      }
      if (best < 0) return std::nullopt;
      placed[static_cast<std::size_t>(best)] = 1;
      order.push_back(best);
      load += p.slot(static_cast<std::size_t>(best)).kind == StopKind::pickup ? 1 : -1;
      pos = static_cast<std::size_t>(best) + 1;
    }
    RoutePlan plan = p.plan_for(order);
    if (!check_plan(plan, p.requests(), p.constraints(), p.initial_onboard()).feasible) return std::nullopt;
    return plan;
  }

  const Constraints& c = p.constraints();
  std::array<char, kSmall> placed{};
  std::array<int, kSmall> order{};
  std::array<double, kSmall> pick_arr{};
  std::size_t pos = 0;
  int load = p.initial_onboard();
  double t = p.vehicle().ready_time;
  for (std::size_t step = 0; step < n; ++step) {
    int best = -1;
    double best_d = kInf;
    for (std::size_t s = 0; s < n; ++s) {
      if (placed[s]) continue;
      if (p.slot(s).kind == StopKind::pickup) {
        if (load >= c.capacity) continue;
      } else if (!p.requests()[static_cast<std::size_t>(p.slot_request(s))].onboard && !placed[s - 1]) {
        continue;  // a dropoff's pickup slot directly precedes it
      }
      double d = p.leg_time(pos, s + 1);
      if (best < 0 || d < best_d - kTimeTieEps) {
        best = static_cast<int>(s);
        best_d = d;
      }
    }
    if (best < 0) return std::nullopt;
    const auto bs = static_cast<std::size_t>(best);
    t += best_d;
    const auto ri = static_cast<std::size_t>(p.slot_request(bs));
    const RideRequest& r = p.requests()[ri];
    if (p.slot(bs).kind == StopKind::pickup) {
      if (t > pickup_deadline(r, c)) return std::nullopt;
      pick_arr[ri] = t;
      ++load;
    } else {
      if (t - (r.onboard ? r.pickup_time : pick_arr[ri]) > detour_limit(r, c)) return std::nullopt;
      --load;
    }
    placed[bs] = 1;
    order[step] = best;
    pos = bs + 1;
  }
  return p.plan_for(std::span<const int>(order.data(), n));
}

std::optional<std::vector<int>> slot_order(const RouteProblem& p, std::span<const Stop> stops) {
  if (stops.size() != p.slot_count()) return std::nullopt;
  std::vector<int> order;
  std::vector<char> used(p.slot_count(), 0);
  for (const Stop& s : stops) {
    int found = -1;
    for (std::size_t k = 0; k < p.slot_count(); ++k)
      if (!used[k] && p.slot(k) == s) {
        found = static_cast<int>(k);
        break;
      }
    if (found < 0) return std::nullopt;
    used[static_cast<std::size_t>(found)] = 1;
    order.push_back(found);
  }
  return order;
}

std::uint64_t ordering_count(int pickups, int dropoffs_only) {
  std::uint64_t f = 1;
  for (int i = 2; i <= 2 * pickups + dropoffs_only; ++i) f *= static_cast<std::uint64_t>(i);
  return f >> pickups;
}

}  // namespace poolsim
