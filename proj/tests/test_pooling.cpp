#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "pooling_oracle.hpp"
#include "poolsim/demand.hpp"
#include "poolsim/pooling.hpp"

using namespace poolsim;

namespace {

// All-pairs shortest times at the network's current speeds (Floyd-Warshall).
std::vector<std::vector<double>> all_pairs(const RoadNetwork& net) {
  const std::size_t n = net.node_count();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 1e300));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (const Edge& e : net.edges()) {
    double w = e.length_m / (edge_speed_kmh(e, net.speed_floor_kmh()) / 3.6);
    auto& cell = d[static_cast<std::size_t>(e.from)][static_cast<std::size_t>(e.to)];
    cell = std::min(cell, w);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  return d;
}

RideRequest ride(RequestId id, NodeIndex o, NodeIndex d, double t, double direct) {
  RideRequest r;
  r.id = id;
  r.origin = o;
  r.dest = d;
  r.request_time = t;
  r.direct_time = direct;
  return r;
}

void congest(RoadNetwork& net, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> k(0, 6);
  for (std::size_t e = 0; e < net.edge_count(); ++e)
    for (int i = k(rng); i > 0; --i) net.vehicle_enter_edge(static_cast<EdgeIndex>(e));
}

// Greedy reference: nearest eligible stop, ties to lowest request id then pickup.
std::vector<Stop> greedy_reference(const RouteProblem& p) {
  struct Pending {
    Stop s;
    std::size_t pos;
  };
  std::vector<Pending> todo;
  for (std::size_t k = 0; k < p.slot_count(); ++k) todo.push_back({p.slot(k), k + 1});
  std::vector<Stop> out;
  std::size_t at = 0;
  int load = p.initial_onboard();
  while (!todo.empty()) {
    int best = -1;
    for (std::size_t i = 0; i < todo.size(); ++i) {
      const Stop& s = todo[i].s;
      bool eligible;
      if (s.kind == StopKind::pickup) {
        eligible = load < p.constraints().capacity;
      } else {
        bool has_pickup = std::any_of(todo.begin(), todo.end(), [&](const Pending& q) {
          return q.s.request == s.request && q.s.kind == StopKind::pickup;
        });
        eligible = !has_pickup;
      }
      if (!eligible) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const Pending& b = todo[static_cast<std::size_t>(best)];
      double tb = p.leg_time(at, b.pos), ti = p.leg_time(at, todo[i].pos);
      if (ti < tb || (ti == tb && std::pair(s.request, s.kind) < std::pair(b.s.request, b.s.kind)))
        best = static_cast<int>(i);
    }
    const Pending chosen = todo[static_cast<std::size_t>(best)];
    todo.erase(todo.begin() + best);
    out.push_back(chosen.s);
    at = chosen.pos;
    load += chosen.s.kind == StopKind::pickup ? 1 : -1;
  }
  return out;
}

}  // namespace

TEST(CheckPlan, DirectTripIsFeasible) {
  RoadNetwork net = testutil::small_grid(3, 3);
  TravelTimes tt = testutil::prepared_snapshot(net);
  std::vector<RideRequest> r{ride(4, 0, 8, 100.0, tt.time(0, 8))};
  RoutePlan plan;
  plan.stops = {{4, StopKind::pickup, 0}, {4, StopKind::dropoff, 8}};
  plan.arrivals = {100.0, 100.0 + tt.time(0, 8)};
  Verdict v = check_plan(plan, r, Constraints{}, 0);
  EXPECT_TRUE(v.feasible);
  EXPECT_FALSE(v.violation.has_value());
}

TEST(CheckPlan, LatePickupByOneSecond) {
  RoadNetwork net = testutil::small_grid(3, 3);
  TravelTimes tt = testutil::prepared_snapshot(net);
  Constraints c;
  std::vector<RideRequest> r{ride(4, 0, 8, 100.0, tt.time(0, 8))};
  RoutePlan plan;
  plan.stops = {{4, StopKind::pickup, 0}, {4, StopKind::dropoff, 8}};
  double pick = 100.0 + c.max_wait_s + 1.0;
  plan.arrivals = {pick, pick + tt.time(0, 8)};
  Verdict v = check_plan(plan, r, c, 0);
  EXPECT_FALSE(v.feasible);
  ASSERT_TRUE(v.violation.has_value());
  EXPECT_EQ(v.violation->kind, Violation::Kind::max_wait);
  EXPECT_NE(v.violation->describe().find("max_wait, request 4"), std::string::npos);
  // Exactly at the deadline is still fine.
  plan.arrivals = {pick - 1.0, pick - 1.0 + tt.time(0, 8)};
  EXPECT_TRUE(check_plan(plan, r, c, 0).feasible);
}

TEST(CheckPlan, DetourAndCapacityAndStructure) {
  std::vector<RideRequest> r{ride(1, 0, 1, 0.0, 100.0), ride(2, 2, 3, 0.0, 100.0)};
  Constraints c;
  c.capacity = 1;
  RoutePlan plan;
  plan.stops = {{1, StopKind::pickup, 0}, {2, StopKind::pickup, 2}, {1, StopKind::dropoff, 1},
                {2, StopKind::dropoff, 3}};
  plan.arrivals = {0, 10, 20, 30};
  Verdict v = check_plan(plan, r, c, 0);
  ASSERT_TRUE(v.violation.has_value());
  EXPECT_EQ(v.violation->kind, Violation::Kind::capacity);
  EXPECT_EQ(v.violation->stop_index, 1u);

  c.capacity = 2;
  plan.arrivals = {0, 10, 151, 160};
  v = check_plan(plan, r, c, 0);
  ASSERT_TRUE(v.violation.has_value());
  EXPECT_EQ(v.violation->kind, Violation::Kind::detour);
  EXPECT_EQ(v.violation->request, 1);
  plan.arrivals = {0, 10, 150, 160};
  EXPECT_TRUE(check_plan(plan, r, c, 0).feasible);

  std::swap(plan.stops[0], plan.stops[2]);
  v = check_plan(plan, r, c, 0);
  ASSERT_TRUE(v.violation.has_value());
  EXPECT_EQ(v.violation->kind, Violation::Kind::structure);
}

TEST(CheckPlan, OnboardDetourUsesRecordedPickup) {
  RideRequest r = ride(3, 0, 5, 0.0, 100.0);
  r.onboard = true;
  r.pickup_time = 50.0;
  RoutePlan plan;
  plan.stops = {{3, StopKind::dropoff, 5}};
  plan.arrivals = {200.0};
  EXPECT_TRUE(check_plan(plan, std::span(&r, 1), Constraints{}, 1).feasible);
  plan.arrivals = {200.5};
  EXPECT_FALSE(check_plan(plan, std::span(&r, 1), Constraints{}, 1).feasible);
}

TEST(CheckPlan, InterleavedPlanMatchesRecomputedArrivals) {
  std::mt19937_64 rng(11);
  RoadNetwork net = testutil::small_grid(6, 6, 250.0);
  congest(net, rng);
  TravelTimes tt = testutil::prepared_snapshot(net);
  auto fw = all_pairs(net);
  std::uniform_int_distribution<NodeIndex> node(0, 35);
  for (int trial = 0; trial < 200; ++trial) {
    NodeIndex o1 = node(rng), d1 = node(rng), o2 = node(rng), d2 = node(rng), start = node(rng);
    if (o1 == d1 || o2 == d2) continue;
    Constraints c;
    c.max_wait_s = std::uniform_real_distribution<double>(60, 400)(rng);
    c.max_detour_ratio = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<RideRequest> reqs{ride(1, o1, d1, 0.0, fw[o1][d1]), ride(2, o2, d2, 0.0, fw[o2][d2])};
    VehicleSnapshot v{1, 4, start, 20.0};
    RouteProblem p(v, reqs, c, tt);
    // pA, pB, dA, dB
    std::vector<Stop> stops{{1, StopKind::pickup, o1}, {2, StopKind::pickup, o2}, {1, StopKind::dropoff, d1},
                            {2, StopKind::dropoff, d2}};
    auto order = slot_order(p, stops);
    ASSERT_TRUE(order.has_value());
    RoutePlan plan = p.plan_for(*order);
    double t = 20.0;
    NodeIndex at = start;
    for (std::size_t i = 0; i < stops.size(); ++i) {
      t += fw[static_cast<std::size_t>(at)][static_cast<std::size_t>(stops[i].node)];
      at = stops[i].node;
      ASSERT_NEAR(plan.arrivals[i], t, 1e-9 * std::max(1.0, t));
    }
    bool ok = plan.arrivals[0] <= c.max_wait_s + 1e-9 && plan.arrivals[1] <= c.max_wait_s + 1e-9 &&
              plan.arrivals[2] - plan.arrivals[0] <= (1 + c.max_detour_ratio) * fw[o1][d1] + 1e-9 &&
              plan.arrivals[3] - plan.arrivals[1] <= (1 + c.max_detour_ratio) * fw[o2][d2] + 1e-9;
    EXPECT_EQ(check_plan(plan, p.requests(), c, 0).feasible, ok);
  }
}

TEST(Enumerate, SingleOnboardDropoff) {
  RoadNetwork net = testutil::small_grid(3, 3);
  TravelTimes tt = testutil::prepared_snapshot(net);
  RideRequest r = ride(7, 0, 8, 0.0, tt.time(0, 8));
  r.onboard = true;
  r.pickup_time = 10.0;
  RouteProblem p(VehicleSnapshot{1, 4, 4, 30.0}, {r}, Constraints{}, tt);
  EnumStats st;
  auto plan = enumerate_best_route(p, &st);
  ASSERT_TRUE(plan.has_value());
  EXPECT_EQ(st.orderings, 1u);
  ASSERT_EQ(plan->stops.size(), 1u);
  EXPECT_EQ(plan->stops[0], (Stop{7, StopKind::dropoff, 8}));
  EXPECT_DOUBLE_EQ(plan->total_time, tt.time(4, 8));
}

TEST(Enumerate, IdenticalOriginDestinationPair) {
  RoadNetwork net = testutil::small_grid(4, 4);
  TravelTimes tt = testutil::prepared_snapshot(net);
  const double direct = tt.time(5, 15);
  std::vector<RideRequest> reqs{ride(9, 5, 15, 0.0, direct), ride(3, 5, 15, 0.0, direct)};
  RouteProblem p(VehicleSnapshot{1, 4, 0, 0.0}, reqs, Constraints{}, tt);
  auto plan = enumerate_best_route(p);
  ASSERT_TRUE(plan.has_value());
  std::vector<Stop> want{{3, StopKind::pickup, 5}, {9, StopKind::pickup, 5}, {3, StopKind::dropoff, 15},
                         {9, StopKind::dropoff, 15}};
  EXPECT_EQ(plan->stops, want);
  EXPECT_NEAR(plan->total_time, tt.time(0, 5) + direct, 1e-9);
}

TEST(Enumerate, OrderingCountClosedForm) {
  EXPECT_EQ(ordering_count(0, 0), 1u);
  EXPECT_EQ(ordering_count(1, 0), 1u);
  EXPECT_EQ(ordering_count(2, 0), 6u);
  EXPECT_EQ(ordering_count(3, 0), 90u);
  EXPECT_EQ(ordering_count(0, 3), 6u);
  EXPECT_EQ(ordering_count(2, 2), 180u);
}

TEST(Enumerate, VisitsEveryValidOrdering) {
  RoadNetwork net = testutil::small_grid(5, 5);
  TravelTimes tt = testutil::prepared_snapshot(net);
  std::mt19937_64 rng(5);
  for (int p = 0; p <= 3; ++p)
    for (int d = 0; p + d <= 6 && 2 * p + d <= 6; ++d) {
      if (p + d == 0) continue;
      Constraints c;
      c.max_wait_s = 1e6;
      c.max_detour_ratio = 1e6;
      RouteProblem prob = oracle::random_problem(net, tt, rng, d, p, p + d, c);
      EnumStats st;
      enumerate_best_route(prob, &st);
      EXPECT_EQ(st.orderings, ordering_count(p, d)) << p << " pickups, " << d << " dropoffs";
      EXPECT_EQ(oracle::brute_force_route(prob).valid_orderings, ordering_count(p, d));
    }
}

class RandomInstances : public ::testing::TestWithParam<bool> {};

TEST_P(RandomInstances, EnumerationMatchesBruteForce) {
  std::mt19937_64 rng(GetParam() ? 101 : 202);
  RoadNetwork net = testutil::small_grid(7, 7, 250.0);
  if (GetParam()) congest(net, rng);
  TravelTimes tt = testutil::prepared_snapshot(net);
  int feasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    int fresh = std::uniform_int_distribution<int>(1, 3)(rng);
    int onboard = std::uniform_int_distribution<int>(0, 6 - fresh >= 2 ? 2 : 0)(rng);
    Constraints c;
    c.max_detour_ratio = GetParam() ? 1.5 : 0.5;
    RouteProblem p = oracle::random_problem(net, tt, rng, onboard, fresh, fresh + onboard + 1, c);
    auto got = enumerate_best_route(p);
    auto want = oracle::brute_force_route(p);
    ASSERT_EQ(got.has_value(), want.best.has_value()) << "trial " << trial;
    if (!got) continue;
    ++feasible;
    EXPECT_EQ(got->stops, want.best->stops) << "trial " << trial;
    EXPECT_NEAR(got->total_time, want.best->total, 1e-9 * want.best->total);
    for (std::size_t i = 0; i < got->arrivals.size(); ++i)
      EXPECT_NEAR(got->arrivals[i], want.best->arrivals[i], 1e-9 * want.best->arrivals[i]);
  }
  EXPECT_GT(feasible, 30);
}

TEST_P(RandomInstances, SoundnessDominanceAndGreedyRule) {
  std::mt19937_64 rng(GetParam() ? 303 : 404);
  RoadNetwork net = testutil::small_grid(7, 7, 250.0);
  if (GetParam()) congest(net, rng);
  TravelTimes tt = testutil::prepared_snapshot(net);
  int nn_plans = 0;
  for (int trial = 0; trial < 400; ++trial) {
    int fresh = std::uniform_int_distribution<int>(1, 3)(rng);
    int onboard = std::uniform_int_distribution<int>(0, 2)(rng);
    Constraints c;
    c.max_detour_ratio = 1.0;
    int cap = fresh + onboard + std::uniform_int_distribution<int>(-1, 1)(rng);
    cap = std::max(cap, onboard + 1);
    RouteProblem p = oracle::random_problem(net, tt, rng, onboard, fresh, cap, c);
    auto nn = nn_route(p);
    auto ex = enumerate_best_route(p);
    if (ex) EXPECT_TRUE(check_plan(*ex, p.requests(), c, p.initial_onboard()).feasible);
    if (nn) {
      ++nn_plans;
      EXPECT_TRUE(check_plan(*nn, p.requests(), c, p.initial_onboard()).feasible);
      ASSERT_TRUE(ex.has_value());
      EXPECT_LE(ex->total_time, nn->total_time + kTimeTieEps);
      EXPECT_EQ(nn->stops, greedy_reference(p));
    } else {
      // Absent only when the greedy order itself breaks a constraint.
      auto order = slot_order(p, greedy_reference(p));
      ASSERT_TRUE(order.has_value());
      EXPECT_FALSE(check_plan(p.plan_for(*order), p.requests(), c, p.initial_onboard()).feasible);
    }
  }
  EXPECT_GT(nn_plans, 30);
}

TEST_P(RandomInstances, InputOrderDoesNotMatter) {
  std::mt19937_64 rng(GetParam() ? 505 : 606);
  RoadNetwork net = testutil::small_grid(6, 6, 250.0);
  if (GetParam()) congest(net, rng);
  TravelTimes tt = testutil::prepared_snapshot(net);
  for (int trial = 0; trial < 100; ++trial) {
    Constraints c;
    c.max_detour_ratio = 1.0;
    RouteProblem p = oracle::random_problem(net, tt, rng, 1, 3, 4, c);
    std::vector<RideRequest> shuffled(p.requests().begin(), p.requests().end());
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    RouteProblem q(p.vehicle(), shuffled, c, tt);
    auto a = enumerate_best_route(p), b = enumerate_best_route(q);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) EXPECT_EQ(a->stops, b->stops);
    auto x = nn_route(p), y = nn_route(q);
    ASSERT_EQ(x.has_value(), y.has_value());
    if (x) EXPECT_EQ(x->stops, y->stops);
  }
}

INSTANTIATE_TEST_SUITE_P(Pooling, RandomInstances, ::testing::Values(false, true),
                         [](const auto& info) { return info.param ? "Congested" : "FreeFlow"; });

TEST(NearestNeighbor, SingleRequestMatchesEnumeration) {
  RoadNetwork net = testutil::small_grid(5, 5);
  TravelTimes tt = testutil::prepared_snapshot(net);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    RouteProblem p = oracle::random_problem(net, tt, rng, 0, 1, 4);
    auto a = nn_route(p), b = enumerate_best_route(p);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_EQ(a->stops, b->stops);
      EXPECT_EQ(a->total_time, b->total_time);
    }
  }
}

TEST(NearestNeighbor, GreedyCanBeFeasibleButNotOptimal) {
  std::mt19937_64 rng(21);
  RoadNetwork net = testutil::small_grid(7, 7, 250.0);
  congest(net, rng);
  TravelTimes tt = testutil::prepared_snapshot(net);
  Constraints c;
  c.max_detour_ratio = 1.0;
  for (int trial = 0; trial < 5000; ++trial) {
    RouteProblem p = oracle::random_problem(net, tt, rng, 0, 3, 4, c);
    auto nn = nn_route(p);
    if (!nn) continue;
    auto best = oracle::brute_force_route(p).best;
    ASSERT_TRUE(best.has_value());
    if (best->total < nn->total_time - 1.0) {
      EXPECT_EQ(nn->stops, greedy_reference(p));
      EXPECT_LT(enumerate_best_route(p)->total_time, nn->total_time);
      return;
    }
  }
  FAIL() << "no instance where greedy was feasible but suboptimal";
}

TEST(NearestNeighbor, FullVehicleOnlyDropsOff) {
  RoadNetwork net = testutil::small_grid(5, 5);
  TravelTimes tt = testutil::prepared_snapshot(net);
  std::vector<RideRequest> reqs;
  for (RequestId id : {1, 2}) {
    RideRequest r = ride(id, 0, id == 1 ? 24 : 4, 0.0, 1000.0);
    r.onboard = true;
    r.pickup_time = 0.0;
    reqs.push_back(r);
  }
  reqs.push_back(ride(3, 12, 13, 0.0, tt.time(12, 13)));
  Constraints c;
  c.capacity = 2;
  c.max_detour_ratio = 5.0;
  // Vehicle sits on the new request's origin but has no free seat.
  RouteProblem p(VehicleSnapshot{1, 2, 12, 0.0}, reqs, c, tt);
  auto nn = nn_route(p);
  ASSERT_TRUE(nn.has_value());
  EXPECT_EQ(nn->stops.front().kind, StopKind::dropoff);
  EXPECT_EQ(nn->stops, greedy_reference(p));
}
