#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "poolsim/netgraph.hpp"

using namespace poolsim;
using testutil::EdgeSpec;
using testutil::make_network;

namespace {

Edge plain_edge(double len_m, int lanes, double kb, int vehicles) {
  Edge e;
  e.length_m = len_m;
  e.lanes = lanes;
  e.free_flow_kmh = 45.0;
  e.jam_density = 100.0;
  e.base_density = kb;
  e.sim_vehicles = vehicles;
  return e;
}

// Every simple path from o to d, as edge-index sequences.
void all_paths(const RoadNetwork& net, NodeIndex at, NodeIndex d, std::vector<char>& seen, std::vector<EdgeIndex>& cur,
               std::vector<std::vector<EdgeIndex>>& out) {
  if (at == d) {
    out.push_back(cur);
    return;
  }
  for (EdgeIndex e : net.out_edges(at)) {
    NodeIndex to = net.edge(e).to;
    if (seen[static_cast<std::size_t>(to)]) continue;
    seen[static_cast<std::size_t>(to)] = 1;
    cur.push_back(e);
    all_paths(net, to, d, seen, cur, out);
    cur.pop_back();
    seen[static_cast<std::size_t>(to)] = 0;
  }
}

}  // namespace

TEST(EdgeSpeed, FreeFlowWhenEmpty) { EXPECT_DOUBLE_EQ(edge_speed_kmh(plain_edge(1000, 1, 0, 0), 5.0), 45.0); }

TEST(EdgeSpeed, LinearMidpoint) {
  // 50 vehicles on 1 km of one lane: k = 50.
  EXPECT_NEAR(edge_speed_kmh(plain_edge(1000, 1, 0, 50), 5.0), 22.5, 1e-12);
}

TEST(EdgeSpeed, JamDensityIsFloored) {
  EXPECT_DOUBLE_EQ(edge_speed_kmh(plain_edge(1000, 1, 0, 100), 5.0), 5.0);
  EXPECT_DOUBLE_EQ(edge_speed_kmh(plain_edge(1000, 1, 0, 250), 5.0), 5.0);
}

TEST(EdgeSpeed, BaseDensityPlusRideDensity) {
  // k_b = 20 plus 10 vehicles on 1 km: 45 * (1 - 30/100) = 31.5.
  EXPECT_NEAR(edge_speed_kmh(plain_edge(1000, 1, 20, 10), 5.0), 31.5, 1e-12);
  // Lanes divide the ride density: 10 vehicles on 2 lanes of 500 m is k_r = 10.
  EXPECT_NEAR(ride_density(plain_edge(500, 2, 0, 10)), 10.0, 1e-12);
}

TEST(Network, SquareGridAtFreeFlow) {
  RoadNetwork net = testutil::small_grid(2, 2);
  EXPECT_EQ(net.node_count(), 4u);
  EXPECT_EQ(net.edge_count(), 8u);
  for (std::size_t e = 0; e < net.edge_count(); ++e) EXPECT_DOUBLE_EQ(net.speed_kmh(static_cast<EdgeIndex>(e)), 45.0);
}

TEST(Network, TwentyByTwentyGridCounts) {
  RoadNetwork net = testutil::small_grid(20, 20);
  EXPECT_EQ(net.node_count(), 400u);
  EXPECT_EQ(net.edge_count(), 2u * (20 * 19 + 19 * 20));
  EXPECT_EQ(net.edge_count(), 1520u);
}

TEST(Network, GridSpacingIsMetric) {
  RoadNetwork net = testutil::small_grid(3, 3, 300.0);
  for (const Edge& e : net.edges()) {
    const Node& a = net.node(e.from);
    const Node& b = net.node(e.to);
    EXPECT_NEAR(haversine_m(a.lon, a.lat, b.lon, b.lat), 300.0, 0.5);
  }
}

TEST(Network, DanglingEndpointNamesEdge) {
  std::istringstream nodes("node_id,lon,lat\n0,104,30\n1,104.001,30\n");
  std::istringstream edges("edge_id,from_node,to_node,length_m,lanes\n3,0,1,100,1\n7,1,99,100,1\n");
  try {
    load_network(nodes, edges, {});
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("dangling endpoint, edge 7"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("edges:3"), std::string::npos) << e.what();
  }
}

TEST(Network, RejectsBadRows) {
  auto load = [](const std::string& n, const std::string& e) {
    std::istringstream ni(n), ei(e);
    return load_network(ni, ei, {});
  };
  const std::string nodes = "node_id,lon,lat\n0,104,30\n1,104.001,30\n";
  EXPECT_THROW(load(nodes, "edge_id,from_node,to_node,length_m,lanes\n0,0,1,0,1\n1,1,0,10,1\n"), LoadError);
  EXPECT_THROW(load(nodes, "edge_id,from_node,to_node,length_m,lanes\n0,0,1,10,1\n0,1,0,10,1\n"), LoadError);
  EXPECT_THROW(load("node_id,lon,lat\n0,104,30\n0,104.001,30\n", "edge_id,from_node,to_node,length_m,lanes\n"),
               LoadError);
  EXPECT_THROW(load(nodes, "edge_id,from_node,to_node,length_m,lanes\n0,0,1,10,0\n1,1,0,10,1\n"), LoadError);
  // One-way only: not strongly connected.
  EXPECT_THROW(load(nodes, "edge_id,from_node,to_node,length_m,lanes\n0,0,1,10,1\n"), LoadError);
}

TEST(Network, OptionalColumnsOverrideDefaults) {
  std::istringstream nodes("node_id,lon,lat\n0,104,30\n1,104.001,30\n");
  std::istringstream edges(
      "edge_id,from_node,to_node,length_m,lanes,free_flow_kmh,base_density,jam_density\n"
      "0,0,1,100,2,60,10,120\n1,1,0,100,1,,,\n");
  NetworkDefaults d;
  d.base_density = 3.0;
  RoadNetwork net = load_network(nodes, edges, d);
  EXPECT_DOUBLE_EQ(net.edge(0).free_flow_kmh, 60.0);
  EXPECT_DOUBLE_EQ(net.edge(0).base_density, 10.0);
  EXPECT_DOUBLE_EQ(net.edge(0).jam_density, 120.0);
  EXPECT_EQ(net.edge(0).lanes, 2);
  EXPECT_DOUBLE_EQ(net.edge(1).free_flow_kmh, 45.0);
  EXPECT_DOUBLE_EQ(net.edge(1).base_density, 3.0);
  EXPECT_DOUBLE_EQ(net.edge(1).jam_density, 100.0);
}

TEST(Network, WriteThenLoadRoundTrips) {
  RoadNetwork net = testutil::small_grid(3, 4);
  std::ostringstream n, e;
  write_network(net, n, e);
  std::istringstream ni(n.str()), ei(e.str());
  RoadNetwork back = load_network(ni, ei, {});
  ASSERT_EQ(back.edge_count(), net.edge_count());
  for (std::size_t i = 0; i < net.edge_count(); ++i) {
    EXPECT_EQ(back.edge(static_cast<EdgeIndex>(i)).id, net.edge(static_cast<EdgeIndex>(i)).id);
    EXPECT_DOUBLE_EQ(back.edge(static_cast<EdgeIndex>(i)).length_m, net.edge(static_cast<EdgeIndex>(i)).length_m);
  }
}

TEST(Network, EnterLeaveRestoresSpeed) {
  RoadNetwork net = testutil::ring(4, 1000.0);
  const double before = net.speed_kmh(2);
  net.vehicle_enter_edge(2);
  EXPECT_LT(net.speed_kmh(2), before);
  EXPECT_EQ(net.on_road_vehicles(), 1);
  net.vehicle_leave_edge(2);
  EXPECT_EQ(net.speed_kmh(2), before);
  EXPECT_EQ(net.on_road_vehicles(), 0);
}

TEST(Network, LeaveOnEmptyEdgeAborts) {
  RoadNetwork net = testutil::ring(4);
  try {
    net.vehicle_leave_edge(3);
    FAIL();
  } catch (const InternalError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos);
  }
}

TEST(Network, TenVehiclesOnOneKilometre) {
  NetworkDefaults d;
  d.base_density = 20.0;
  RoadNetwork net = testutil::ring(3, 1000.0, d);
  for (int i = 0; i < 10; ++i) net.vehicle_enter_edge(0);
  EXPECT_NEAR(net.speed_kmh(0), 31.5, 1e-12);
}

TEST(NearestNode, ExactAndTies) {
  RoadNetwork net = testutil::small_grid(3, 3);
  const Node& n5 = net.node(5);
  EXPECT_EQ(nearest_node(net, n5.lon, n5.lat), 5);
  // Exactly equidistant from nodes 2 and 7: the lowest id wins.
  std::istringstream nodes("node_id,lon,lat\n2,0.5,0\n7,-0.5,0\n");
  std::istringstream edges("edge_id,from_node,to_node,length_m,lanes\n0,2,7,100,1\n1,7,2,100,1\n");
  RoadNetwork line = load_network(nodes, edges, {});
  EXPECT_EQ(line.node(nearest_node(line, 0.0, 0.0)).id, 2);
}

TEST(NearestNode, MatchesBruteForceScan) {
  RoadNetwork net = testutil::small_grid(6, 7);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lon(103.99, 104.03), lat(30.59, 30.62);
  for (int i = 0; i < 300; ++i) {
    double x = lon(rng), y = lat(rng);
    NodeIndex best = 0;
    double bd = 1e300;
    for (std::size_t k = 0; k < net.node_count(); ++k) {
      double d = haversine_m(x, y, net.node(static_cast<NodeIndex>(k)).lon, net.node(static_cast<NodeIndex>(k)).lat);
      if (d < bd) {
        bd = d;
        best = static_cast<NodeIndex>(k);
      }
    }
    EXPECT_EQ(nearest_node(net, x, y), best);
  }
}

TEST(NearestNode, Errors) {
  RoadNetwork empty;
  EXPECT_THROW(nearest_node(empty, 0, 0), LoadError);
  RoadNetwork net = testutil::small_grid(2, 2);
  EXPECT_THROW(nearest_node(net, std::nan(""), 0), LoadError);
}

TEST(ShortestPath, OriginEqualsDest) {
  RoadNetwork net = testutil::small_grid(3, 3);
  auto p = shortest_path(net, 4, 4);
  ASSERT_TRUE(p);
  EXPECT_TRUE(p->edges.empty());
  EXPECT_EQ(p->total_time_s, 0.0);
  EXPECT_EQ(p->total_length_m, 0.0);
}

TEST(ShortestPath, AvoidsCongestedParallelRoute) {
  // 0 -> 1 -> 3 and 0 -> 2 -> 3, equal lengths; congest edge 0 to 22.5 km/h.
  RoadNetwork net = make_network(4, {{0, 0, 1, 1000}, {1, 0, 2, 1000}, {2, 1, 3, 1000}, {3, 2, 3, 1000},
                                     {4, 3, 0, 1000}, {5, 1, 0, 1000}, {6, 2, 0, 1000}});
  auto free = shortest_path(net, 0, 3);
  ASSERT_TRUE(free);
  EXPECT_EQ(free->edges, (std::vector<EdgeIndex>{0, 2}));  // lexicographic tie-break
  for (int i = 0; i < 50; ++i) net.vehicle_enter_edge(0);
  auto p = shortest_path(net, 0, 3);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->edges, (std::vector<EdgeIndex>{1, 3}));
}

TEST(ShortestPath, MatchesExhaustiveEnumerationOnCongestedGrid) {
  // 5 x 5 grid, random densities; times compared against every simple path.
  RoadNetwork net = testutil::small_grid(5, 5, 200.0);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> veh(0, 12);
  for (std::size_t e = 0; e < net.edge_count(); ++e) {
    int k = veh(rng);
    for (int i = 0; i < k; ++i) net.vehicle_enter_edge(static_cast<EdgeIndex>(e));
  }
  std::uniform_int_distribution<int> node(0, 24);
  int checked = 0;
  while (checked < 20) {
    NodeIndex o = node(rng), d = node(rng);
    if (o == d) continue;
    ++checked;
    std::vector<std::vector<EdgeIndex>> paths;
    std::vector<char> seen(net.node_count(), 0);
    seen[static_cast<std::size_t>(o)] = 1;
    std::vector<EdgeIndex> cur;
    all_paths(net, o, d, seen, cur, paths);
    double best = 1e300;
    for (const auto& p : paths) {
      double t = 0;
      for (EdgeIndex e : p) t += net.travel_time_s(e);
      best = std::min(best, t);
    }
    auto sp = shortest_path(net, o, d);
    ASSERT_TRUE(sp);
    EXPECT_NEAR(sp->total_time_s, best, 1e-9 * best);
    double t = 0;
    for (EdgeIndex e : sp->edges) t += net.travel_time_s(e);
    EXPECT_NEAR(t, sp->total_time_s, 1e-9 * best);
  }
}

TEST(ShortestPath, LexicographicTieBreakMatchesOracle) {
  // Integer-second edge times (36 km/h = 10 m/s, lengths multiples of 10 m)
  // make ties exact, so the oracle can pick the lexicographic minimum.
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 7;
    std::vector<EdgeSpec> es;
    std::int64_t id = 0;
    std::uniform_int_distribution<int> len(1, 3);
    std::bernoulli_distribution extra(0.35);
    for (int i = 0; i < n; ++i) {
      es.push_back({id++, i, (i + 1) % n, 10.0 * len(rng)});
      es.push_back({id++, (i + 1) % n, i, 10.0 * len(rng)});
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b && extra(rng)) es.push_back({id++, a, b, 10.0 * len(rng)});
    NetworkDefaults d;
    d.free_flow_kmh = 36.0;
    RoadNetwork net = make_network(n, es, d);
    for (NodeIndex o = 0; o < n; ++o)
      for (NodeIndex t = 0; t < n; ++t) {
        if (o == t) continue;
        std::vector<std::vector<EdgeIndex>> paths;
        std::vector<char> seen(net.node_count(), 0);
        seen[static_cast<std::size_t>(o)] = 1;
        std::vector<EdgeIndex> cur;
        all_paths(net, o, t, seen, cur, paths);
        double best = 1e300;
        std::vector<EdgeIndex> best_path;
        for (const auto& p : paths) {
          double tt = 0;
          for (EdgeIndex e : p) tt += net.travel_time_s(e);
          if (tt < best - 1e-9 || (std::abs(tt - best) <= 1e-9 && p < best_path)) {
            best = tt;
            best_path = p;
          }
        }
        auto sp = shortest_path(net, o, t);
        ASSERT_TRUE(sp);
        EXPECT_NEAR(sp->total_time_s, best, 1e-9);
        EXPECT_EQ(sp->edges, best_path) << "trial " << trial << " " << o << "->" << t;
      }
  }
}

TEST(ShortestPath, AddingVehicleNeverShortensPaths) {
  RoadNetwork net = testutil::small_grid(4, 4, 250.0);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> edge(0, static_cast<int>(net.edge_count()) - 1), node(0, 15);
  for (int i = 0; i < 40; ++i) {
    NodeIndex o = node(rng), d = node(rng);
    auto before = shortest_path(net, o, d);
    EdgeIndex e = edge(rng);
    net.vehicle_enter_edge(e);
    auto after = shortest_path(net, o, d);
    ASSERT_TRUE(before && after);
    EXPECT_GE(after->total_time_s, before->total_time_s - 1e-9);
    bool used = std::find(before->edges.begin(), before->edges.end(), e) != before->edges.end();
    if (!used) EXPECT_EQ(after->edges, before->edges);
  }
}

TEST(TravelTimes, ParallelAndSerialTreesAgree) {
  RoadNetwork net = testutil::small_grid(8, 8, 200.0);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> veh(0, 20);
  for (std::size_t e = 0; e < net.edge_count(); ++e)
    for (int i = veh(rng); i > 0; --i) net.vehicle_enter_edge(static_cast<EdgeIndex>(e));
  TravelTimes a(net), b(net);
  auto nodes = testutil::all_nodes(net);
  a.prepare(nodes);
  b.prepare_serial(nodes);
  for (NodeIndex u : nodes)
    for (NodeIndex v : nodes) {
      EXPECT_EQ(a.time(u, v), b.time(u, v));
      EXPECT_EQ(a.length(u, v), b.length(u, v));
      EXPECT_EQ(a.next_edge(u, v), b.next_edge(u, v));
    }
}

TEST(TravelTimes, SnapshotIgnoresLaterDensityChanges) {
  RoadNetwork net = testutil::small_grid(3, 3);
  TravelTimes tt(net);
  std::vector<NodeIndex> t{8};
  tt.prepare_serial(t);
  const double before = tt.time(0, 8);
  for (int i = 0; i < 30; ++i) net.vehicle_enter_edge(0);
  EXPECT_EQ(tt.time(0, 8), before);
  EXPECT_THROW(tt.time(0, 3), InternalError);  // tree for 3 not prepared
}

TEST(TravelTimes, MatchesShortestPathAndWalksIt) {
  RoadNetwork net = testutil::small_grid(5, 5, 200.0);
  for (int i = 0; i < 15; ++i) net.vehicle_enter_edge(static_cast<EdgeIndex>(i * 3));
  TravelTimes tt = testutil::prepared_snapshot(net);
  for (NodeIndex o = 0; o < 25; o += 3)
    for (NodeIndex d = 0; d < 25; d += 2) {
      auto sp = shortest_path(net, o, d);
      ASSERT_TRUE(sp);
      EXPECT_NEAR(tt.time(o, d), sp->total_time_s, 1e-9 * std::max(1.0, sp->total_time_s));
      std::vector<EdgeIndex> walked;
      for (NodeIndex at = o; at != d;) {
        EdgeIndex e = tt.next_edge(at, d);
        walked.push_back(e);
        at = net.edge(e).to;
      }
      EXPECT_EQ(walked, sp->edges);
    }
}

TEST(TravelTimes, FreeFlowSnapshot) {
  RoadNetwork net = testutil::small_grid(3, 3, 125.0);
  for (int i = 0; i < 40; ++i) net.vehicle_enter_edge(0);
  TravelTimes ff = TravelTimes::free_flow(net);
  std::vector<NodeIndex> t{2};
  ff.prepare_serial(t);
  EXPECT_NEAR(ff.time(0, 2), 250.0 / 12.5, 1e-12);  // two 125 m edges at 12.5 m/s
  EXPECT_NEAR(ff.length(0, 2), 250.0, 1e-12);
}
