#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "poolsim/netgraph.hpp"
#include "poolsim/pooling.hpp"

namespace testutil {

using namespace poolsim;

// Edge list (id, from, to, length) over nodes 0..n-1 laid out on a line of
// longitude; ids equal dense indices when given in ascending order.
struct EdgeSpec {
  std::int64_t id;
  std::int64_t from, to;
  double length_m;
  int lanes = 1;
};

inline RoadNetwork make_network(int n_nodes, const std::vector<EdgeSpec>& edges, NetworkDefaults d = {}) {
  std::ostringstream nodes, es;
  nodes << "node_id,lon,lat\n";
  for (int i = 0; i < n_nodes; ++i) nodes << i << ',' << 104.0 + 0.001 * i << ",30.6\n";
  es << "edge_id,from_node,to_node,length_m,lanes\n";
  for (const auto& e : edges) es << e.id << ',' << e.from << ',' << e.to << ',' << e.length_m << ',' << e.lanes << '\n';
  std::istringstream ni(nodes.str()), ei(es.str());
  return load_network(ni, ei, d);
}

// Bidirectional ring 0 -> 1 -> ... -> n-1 -> 0 plus the reverse direction.
inline RoadNetwork ring(int n, double len = 100.0, NetworkDefaults d = {}) {
  std::vector<EdgeSpec> e;
  std::int64_t id = 0;
  for (int i = 0; i < n; ++i) e.push_back({id++, i, (i + 1) % n, len});
  for (int i = 0; i < n; ++i) e.push_back({id++, (i + 1) % n, i, len});
  return make_network(n, e, d);
}

inline RoadNetwork small_grid(int rows, int cols, double spacing = 300.0, double kb = 0.0) {
  GridSpec g;
  g.rows = rows;
  g.cols = cols;
  g.spacing_m = spacing;
  NetworkDefaults d;
  d.base_density = kb;
  return make_grid(g, d);
}

inline std::vector<NodeIndex> all_nodes(const RoadNetwork& net) {
  std::vector<NodeIndex> v;
  for (std::size_t i = 0; i < net.node_count(); ++i) v.push_back(static_cast<NodeIndex>(i));
  return v;
}

inline TravelTimes prepared_snapshot(const RoadNetwork& net) {
  TravelTimes tt(net);
  auto nodes = all_nodes(net);
  tt.prepare_serial(nodes);
  return tt;
}

}  // namespace testutil
