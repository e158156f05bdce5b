#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poolsim/common.hpp"

namespace poolsim {

// Per-edge values applied when the edges file omits the optional columns.
struct NetworkDefaults {
  double free_flow_kmh = 45.0;   // u_0
  double jam_density = 100.0;    // k_j, veh/km/lane
  double base_density = 0.0;     // k_b, veh/km/lane
  double speed_floor_kmh = 5.0;  // creep speed at or beyond jam density
};

struct Node {
  std::int64_t id = 0;
  double lon = 0.0;
  double lat = 0.0;
};

struct Edge {
  std::int64_t id = 0;
  NodeIndex from = kNoNode;
  NodeIndex to = kNoNode;
  double length_m = 0.0;
  int lanes = 1;
  double free_flow_kmh = 45.0;
  double base_density = 0.0;
  double jam_density = 100.0;
  int sim_vehicles = 0;  // simulated vehicles currently on the edge (source of k_r)
};

// Greenshields speed clamped below by the floor:
//   max(floor, u0 * (1 - (k_b + k_r) / k_j)),  k_r = vehicles / (length_km * lanes).
double edge_speed_kmh(const Edge& e, double speed_floor_kmh);

// Ride-sourcing density k_r of an edge, veh/km/lane.
double ride_density(const Edge& e);

// Directed road graph. Nodes and edges are kept sorted by external id so that
// dense-index order and id order coincide; all tie-breaks rely on this.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  // Validates and indexes. `edges[i].from/to` are dense node indices.
  RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges, double speed_floor_kmh);

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const Edge> edges() const { return edges_; }
  const Node& node(NodeIndex n) const { return nodes_[static_cast<std::size_t>(n)]; }
  const Edge& edge(EdgeIndex e) const { return edges_[static_cast<std::size_t>(e)]; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  // Outgoing / incoming edges of a node, ascending edge index.
  std::span<const EdgeIndex> out_edges(NodeIndex n) const;
  std::span<const EdgeIndex> in_edges(NodeIndex n) const;

  std::optional<NodeIndex> find_node(std::int64_t id) const;
  std::optional<EdgeIndex> find_edge(std::int64_t id) const;

  double speed_floor_kmh() const { return speed_floor_kmh_; }
  double speed_kmh(EdgeIndex e) const { return edge_speed_kmh(edge(e), speed_floor_kmh_); }
  double speed_ms(EdgeIndex e) const { return kmh_to_ms(speed_kmh(e)); }
  double travel_time_s(EdgeIndex e) const { return edge(e).length_m / speed_ms(e); }
  double free_flow_time_s(EdgeIndex e) const;

  void vehicle_enter_edge(EdgeIndex e);
  // Throws InternalError naming the edge when its count is already zero.
  void vehicle_leave_edge(EdgeIndex e);
  void clear_vehicles();
  long on_road_vehicles() const;

  // Edge midpoint in degrees.
  std::pair<double, double> midpoint(EdgeIndex e) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<EdgeIndex> out_list_, in_list_;
  double speed_floor_kmh_ = 5.0;
};

// Reads the node and edge CSVs (headers `node_id,lon,lat` and
// `edge_id,from_node,to_node,length_m,lanes[,free_flow_kmh,base_density,jam_density]`).
// Throws LoadError naming the offending row on duplicate ids, dangling
// endpoints, non-positive lengths, or a graph that is not strongly connected.
RoadNetwork load_network(std::istream& nodes, std::istream& edges, const NetworkDefaults& defaults,
                         const std::string& nodes_name = "nodes", const std::string& edges_name = "edges");
RoadNetwork load_network_files(const std::string& nodes_path, const std::string& edges_path,
                               const NetworkDefaults& defaults);

void write_network(const RoadNetwork& net, std::ostream& nodes, std::ostream& edges);

// Rectangular grid with bidirectional links between 4-neighbours.
struct GridSpec {
  int rows = 20;
  int cols = 20;
  double spacing_m = 300.0;
  int lanes = 1;
  double origin_lon = 104.0;
  double origin_lat = 30.6;
};
RoadNetwork make_grid(const GridSpec& spec, const NetworkDefaults& defaults);

double haversine_m(double lon1, double lat1, double lon2, double lat2);

// Node at minimal great-circle distance; ties go to the lowest node id.
NodeIndex nearest_node(const RoadNetwork& net, double lon, double lat);

struct Path {
  std::vector<EdgeIndex> edges;
  double total_time_s = 0.0;
  double total_length_m = 0.0;
};

// Minimum travel time at the network's current speeds; among equal-time paths
// the lexicographically smallest edge-id sequence. nullopt when unreachable.
std::optional<Path> shortest_path(const RoadNetwork& net, NodeIndex origin, NodeIndex dest);
// Same, with every edge at its free-flow speed.
std::optional<Path> free_flow_path(const RoadNetwork& net, NodeIndex origin, NodeIndex dest);

// Single-target shortest-path tree: time and length from every node to the target.
struct TargetTree {
  std::vector<double> time_s;
  std::vector<double> length_m;
};

TargetTree build_target_tree(const RoadNetwork& net, std::span<const double> edge_time, NodeIndex target);

// First edge of the lexicographically smallest shortest path from `from` to the tree's target.
EdgeIndex first_edge_towards(const RoadNetwork& net, std::span<const double> edge_time, const TargetTree& tree,
                             NodeIndex from);

Path extract_path(const RoadNetwork& net, std::span<const double> edge_time, const TargetTree& tree, NodeIndex from,
                  NodeIndex target);

// Frozen edge weights plus a lazily filled cache of target trees. All pooling
// and dispatch reads go through a snapshot so they observe one consistent
// speed field per batch.
class TravelTimes {
 public:
  explicit TravelTimes(const RoadNetwork& net);
  static TravelTimes free_flow(const RoadNetwork& net);

  // Builds missing trees for the given targets. `prepare` fans out with
  // OpenMP; `prepare_serial` is the reference path.
  void prepare(std::span<const NodeIndex> targets);
  void prepare_serial(std::span<const NodeIndex> targets);

  bool has(NodeIndex target) const;
  // Both require the target tree to be prepared (InternalError otherwise).
  double time(NodeIndex from, NodeIndex to) const;
  double length(NodeIndex from, NodeIndex to) const;
  EdgeIndex next_edge(NodeIndex from, NodeIndex to) const;

  std::span<const double> edge_times() const { return edge_time_; }
  const RoadNetwork& network() const { return *net_; }
  std::size_t prepared_count() const;

 private:
  TravelTimes(const RoadNetwork& net, std::vector<double> edge_time);
  const TargetTree& tree(NodeIndex target) const;

  const RoadNetwork* net_;
  std::vector<double> edge_time_;
  std::vector<std::unique_ptr<TargetTree>> trees_;
};

}  // namespace poolsim
