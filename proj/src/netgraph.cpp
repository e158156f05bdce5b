#include "poolsim/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "poolsim/csv.hpp"

namespace poolsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEarthRadiusM = 6371000.0;

std::string row_ref(const csv::Table& t, std::size_t r) {
  return t.source + ":" + std::to_string(t.line_numbers[r]);
}

double parse_field_double(const csv::Table& t, std::size_t r, std::size_t c, const char* what) {
  auto v = csv::parse_double(c < t.rows[r].size() ? t.rows[r][c] : std::string{});
  if (!v || !std::isfinite(*v)) throw LoadError(row_ref(t, r) + ": bad " + what);
  return *v;
}

std::int64_t parse_field_int(const csv::Table& t, std::size_t r, std::size_t c, const char* what) {
  auto v = csv::parse_int(c < t.rows[r].size() ? t.rows[r][c] : std::string{});
  if (!v || *v < 0) throw LoadError(row_ref(t, r) + ": bad " + what);
  return *v;
}

void check_strongly_connected(const RoadNetwork& net) {
  if (net.node_count() == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<char> seen(net.node_count(), 0);
    std::vector<NodeIndex> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      NodeIndex n = stack.back();
      stack.pop_back();
      auto adj = pass == 0 ? net.out_edges(n) : net.in_edges(n);
      for (EdgeIndex e : adj) {
        NodeIndex m = pass == 0 ? net.edge(e).to : net.edge(e).from;
        if (!seen[static_cast<std::size_t>(m)]) {
          seen[static_cast<std::size_t>(m)] = 1;
          stack.push_back(m);
        }
      }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) {
        throw LoadError("network not strongly connected: node " + std::to_string(net.nodes()[i].id) +
                        (pass == 0 ? " unreachable from " : " cannot reach ") + "node " +
                        std::to_string(net.nodes()[0].id));
      }
    }
  }
}

std::vector<double> free_flow_times(const RoadNetwork& net) {
  std::vector<double> w(net.edge_count());
  for (std::size_t e = 0; e < w.size(); ++e) w[e] = net.free_flow_time_s(static_cast<EdgeIndex>(e));
  return w;
}

std::vector<double> current_times(const RoadNetwork& net) {
  std::vector<double> w(net.edge_count());
  for (std::size_t e = 0; e < w.size(); ++e) w[e] = net.travel_time_s(static_cast<EdgeIndex>(e));
  return w;
}

std::optional<Path> path_with_weights(const RoadNetwork& net, std::span<const double> w, NodeIndex origin,
                                      NodeIndex dest) {
  if (origin == dest) return Path{};
  TargetTree tree = build_target_tree(net, w, dest);
  if (!std::isfinite(tree.time_s[static_cast<std::size_t>(origin)])) return std::nullopt;
  return extract_path(net, w, tree, origin, dest);
}

}  // namespace

double ride_density(const Edge& e) {
  return static_cast<double>(e.sim_vehicles) / (e.length_m / 1000.0 * e.lanes);
}

double edge_speed_kmh(const Edge& e, double speed_floor_kmh) {
  double k = e.base_density + ride_density(e);
  return std::max(speed_floor_kmh, e.free_flow_kmh * (1.0 - k / e.jam_density));
}

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges, double speed_floor_kmh)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), speed_floor_kmh_(speed_floor_kmh) {
  const std::size_t n = nodes_.size();
  out_offsets_.assign(n + 1, 0);
  in_offsets_.assign(n + 1, 0);
  for (const Edge& e : edges_) {
    if (e.from < 0 || static_cast<std::size_t>(e.from) >= n || e.to < 0 || static_cast<std::size_t>(e.to) >= n)
      throw LoadError("dangling endpoint, edge " + std::to_string(e.id));
    if (!(e.length_m > 0.0)) throw LoadError("non-positive length, edge " + std::to_string(e.id));
    if (e.lanes < 1) throw LoadError("lanes < 1, edge " + std::to_string(e.id));
    if (e.base_density < 0.0 || e.base_density >= e.jam_density)
      throw LoadError("base density outside [0, jam density), edge " + std::to_string(e.id));
    if (!(e.free_flow_kmh > 0.0)) throw LoadError("non-positive free-flow speed, edge " + std::to_string(e.id));
    ++out_offsets_[static_cast<std::size_t>(e.from) + 1];
    ++in_offsets_[static_cast<std::size_t>(e.to) + 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    out_offsets_[i + 1] += out_offsets_[i];
    in_offsets_[i + 1] += in_offsets_[i];
  }
  out_list_.resize(edges_.size());
  in_list_.resize(edges_.size());
  auto out_fill = out_offsets_;
  auto in_fill = in_offsets_;
  // Edge indices are visited in ascending order, so adjacency lists come out sorted.
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    out_list_[out_fill[static_cast<std::size_t>(edges_[i].from)]++] = static_cast<EdgeIndex>(i);
    in_list_[in_fill[static_cast<std::size_t>(edges_[i].to)]++] = static_cast<EdgeIndex>(i);
  }
}

std::span<const EdgeIndex> RoadNetwork::out_edges(NodeIndex n) const {
  auto i = static_cast<std::size_t>(n);
  return {out_list_.data() + out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]};
}

std::span<const EdgeIndex> RoadNetwork::in_edges(NodeIndex n) const {
  auto i = static_cast<std::size_t>(n);
  return {in_list_.data() + in_offsets_[i], in_offsets_[i + 1] - in_offsets_[i]};
}

std::optional<NodeIndex> RoadNetwork::find_node(std::int64_t id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id, [](const Node& a, std::int64_t v) { return a.id < v; });
  if (it == nodes_.end() || it->id != id) return std::nullopt;
  return static_cast<NodeIndex>(it - nodes_.begin());
}

std::optional<EdgeIndex> RoadNetwork::find_edge(std::int64_t id) const {
  auto it = std::lower_bound(edges_.begin(), edges_.end(), id, [](const Edge& a, std::int64_t v) { return a.id < v; });
  if (it == edges_.end() || it->id != id) return std::nullopt;
  return static_cast<EdgeIndex>(it - edges_.begin());
}

double RoadNetwork::free_flow_time_s(EdgeIndex e) const {
  const Edge& ed = edge(e);
  return ed.length_m / kmh_to_ms(ed.free_flow_kmh);
}

void RoadNetwork::vehicle_enter_edge(EdgeIndex e) { ++edges_[static_cast<std::size_t>(e)].sim_vehicles; }

void RoadNetwork::vehicle_leave_edge(EdgeIndex e) {
  Edge& ed = edges_[static_cast<std::size_t>(e)];
  if (ed.sim_vehicles <= 0)
    throw InternalError("vehicle left edge " + std::to_string(ed.id) + " with zero vehicle count");
  --ed.sim_vehicles;
}

void RoadNetwork::clear_vehicles() {
  for (Edge& e : edges_) e.sim_vehicles = 0;
}

long RoadNetwork::on_road_vehicles() const {
  long total = 0;
  for (const Edge& e : edges_) total += e.sim_vehicles;
  return total;
}

std::pair<double, double> RoadNetwork::midpoint(EdgeIndex e) const {
  const Edge& ed = edge(e);
  const Node& a = node(ed.from);
  const Node& b = node(ed.to);
  return {(a.lon + b.lon) / 2.0, (a.lat + b.lat) / 2.0};
}

RoadNetwork load_network(std::istream& nodes_in, std::istream& edges_in, const NetworkDefaults& defaults,
                         const std::string& nodes_name, const std::string& edges_name) {
  csv::Table nt = csv::read(nodes_in, nodes_name);
  const auto c_id = nt.require_column("node_id");
  const auto c_lon = nt.require_column("lon");
  const auto c_lat = nt.require_column("lat");

  std::vector<Node> nodes;
  std::vector<std::size_t> node_rows;
  nodes.reserve(nt.rows.size());
  for (std::size_t r = 0; r < nt.rows.size(); ++r) {
    Node n;
    n.id = parse_field_int(nt, r, c_id, "node_id");
    n.lon = parse_field_double(nt, r, c_lon, "lon");
    n.lat = parse_field_double(nt, r, c_lat, "lat");
    nodes.push_back(n);
    node_rows.push_back(r);
  }
  {
    std::vector<std::size_t> order(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return nodes[a].id < nodes[b].id; });
    std::vector<Node> sorted;
    sorted.reserve(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i > 0 && nodes[order[i]].id == nodes[order[i - 1]].id)
        throw LoadError(row_ref(nt, node_rows[order[i]]) + ": duplicate node id " + std::to_string(nodes[order[i]].id));
      sorted.push_back(nodes[order[i]]);
    }
    nodes = std::move(sorted);
  }
  std::unordered_map<std::int64_t, NodeIndex> node_index;
  for (std::size_t i = 0; i < nodes.size(); ++i) node_index[nodes[i].id] = static_cast<NodeIndex>(i);

  csv::Table et = csv::read(edges_in, edges_name);
  const auto c_eid = et.require_column("edge_id");
  const auto c_from = et.require_column("from_node");
  const auto c_to = et.require_column("to_node");
  const auto c_len = et.require_column("length_m");
  const auto c_lanes = et.require_column("lanes");
  const auto c_ff = et.column("free_flow_kmh");
  const auto c_kb = et.column("base_density");
  const auto c_kj = et.column("jam_density");

  std::vector<Edge> edges;
  std::vector<std::size_t> edge_rows;
  edges.reserve(et.rows.size());
  for (std::size_t r = 0; r < et.rows.size(); ++r) {
    Edge e;
    e.id = parse_field_int(et, r, c_eid, "edge_id");
    auto from_id = parse_field_int(et, r, c_from, "from_node");
    auto to_id = parse_field_int(et, r, c_to, "to_node");
    auto fit = node_index.find(from_id);
    auto tit = node_index.find(to_id);
    if (fit == node_index.end() || tit == node_index.end())
      throw LoadError(row_ref(et, r) + ": dangling endpoint, edge " + std::to_string(e.id));
    e.from = fit->second;
    e.to = tit->second;
    e.length_m = parse_field_double(et, r, c_len, "length_m");
    if (!(e.length_m > 0.0))
      throw LoadError(row_ref(et, r) + ": non-positive length, edge " + std::to_string(e.id));
    e.lanes = static_cast<int>(parse_field_int(et, r, c_lanes, "lanes"));
    if (e.lanes < 1) throw LoadError(row_ref(et, r) + ": lanes < 1, edge " + std::to_string(e.id));
    auto optional_col = [&](const std::optional<std::size_t>& c, double fallback, const char* what) {
      if (!c || *c >= et.rows[r].size() || et.rows[r][*c].empty()) return fallback;
      return parse_field_double(et, r, *c, what);
    };
    e.free_flow_kmh = optional_col(c_ff, defaults.free_flow_kmh, "free_flow_kmh");
    e.base_density = optional_col(c_kb, defaults.base_density, "base_density");
    e.jam_density = optional_col(c_kj, defaults.jam_density, "jam_density");
    if (!(e.free_flow_kmh > 0.0)) throw LoadError(row_ref(et, r) + ": non-positive free_flow_kmh");
    if (e.base_density < 0.0 || e.base_density >= e.jam_density)
      throw LoadError(row_ref(et, r) + ": base_density outside [0, jam_density)");
    edges.push_back(e);
    edge_rows.push_back(r);
  }
  {
    std::vector<std::size_t> order(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return edges[a].id < edges[b].id; });
    std::vector<Edge> sorted;
    sorted.reserve(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i > 0 && edges[order[i]].id == edges[order[i - 1]].id)
        throw LoadError(row_ref(et, edge_rows[order[i]]) + ": duplicate edge id " + std::to_string(edges[order[i]].id));
      sorted.push_back(edges[order[i]]);
    }
    edges = std::move(sorted);
  }
  if (nodes.empty()) throw LoadError(nodes_name + ": no nodes");

  RoadNetwork net(std::move(nodes), std::move(edges), defaults.speed_floor_kmh);
  check_strongly_connected(net);
  return net;
}

RoadNetwork load_network_files(const std::string& nodes_path, const std::string& edges_path,
                               const NetworkDefaults& defaults) {
  std::ifstream nin(nodes_path);
  if (!nin) throw LoadError("cannot open " + nodes_path);
  std::ifstream ein(edges_path);
  if (!ein) throw LoadError("cannot open " + edges_path);
  return load_network(nin, ein, defaults, nodes_path, edges_path);
}

void write_network(const RoadNetwork& net, std::ostream& nodes, std::ostream& edges) {
  nodes << "node_id,lon,lat\n";
  for (const Node& n : net.nodes())
    nodes << n.id << ',' << csv::format_double(n.lon) << ',' << csv::format_double(n.lat) << '\n';
  edges << "edge_id,from_node,to_node,length_m,lanes,free_flow_kmh,base_density,jam_density\n";
  for (const Edge& e : net.edges()) {
    edges << e.id << ',' << net.node(e.from).id << ',' << net.node(e.to).id << ',' << csv::format_double(e.length_m)
          << ',' << e.lanes << ',' << csv::format_double(e.free_flow_kmh) << ','
          << csv::format_double(e.base_density) << ',' << csv::format_double(e.jam_density) << '\n';
  }
}

RoadNetwork make_grid(const GridSpec& spec, const NetworkDefaults& defaults) {
  const double deg_m = kEarthRadiusM * std::numbers::pi / 180.0;
  const double lat_step = spec.spacing_m / deg_m;
  const double lon_step = spec.spacing_m / (deg_m * std::cos(spec.origin_lat * std::numbers::pi / 180.0));
  std::vector<Node> nodes;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c)
      nodes.push_back({static_cast<std::int64_t>(r * spec.cols + c), spec.origin_lon + c * lon_step,
                       spec.origin_lat + r * lat_step});

  std::vector<Edge> edges;
  auto link = [&](int r, int c, int r2, int c2) {
    if (r2 < 0 || r2 >= spec.rows || c2 < 0 || c2 >= spec.cols) return;
    Edge e;
    e.id = static_cast<std::int64_t>(edges.size());
    e.from = r * spec.cols + c;
    e.to = r2 * spec.cols + c2;
    e.length_m = spec.spacing_m;
    e.lanes = spec.lanes;
    e.free_flow_kmh = defaults.free_flow_kmh;
    e.base_density = defaults.base_density;
    e.jam_density = defaults.jam_density;
    edges.push_back(e);
  };
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      link(r, c, r, c + 1);  // east
      link(r, c, r + 1, c);  // north
      link(r, c, r, c - 1);  // west
      link(r, c, r - 1, c);  // south
    }
  }
  return RoadNetwork(std::move(nodes), std::move(edges), defaults.speed_floor_kmh);
}

double haversine_m(double lon1, double lat1, double lon2, double lat2) {
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

NodeIndex nearest_node(const RoadNetwork& net, double lon, double lat) {
  if (net.node_count() == 0) throw LoadError("nearest_node on an empty network");
  if (!std::isfinite(lon) || !std::isfinite(lat)) throw LoadError("nearest_node: non-finite coordinate");
  NodeIndex best = 0;
  double best_d = kInf;
  for (std::size_t i = 0; i < net.node_count(); ++i) {
    const Node& n = net.nodes()[i];
    double d = haversine_m(lon, lat, n.lon, n.lat);
    if (d < best_d) {  // strict: earlier (lower id) node wins ties
      best_d = d;
      best = static_cast<NodeIndex>(i);
    }
  }
  return best;
}

TargetTree build_target_tree(const RoadNetwork& net, std::span<const double> w, NodeIndex target) {
  TargetTree tree;
  tree.time_s.assign(net.node_count(), kInf);
  tree.length_m.assign(net.node_count(), kInf);
  using Item = std::pair<double, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  tree.time_s[static_cast<std::size_t>(target)] = 0.0;
  tree.length_m[static_cast<std::size_t>(target)] = 0.0;
  heap.emplace(0.0, target);
  while (!heap.empty()) {
    auto [t, v] = heap.top();
    heap.pop();
    if (t > tree.time_s[static_cast<std::size_t>(v)]) continue;
    for (EdgeIndex e : net.in_edges(v)) {
      NodeIndex u = net.edge(e).from;
      double cand = t + w[static_cast<std::size_t>(e)];
      if (cand < tree.time_s[static_cast<std::size_t>(u)]) {
        tree.time_s[static_cast<std::size_t>(u)] = cand;
        tree.length_m[static_cast<std::size_t>(u)] =
            tree.length_m[static_cast<std::size_t>(v)] + net.edge(e).length_m;
        heap.emplace(cand, u);
      }
    }
  }
  return tree;
}

EdgeIndex first_edge_towards(const RoadNetwork& net, std::span<const double> w, const TargetTree& tree,
                             NodeIndex from) {
  const double here = tree.time_s[static_cast<std::size_t>(from)];
  if (!std::isfinite(here)) return kNoEdge;
  const double tol = 1e-9 * std::max(1.0, here);
  for (EdgeIndex e : net.out_edges(from)) {
    double rest = tree.time_s[static_cast<std::size_t>(net.edge(e).to)];
    if (!std::isfinite(rest)) continue;
    if (w[static_cast<std::size_t>(e)] + rest <= here + tol) return e;
  }
  return kNoEdge;
}

Path extract_path(const RoadNetwork& net, std::span<const double> w, const TargetTree& tree, NodeIndex from,
                  NodeIndex target) {
  Path p;
  NodeIndex at = from;
  std::size_t guard = 0;
  while (at != target) {
    EdgeIndex e = first_edge_towards(net, w, tree, at);
    if (e == kNoEdge || ++guard > net.node_count())
      throw InternalError("path extraction failed towards node " + std::to_string(net.node(target).id));
    p.edges.push_back(e);
    p.total_time_s += w[static_cast<std::size_t>(e)];
    p.total_length_m += net.edge(e).length_m;
    at = net.edge(e).to;
  }
  return p;
}

std::optional<Path> shortest_path(const RoadNetwork& net, NodeIndex origin, NodeIndex dest) {
  auto w = current_times(net);
  return path_with_weights(net, w, origin, dest);
}

std::optional<Path> free_flow_path(const RoadNetwork& net, NodeIndex origin, NodeIndex dest) {
  auto w = free_flow_times(net);
  return path_with_weights(net, w, origin, dest);
}

TravelTimes::TravelTimes(const RoadNetwork& net) : TravelTimes(net, current_times(net)) {}

TravelTimes::TravelTimes(const RoadNetwork& net, std::vector<double> edge_time)
    : net_(&net), edge_time_(std::move(edge_time)), trees_(net.node_count()) {}

TravelTimes TravelTimes::free_flow(const RoadNetwork& net) { return TravelTimes(net, free_flow_times(net)); }

void TravelTimes::prepare(std::span<const NodeIndex> targets) {
  std::vector<NodeIndex> missing;
  std::unordered_set<NodeIndex> seen;
  for (NodeIndex t : targets)
    if (!trees_[static_cast<std::size_t>(t)] && seen.insert(t).second) missing.push_back(t);
  const long n = static_cast<long>(missing.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    NodeIndex t = missing[static_cast<std::size_t>(i)];
    trees_[static_cast<std::size_t>(t)] = std::make_unique<TargetTree>(build_target_tree(*net_, edge_time_, t));
  }
}

void TravelTimes::prepare_serial(std::span<const NodeIndex> targets) {
  for (NodeIndex t : targets)
    if (!trees_[static_cast<std::size_t>(t)])
      trees_[static_cast<std::size_t>(t)] = std::make_unique<TargetTree>(build_target_tree(*net_, edge_time_, t));
}

bool TravelTimes::has(NodeIndex target) const { return static_cast<bool>(trees_[static_cast<std::size_t>(target)]); }

std::size_t TravelTimes::prepared_count() const {
  return static_cast<std::size_t>(std::count_if(trees_.begin(), trees_.end(), [](const auto& p) { return !!p; }));
}

const TargetTree& TravelTimes::tree(NodeIndex target) const {
  const auto& t = trees_[static_cast<std::size_t>(target)];
  if (!t) throw InternalError("travel-time tree for node " + std::to_string(net_->node(target).id) + " not prepared");
  return *t;
}

double TravelTimes::time(NodeIndex from, NodeIndex to) const {
  if (from == to) return 0.0;
  return tree(to).time_s[static_cast<std::size_t>(from)];
}

double TravelTimes::length(NodeIndex from, NodeIndex to) const {
  if (from == to) return 0.0;
  return tree(to).length_m[static_cast<std::size_t>(from)];
}

EdgeIndex TravelTimes::next_edge(NodeIndex from, NodeIndex to) const {
  if (from == to) return kNoEdge;
  return first_edge_towards(*net_, edge_time_, tree(to), from);
}

}  // namespace poolsim
