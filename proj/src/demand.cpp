#include "poolsim/demand.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <queue>
#include <random>
#include <unordered_set>

#include "poolsim/csv.hpp"

namespace poolsim {

namespace {

void sort_requests(std::vector<Request>& rs) {
  std::sort(rs.begin(), rs.end(), [](const Request& a, const Request& b) {
    if (a.request_time != b.request_time) return a.request_time < b.request_time;
    return a.id < b.id;
  });
}

// Free-flow lengths of time-shortest paths from `origin` to every node.
std::vector<double> forward_lengths(const RoadNetwork& net, NodeIndex origin) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> time(net.node_count(), inf), len(net.node_count(), inf);
  using Item = std::pair<double, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  time[static_cast<std::size_t>(origin)] = 0.0;
  len[static_cast<std::size_t>(origin)] = 0.0;
  heap.emplace(0.0, origin);
  while (!heap.empty()) {
    auto [t, u] = heap.top();
    heap.pop();
    if (t > time[static_cast<std::size_t>(u)]) continue;
    for (EdgeIndex e : net.out_edges(u)) {
      NodeIndex v = net.edge(e).to;
      double c = t + net.free_flow_time_s(e);
      if (c < time[static_cast<std::size_t>(v)]) {
        time[static_cast<std::size_t>(v)] = c;
        len[static_cast<std::size_t>(v)] = len[static_cast<std::size_t>(u)] + net.edge(e).length_m;
        heap.emplace(c, v);
      }
    }
  }
  return len;
}

}  // namespace

const char* to_string(RequestState s) {
  switch (s) {
    case RequestState::waiting: return "waiting";
    case RequestState::assigned: return "assigned";
    case RequestState::onboard: return "onboard";
    case RequestState::completed: return "completed";
    case RequestState::abandoned: return "abandoned";
  }
  return "unknown";
}

double round_to_batch(double t, double interval) { return std::floor(t / interval + 0.5) * interval; }

void fill_direct_paths(const RoadNetwork& net, std::vector<Request>& requests) {
  TravelTimes ff = TravelTimes::free_flow(net);
  std::vector<NodeIndex> dests;
  for (const Request& r : requests) dests.push_back(r.dest);
  ff.prepare(dests);
  for (Request& r : requests) {
    r.direct_time = 0.0;
    r.direct_distance = 0.0;
    NodeIndex at = r.origin;
    std::size_t guard = 0;
    while (at != r.dest) {
      EdgeIndex e = ff.next_edge(at, r.dest);
      if (e == kNoEdge || ++guard > net.node_count())
        throw LoadError("request " + std::to_string(r.id) + ": destination unreachable");
      r.direct_time += ff.edge_times()[static_cast<std::size_t>(e)];
      r.direct_distance += net.edge(e).length_m;
      at = net.edge(e).to;
    }
  }
}

LoadReport load_requests(std::istream& in, const RoadNetwork& net, double batch_interval, const std::string& source) {
  csv::Table t = csv::read(in, source);
  const auto c_id = t.require_column("request_id");
  const auto c_t = t.require_column("t_seconds");
  const auto c_olon = t.require_column("origin_lon");
  const auto c_olat = t.require_column("origin_lat");
  const auto c_dlon = t.require_column("dest_lon");
  const auto c_dlat = t.require_column("dest_lat");

  LoadReport report;
  std::unordered_set<RequestId> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto field = [&](std::size_t c) { return c < row.size() ? row[c] : std::string{}; };
    auto reject = [&](const std::string& why) {
      report.rejected_rows.push_back(source + ":" + std::to_string(t.line_numbers[r]) + ": " + why);
    };
    auto id = csv::parse_int(field(c_id));
    auto ts = csv::parse_double(field(c_t));
    auto olon = csv::parse_double(field(c_olon));
    auto olat = csv::parse_double(field(c_olat));
    auto dlon = csv::parse_double(field(c_dlon));
    auto dlat = csv::parse_double(field(c_dlat));
    if (!id || *id < 0) { reject("bad request_id"); continue; }
    if (!ts || !std::isfinite(*ts) || *ts < 0) { reject("bad t_seconds"); continue; }
    if (!olon || !olat || !dlon || !dlat || !std::isfinite(*olon) || !std::isfinite(*olat) ||
        !std::isfinite(*dlon) || !std::isfinite(*dlat)) {
      reject("bad coordinate");
      continue;
    }
    if (!ids.insert(*id).second) { reject("duplicate request_id " + std::to_string(*id)); continue; }
    Request q;
    q.id = *id;
    q.request_time = round_to_batch(*ts, batch_interval);
    q.origin = nearest_node(net, *olon, *olat);
    q.dest = nearest_node(net, *dlon, *dlat);
    if (q.origin == q.dest) {
      ++report.dropped_degenerate;
      continue;
    }
    report.requests.push_back(q);
  }
  if (!t.rows.empty() && report.rejected_rows.size() == t.rows.size())
    throw LoadError(source + ": all " + std::to_string(t.rows.size()) + " rows rejected (first: " +
                    report.rejected_rows.front() + ")");
  fill_direct_paths(net, report.requests);
  sort_requests(report.requests);
  return report;
}

LoadReport load_requests_file(const std::string& path, const RoadNetwork& net, double batch_interval) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  return load_requests(in, net, batch_interval, path);
}

void write_requests_csv(const RoadNetwork& net, const std::vector<Request>& requests, double time_offset,
                        std::ostream& out) {
  out << "request_id,t_seconds,origin_lon,origin_lat,dest_lon,dest_lat\n";
  for (const Request& r : requests) {
    const Node& o = net.node(r.origin);
    const Node& d = net.node(r.dest);
    out << r.id << ',' << csv::format_double(r.request_time + time_offset) << ',' << csv::format_double(o.lon) << ','
        << csv::format_double(o.lat) << ',' << csv::format_double(d.lon) << ',' << csv::format_double(d.lat) << '\n';
  }
}

std::vector<Request> downsample(const std::vector<Request>& requests, double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Request> kept;
  for (const Request& r : requests)
    if (u(rng) < fraction) kept.push_back(r);
  return kept;
}

std::vector<Request> generate_demand(const DemandProfile& profile, const RoadNetwork& net, std::uint64_t seed,
                                     double batch_interval) {
  if (profile.base_rate < 0 || profile.hot_zone_weight < 0 || profile.hot_zone_weight > 1)
    throw LoadError("demand profile: rate must be >= 0 and hot_zone_weight in [0,1]");
  std::vector<Request> out;
  if (profile.base_rate == 0 || profile.horizon_s <= 0) return out;

  std::vector<NodeIndex> inside, outside;
  for (std::size_t i = 0; i < net.node_count(); ++i) {
    const Node& n = net.nodes()[i];
    (profile.hot_zone.contains(n.lon, n.lat) ? inside : outside).push_back(static_cast<NodeIndex>(i));
  }
  if (inside.empty()) inside = outside;
  if (outside.empty()) outside = inside;

  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(profile.base_rate);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<std::vector<double>> length_cache(net.node_count());
  const double lo = 0.5 * profile.target_mean_distance_m;
  const double hi = 1.5 * profile.target_mean_distance_m;

  RequestId next_id = 0;
  double t = 0.0;
  while (true) {
    t += gap(rng);
    if (t >= profile.horizon_s) break;
    double rt = round_to_batch(t, batch_interval);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const auto& pool = u01(rng) < profile.hot_zone_weight ? inside : outside;
      NodeIndex o = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      auto& lens = length_cache[static_cast<std::size_t>(o)];
      if (lens.empty()) lens = forward_lengths(net, o);
      std::vector<NodeIndex> window;
      for (std::size_t i = 0; i < lens.size(); ++i)
        if (static_cast<NodeIndex>(i) != o && lens[i] >= lo && lens[i] <= hi) window.push_back(static_cast<NodeIndex>(i));
      if (window.empty()) continue;
      NodeIndex d = window[std::uniform_int_distribution<std::size_t>(0, window.size() - 1)(rng)];
      if (rt < profile.horizon_s) {
        Request q;
        q.id = next_id;
        q.request_time = rt;
        q.origin = o;
        q.dest = d;
        out.push_back(q);
      }
      ++next_id;
      placed = true;
    }
    if (!placed) throw LoadError("demand generator: no destination within the distance window after 100 draws");
  }
  fill_direct_paths(net, out);
  sort_requests(out);
  return out;
}

}  // namespace poolsim
