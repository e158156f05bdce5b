#include "poolsim/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace poolsim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double or_nan(auto&& f) {
  try {
    return f();
  } catch (const MetricUndefined&) {
    return kNaN;
  }
}

nlohmann::ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double read_num(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return kNaN;
  return v.get<double>();
}

// Sampling instants follow the engine: instant k (1-based) is (k - 1) * step + step.
double sample_time(std::int64_t k, double step) { return static_cast<double>(k - 1) * step + step; }

}  // namespace

double service_rate(const MetricLedger& m) {
  if (m.total == 0) throw MetricUndefined("service rate: no requests");
  return static_cast<double>(m.served) / static_cast<double>(m.total);
}

double delivery_efficiency(const MetricLedger& m) {
  if (m.pmd_km == 0) throw MetricUndefined("delivery efficiency: zero passenger distance");
  return m.vmt_km / m.pmd_km;
}

double passenger_emission_factor(const MetricLedger& m, const std::string& pollutant) {
  if (m.pmd_km == 0) throw MetricUndefined("passenger emission factor: zero passenger distance");
  for (std::size_t k = 0; k < m.pollutants.size(); ++k)
    if (m.pollutants[k] == pollutant) return m.pollutant_g[k] / m.pmd_km;
  throw MetricUndefined("passenger emission factor: unknown pollutant " + pollutant);
}

double delay_factor(const MetricLedger& m) {
  if (m.df_count == 0) throw MetricUndefined("delay factor: no samples");
  return m.df_sum / static_cast<double>(m.df_count);
}

double delay_factor(std::span<const double> free_flow_kmh, std::span<const double> speed_kmh) {
  if (speed_kmh.empty() || free_flow_kmh.size() != speed_kmh.size())
    throw MetricUndefined("delay factor: no samples");
  double s = 0.0;
  for (std::size_t i = 0; i < speed_kmh.size(); ++i) s += free_flow_kmh[i] / speed_kmh[i];
  return s / static_cast<double>(speed_kmh.size());
}

double scheduled_passengers(const MetricLedger& m) {
  if (m.scheduled_samples == 0) return 0.0;
  return m.scheduled_sum / static_cast<double>(m.scheduled_samples);
}

MetricLedger build_ledger(const SimOutput& sim, const EmissionLedger& emissions) {
  MetricLedger m;
  m.total = static_cast<std::int64_t>(sim.requests.size());
  for (const Request& r : sim.requests) {
    if (r.state != RequestState::completed) continue;
    ++m.served;
    m.pmd_km += r.direct_distance / 1000.0;
  }
  m.vmt_km = emissions.vmt_km;
  m.pollutants = emissions.pollutants;
  m.pollutant_g = emissions.total_g;
  for (double d : sim.edge_df_sum) m.df_sum += d;
  m.df_count = sim.df_samples * static_cast<std::int64_t>(sim.edge_df_sum.size());
  m.scheduled_sum = sim.scheduled_sum;
  m.scheduled_samples = sim.scheduled_samples;
  return m;
}

RegionSplit region_split(const SimOutput& sim, const EmissionLedger& emissions, const RoadNetwork& net,
                         const BBox& bbox) {
  RegionSplit out;
  std::vector<char> inside(net.edge_count(), 0);
  std::int64_t inside_edges = 0;
  for (std::size_t e = 0; e < net.edge_count(); ++e) {
    auto [lon, lat] = net.midpoint(static_cast<EdgeIndex>(e));
    inside[e] = bbox.contains(lon, lat);
    inside_edges += inside[e];
  }
  for (MetricLedger* m : {&out.inside, &out.outside}) {
    m->pollutants = emissions.pollutants;
    m->pollutant_g.assign(emissions.pollutants.size(), 0.0);
  }
  for (const Request& r : sim.requests) {
    const Node& o = net.node(r.origin);
    MetricLedger& m = bbox.contains(o.lon, o.lat) ? out.inside : out.outside;
    ++m.total;
    if (r.state == RequestState::completed) {
      ++m.served;
      m.pmd_km += r.direct_distance / 1000.0;
    }
  }
  for (const TraversalEvent& ev : sim.traversals)
    (inside[static_cast<std::size_t>(ev.edge)] ? out.inside : out.outside).vmt_km += net.edge(ev.edge).length_m / 1000.0;
  for (std::size_t k = 0; k < emissions.pollutants.size(); ++k)
    for (std::size_t e = 0; e < net.edge_count(); ++e)
      (inside[e] ? out.inside : out.outside).pollutant_g[k] += emissions.edge_g[k][e];
  for (std::size_t e = 0; e < sim.edge_df_sum.size(); ++e)
    (inside[e] ? out.inside : out.outside).df_sum += sim.edge_df_sum[e];
  out.inside.df_count = sim.df_samples * inside_edges;
  out.outside.df_count = sim.df_samples * (static_cast<std::int64_t>(net.edge_count()) - inside_edges);
  return out;
}

void ConfusionCounts::add(bool nn, bool truth, bool same_plan) {
  if (nn && truth) {
    ++tp;
    if (same_plan) ++sp;
  } else if (!nn && !truth) {
    ++tn;
  } else if (nn) {
    ++fp;
  } else {
    ++fn;
  }
}

double ConfusionCounts::accuracy() const {
  if (total() == 0) throw MetricUndefined("accuracy: no instances");
  return static_cast<double>(tn + tp) / static_cast<double>(tn + fn + tp + fp);
}

std::optional<double> ConfusionCounts::consistency() const {
  if (tp == 0) return std::nullopt;
  return static_cast<double>(sp) / static_cast<double>(tp);
}

RegressionResult no_intercept_regression(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw MetricUndefined("regression: need at least two paired points");
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  if (sxx == 0) throw MetricUndefined("regression: all x are zero");
  RegressionResult r;
  r.n = x.size();
  r.slope = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double e = y[i] - r.slope * x[i];
    sse += e * e;
  }
  r.r2 = syy > 0 ? 1.0 - sse / syy : kNaN;
  return r;
}

BenchResult nn_benchmark(std::span<const RouteProblem> instances, int capacity) {
  using clock = std::chrono::steady_clock;
  BenchResult b;
  b.capacity = capacity;
  b.instances = instances.size();
  std::vector<std::optional<RoutePlan>> nn(instances.size()), en(instances.size());

  auto t0 = clock::now();
  for (std::size_t i = 0; i < instances.size(); ++i) nn[i] = nn_route(instances[i]);
  auto t1 = clock::now();
  EnumStats stats;
  for (std::size_t i = 0; i < instances.size(); ++i) en[i] = enumerate_best_route(instances[i], &stats);
  auto t2 = clock::now();

  b.nn_wall_s = std::chrono::duration<double>(t1 - t0).count();
  b.enum_wall_s = std::chrono::duration<double>(t2 - t1).count();
  b.orderings = stats.orderings;
  for (std::size_t i = 0; i < instances.size(); ++i)
    b.counts.add(nn[i].has_value(), en[i].has_value(), nn[i] && en[i] && nn[i]->stops == en[i]->stops);
  return b;
}

Summary summarize(const MetricLedger& m, int fleet_size, int capacity, std::uint64_t seed) {
  Summary s;
  s.sr = or_nan([&] { return service_rate(m); });
  s.def = or_nan([&] { return delivery_efficiency(m); });
  s.pef_co2 = or_nan([&] { return passenger_emission_factor(m, "CO2"); });
  s.pef_co = or_nan([&] { return passenger_emission_factor(m, "CO"); });
  s.pef_nox = or_nan([&] { return passenger_emission_factor(m, "NOx"); });
  s.pef_hc = or_nan([&] { return passenger_emission_factor(m, "HC"); });
  s.df = or_nan([&] { return delay_factor(m); });
  s.avg_scheduled = scheduled_passengers(m);
  s.fleet_size = fleet_size;
  s.capacity = capacity;
  s.seed = seed;
  return s;
}

nlohmann::ordered_json summary_to_json(const Summary& s) {
  nlohmann::ordered_json j;
  j["sr"] = num(s.sr);
  j["def"] = num(s.def);
  j["pef_co2"] = num(s.pef_co2);
  j["pef_co"] = num(s.pef_co);
  j["pef_nox"] = num(s.pef_nox);
  j["pef_hc"] = num(s.pef_hc);
  j["df"] = num(s.df);
  j["avg_scheduled"] = num(s.avg_scheduled);
  j["fleet_size"] = s.fleet_size;
  j["capacity"] = s.capacity;
  j["seed"] = s.seed;
  return j;
}

Summary summary_from_json(const nlohmann::json& j) {
  Summary s;
  s.sr = read_num(j, "sr");
  s.def = read_num(j, "def");
  s.pef_co2 = read_num(j, "pef_co2");
  s.pef_co = read_num(j, "pef_co");
  s.pef_nox = read_num(j, "pef_nox");
  s.pef_hc = read_num(j, "pef_hc");
  s.df = read_num(j, "df");
  s.avg_scheduled = read_num(j, "avg_scheduled");
  s.fleet_size = j.at("fleet_size").get<int>();
  s.capacity = j.at("capacity").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

MetricLedger ledger_from_logs(const RoadNetwork& net, const std::vector<PollutantParams>& params,
                              std::span<const TraversalEvent> traversals, std::span<const Request> requests,
                              double step_s, double horizon_s, int fleet_size) {
  MetricLedger m;
  m.total = static_cast<std::int64_t>(requests.size());
  for (const Request& r : requests) {
    if (r.state != RequestState::completed) continue;
    ++m.served;
    m.pmd_km += r.direct_distance / 1000.0;
  }
  EmissionLedger em = accumulate(traversals, net, params);
  m.vmt_km = em.vmt_km;
  m.pollutants = em.pollutants;
  m.pollutant_g = em.total_g;

  const auto T = static_cast<std::int64_t>(std::llround(horizon_s / step_s));
  // First instant k with s_k >= t (or s_k > t when strict).
  auto first_instant = [&](double t, bool strict) {
    auto k = static_cast<std::int64_t>(std::floor(t / step_s)) - 1;
    k = std::clamp<std::int64_t>(k, 1, T + 1);
    while (k <= T && (strict ? sample_time(k, step_s) <= t : sample_time(k, step_s) < t)) ++k;
    return k;
  };

  // Occupancy of each edge at each instant: entry <= s < exit.
  const std::size_t J = net.edge_count();
  std::vector<std::vector<std::int32_t>> diff(J);
  for (const TraversalEvent& ev : traversals) {
    std::int64_t lo = first_instant(ev.t_entry, false);
    std::int64_t hi = first_instant(ev.t_exit, false);  // first instant not occupied
    if (lo >= hi) continue;
    auto& d = diff[static_cast<std::size_t>(ev.edge)];
    if (d.empty()) d.assign(static_cast<std::size_t>(T) + 2, 0);
    d[static_cast<std::size_t>(lo)] += 1;
    d[static_cast<std::size_t>(hi)] -= 1;
  }
  for (std::size_t e = 0; e < J; ++e) {
    Edge edge = net.edge(static_cast<EdgeIndex>(e));
    double edge_sum = 0.0;
    int count = 0;
    for (std::int64_t k = 1; k <= T; ++k) {
      if (!diff[e].empty()) count += diff[e][static_cast<std::size_t>(k)];
      edge.sim_vehicles = count;
      edge_sum += edge.free_flow_kmh / edge_speed_kmh(edge, net.speed_floor_kmh());
    }
    m.df_sum += edge_sum;
  }
  m.df_count = T * static_cast<std::int64_t>(J);

  // Scheduled passengers: assigned before the instant, not yet dropped off at it.
  std::vector<std::int64_t> sched(static_cast<std::size_t>(T) + 2, 0);
  for (const Request& r : requests) {
    if (!r.assign_time) continue;
    std::int64_t lo = first_instant(*r.assign_time, true);
    std::int64_t hi = r.dropoff_time ? first_instant(*r.dropoff_time, false) : T + 1;
    if (lo >= hi) continue;
    sched[static_cast<std::size_t>(lo)] += 1;
    sched[static_cast<std::size_t>(hi)] -= 1;
  }
  std::int64_t running = 0;
  for (std::int64_t k = 1; k <= T; ++k) {
    running += sched[static_cast<std::size_t>(k)];
    m.scheduled_sum += static_cast<double>(running);
  }
  m.scheduled_samples = T * fleet_size;
  return m;
}

}  // namespace poolsim
