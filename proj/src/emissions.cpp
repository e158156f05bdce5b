#include "poolsim/emissions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "poolsim/csv.hpp"

namespace poolsim {

namespace {

double raw_factor(double v, const PollutantParams& p) {
  double num = p.alpha * v * v + p.beta * v + p.gamma + p.delta / v;
  double den = p.epsilon * v * v + p.zeta * v + p.eta;
  return num / den;
}

}  // namespace

std::vector<PollutantParams> load_coefficients(std::istream& in, const std::string& source) {
  csv::Table t = csv::read(in, source);
  const char* cols[] = {"pollutant", "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "v_min", "v_max"};
  std::size_t idx[10];
  for (int i = 0; i < 10; ++i) idx[i] = t.require_column(cols[i]);
  std::vector<PollutantParams> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ":" + std::to_string(t.line_numbers[r]);
    double v[9];
    for (int i = 1; i < 10; ++i) {
      auto x = csv::parse_double(idx[i] < row.size() ? row[idx[i]] : std::string{});
      if (!x || !std::isfinite(*x)) throw LoadError(where + ": bad " + cols[i]);
      v[i - 1] = *x;
    }
    PollutantParams p;
    p.name = idx[0] < row.size() ? row[idx[0]] : std::string{};
    if (p.name.empty()) throw LoadError(where + ": empty pollutant name");
    p.alpha = v[0];
    p.beta = v[1];
    p.gamma = v[2];
    p.delta = v[3];
    p.epsilon = v[4];
    p.zeta = v[5];
    p.eta = v[6];
    p.v_min = v[7];
    p.v_max = v[8];
    if (!(p.v_min >= 1.0 && p.v_max <= 200.0 && p.v_min < p.v_max))
      throw LoadError(where + ": valid speed range must lie within [1, 200] km/h");
    for (double s = p.v_min; s <= p.v_max + 1e-9; s += 1.0) {
      double sv = std::min(s, p.v_max);
      if (!(p.epsilon * sv * sv + p.zeta * sv + p.eta > 0))
        throw LoadError(where + ": denominator not positive at " + csv::format_double(sv) + " km/h");
      if (!(raw_factor(sv, p) > 0))
        throw LoadError(where + ": emission factor not positive at " + csv::format_double(sv) + " km/h");
    }
    for (const auto& q : out)
      if (q.name == p.name) throw LoadError(where + ": duplicate pollutant " + p.name);
    out.push_back(p);
  }
  if (out.empty()) throw LoadError(source + ": no pollutants");
  return out;
}

std::vector<PollutantParams> load_coefficients_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  return load_coefficients(in, path);
}

double emission_factor(double speed_kmh, const PollutantParams& p) {
  if (!std::isfinite(speed_kmh)) throw LoadError("emission_factor: non-finite speed");
  return raw_factor(std::clamp(speed_kmh, p.v_min, p.v_max), p);
}

bool emission_speed_clamped(double speed_kmh, const PollutantParams& p) {
  return speed_kmh < p.v_min || speed_kmh > p.v_max;
}

EmissionLedger::EmissionLedger(const std::vector<PollutantParams>& params, std::size_t edge_count) {
  for (const auto& p : params) pollutants.push_back(p.name);
  total_g.assign(params.size(), 0.0);
  edge_g.assign(params.size(), std::vector<double>(edge_count, 0.0));
}

std::size_t EmissionLedger::index(const std::string& pollutant) const {
  for (std::size_t i = 0; i < pollutants.size(); ++i)
    if (pollutants[i] == pollutant) return i;
  throw LoadError("pollutant " + pollutant + " not in the coefficient set");
}

void EmissionLedger::merge(const EmissionLedger& other) {
  if (other.pollutants != pollutants) throw InternalError("merging ledgers with different pollutants");
  for (std::size_t k = 0; k < total_g.size(); ++k) {
    total_g[k] += other.total_g[k];
    for (std::size_t e = 0; e < edge_g[k].size(); ++e) edge_g[k][e] += other.edge_g[k][e];
  }
  vmt_km += other.vmt_km;
  clamped += other.clamped;
}

void accumulate(EmissionLedger& ledger, std::span<const TraversalEvent> events, const RoadNetwork& net,
                const std::vector<PollutantParams>& params) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraversalEvent& ev = events[i];
    const double dt = ev.t_exit - ev.t_entry;
    if (!(dt > 0))
      throw LoadError("traversal " + std::to_string(i) + " (vehicle " + std::to_string(ev.vehicle) +
                      ") has non-positive duration");
    const double len_km = net.edge(ev.edge).length_m / 1000.0;
    const double v = len_km / (dt / 3600.0);
    ledger.vmt_km += len_km;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double g = emission_factor(v, params[k]) * len_km;
      if (emission_speed_clamped(v, params[k])) ++ledger.clamped;
      ledger.total_g[k] += g;
      ledger.edge_g[k][static_cast<std::size_t>(ev.edge)] += g;
    }
  }
}

EmissionLedger accumulate(std::span<const TraversalEvent> events, const RoadNetwork& net,
                          const std::vector<PollutantParams>& params) {
  EmissionLedger ledger(params, net.edge_count());
  accumulate(ledger, events, net, params);
  return ledger;
}

std::vector<double> mean_traversal_speed_per_edge(std::span<const TraversalEvent> events, const RoadNetwork& net) {
  std::vector<double> sum(net.edge_count(), 0.0);
  std::vector<std::int64_t> n(net.edge_count(), 0);
  for (const TraversalEvent& ev : events) {
    const auto e = static_cast<std::size_t>(ev.edge);
    sum[e] += (net.edge(ev.edge).length_m / 1000.0) / ((ev.t_exit - ev.t_entry) / 3600.0);
    ++n[e];
  }
  std::vector<double> out(net.edge_count(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t e = 0; e < out.size(); ++e)
    if (n[e] > 0) out[e] = sum[e] / static_cast<double>(n[e]);
  return out;
}

SpeedEffect speed_effect_decomposition(std::span<const TraversalEvent> rs_events,
                                       std::span<const double> ns_mean_speed_kmh, const EmissionLedger& ns_ledger,
                                       const RoadNetwork& net, const std::vector<PollutantParams>& params) {
  double fill_sum = 0.0;
  std::int64_t fill_n = 0;
  for (double s : ns_mean_speed_kmh)
    if (std::isfinite(s)) {
      fill_sum += s;
      ++fill_n;
    }
  const double fill = fill_n > 0 ? fill_sum / static_cast<double>(fill_n) : net.edges().empty() ? 0.0
                                                                                               : net.edge(0).free_flow_kmh;
  SpeedEffect out;
  for (const auto& p : params) out.pollutants.push_back(p.name);
  out.saved_g.assign(params.size(), 0.0);
  std::vector<char> filled(net.edge_count(), 0);
  for (const TraversalEvent& ev : rs_events) {
    const auto e = static_cast<std::size_t>(ev.edge);
    const double len_km = net.edge(ev.edge).length_m / 1000.0;
    const double v_rs = len_km / ((ev.t_exit - ev.t_entry) / 3600.0);
    double v_ns = ns_mean_speed_kmh[e];
    if (!std::isfinite(v_ns)) {
      v_ns = fill;
      if (!filled[e]) {
        filled[e] = 1;
        ++out.edges_filled_with_mean;
      }
    }
    for (std::size_t k = 0; k < params.size(); ++k)
      out.saved_g[k] += (emission_factor(v_ns, params[k]) - emission_factor(v_rs, params[k])) * len_km;
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    double ns_total = ns_ledger.total_g[ns_ledger.index(params[k].name)];
    out.ns_total_g.push_back(ns_total);
    out.saved_pct.push_back(ns_total > 0 ? out.saved_g[k] / ns_total * 100.0
                                         : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

void write_emissions_csv(const EmissionLedger& ledger, const RoadNetwork& net, std::ostream& out) {
  out << "edge_id,pollutant,grams\n";
  for (std::size_t e = 0; e < net.edge_count(); ++e)
    for (std::size_t k = 0; k < ledger.pollutants.size(); ++k)
      out << net.edge(static_cast<EdgeIndex>(e)).id << ',' << ledger.pollutants[k] << ','
          << csv::format_double(ledger.edge_g[k][e]) << '\n';
}

}  // namespace poolsim
