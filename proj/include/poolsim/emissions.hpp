#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "poolsim/engine.hpp"
#include "poolsim/netgraph.hpp"

namespace poolsim {

// Rational speed curve EF(v) = (a v^2 + b v + g + d / v) / (e v^2 + z v + h), g/km,
// evaluated with v clamped into [v_min, v_max] km/h.
struct PollutantParams {
  std::string name;
  double alpha = 0, beta = 0, gamma = 0, delta = 0, epsilon = 0, zeta = 0, eta = 1;
  double v_min = 10.0, v_max = 130.0;
};

inline constexpr std::array<const char*, 4> kPollutants = {"CO2", "CO", "NOx", "HC"};

// CSV `pollutant,alpha,beta,gamma,delta,epsilon,zeta,eta,v_min,v_max`. Rejects a
// denominator that is not positive or a curve that is not positive anywhere on
// the valid range (scanned at 1 km/h).
std::vector<PollutantParams> load_coefficients(std::istream& in, const std::string& source = "coefficients");
std::vector<PollutantParams> load_coefficients_file(const std::string& path);

double emission_factor(double speed_kmh, const PollutantParams& p);
// True when the speed lies outside the valid range and was clamped.
bool emission_speed_clamped(double speed_kmh, const PollutantParams& p);

struct EmissionLedger {
  std::vector<std::string> pollutants;
  std::vector<double> total_g;                 // per pollutant
  std::vector<std::vector<double>> edge_g;     // [pollutant][edge]
  double vmt_km = 0.0;
  std::int64_t clamped = 0;                    // traversal-pollutant evaluations outside the valid range

  EmissionLedger() = default;
  EmissionLedger(const std::vector<PollutantParams>& params, std::size_t edge_count);
  std::size_t index(const std::string& pollutant) const;  // throws LoadError when absent
  void merge(const EmissionLedger& other);
};

// Adds EF(l / (exit - entry)) * l for each traversal and pollutant.
void accumulate(EmissionLedger& ledger, std::span<const TraversalEvent> events, const RoadNetwork& net,
                const std::vector<PollutantParams>& params);
EmissionLedger accumulate(std::span<const TraversalEvent> events, const RoadNetwork& net,
                          const std::vector<PollutantParams>& params);

// Mean realized speed (km/h) per edge over all traversals of that edge; NaN
// where an edge was never traversed.
std::vector<double> mean_traversal_speed_per_edge(std::span<const TraversalEvent> events, const RoadNetwork& net);

struct SpeedEffect {
  std::vector<std::string> pollutants;
  std::vector<double> saved_g;        // sum over RS traversals of (EF(u_NS) - EF(u_RS)) * l
  std::vector<double> ns_total_g;
  std::vector<double> saved_pct;      // saved / NS total * 100
  std::int64_t edges_filled_with_mean = 0;
};

// For every RS traversal, the emissions it would have produced at the NS
// mean speed of its edge minus what it produced at its own speed. Edges the
// NS run never traversed use the mean over the NS edge speeds.
SpeedEffect speed_effect_decomposition(std::span<const TraversalEvent> rs_events,
                                       std::span<const double> ns_mean_speed_kmh, const EmissionLedger& ns_ledger, const RoadNetwork& net,
                                       const std::vector<PollutantParams>& params);

void write_emissions_csv(const EmissionLedger& ledger, const RoadNetwork& net, std::ostream& out);

}  // namespace poolsim
