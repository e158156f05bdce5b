#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolsim/demand.hpp"
#include "poolsim/emissions.hpp"
#include "poolsim/engine.hpp"
#include "poolsim/pooling.hpp"

namespace poolsim {

// A metric whose denominator is zero.
class MetricUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct MetricLedger {
  std::int64_t served = 0;  // n
  std::int64_t total = 0;   // N
  double vmt_km = 0.0;
  double pmd_km = 0.0;      // direct distances of completed requests
  std::vector<std::string> pollutants;
  std::vector<double> pollutant_g;
  double df_sum = 0.0;      // sum over (t, edge) of u0 / u
  std::int64_t df_count = 0;
  double scheduled_sum = 0.0;
  std::int64_t scheduled_samples = 0;
};

double service_rate(const MetricLedger& m);
double delivery_efficiency(const MetricLedger& m);
double passenger_emission_factor(const MetricLedger& m, const std::string& pollutant);
double delay_factor(const MetricLedger& m);
// Mean of u0 / u over the given samples.
double delay_factor(std::span<const double> free_flow_kmh, std::span<const double> speed_kmh);
double scheduled_passengers(const MetricLedger& m);

// Builds the ledger of a finished run. Every sum runs in event-log order.
MetricLedger build_ledger(const SimOutput& sim, const EmissionLedger& emissions);

// Inside / outside split: traversal quantities, emissions and DF by edge
// midpoint; served, total and PMD by request origin. Scheduled-passenger
// samples are fleet-wide and stay with neither part.
struct RegionSplit {
  MetricLedger inside, outside;
};
RegionSplit region_split(const SimOutput& sim, const EmissionLedger& emissions, const RoadNetwork& net,
                         const BBox& bbox);

struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0, sp = 0;
  // nn: heuristic says feasible; truth: enumeration says feasible.
  void add(bool nn, bool truth, bool same_plan);
  std::int64_t total() const { return tp + tn + fp + fn; }
  double accuracy() const;
  std::optional<double> consistency() const;  // absent when tp == 0
};

struct RegressionResult {
  double slope = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};
// y = b x without intercept: b = sum xy / sum x^2, R^2 = 1 - SSE / sum y^2.
RegressionResult no_intercept_regression(std::span<const double> x, std::span<const double> y);

struct BenchResult {
  int capacity = 0;
  std::size_t instances = 0;
  ConfusionCounts counts;
  double nn_wall_s = 0.0;
  double enum_wall_s = 0.0;
  std::uint64_t orderings = 0;
};
// Runs both route builders over every instance, each timed as one batch.
BenchResult nn_benchmark(std::span<const RouteProblem> instances, int capacity);

struct Summary {
  double sr = 0, def = 0, pef_co2 = 0, pef_co = 0, pef_nox = 0, pef_hc = 0, df = 0, avg_scheduled = 0;
  int fleet_size = 0;
  int capacity = 0;
  std::uint64_t seed = 0;
};
// Undefined metrics become NaN (null in JSON).
Summary summarize(const MetricLedger& m, int fleet_size, int capacity, std::uint64_t seed);
nlohmann::ordered_json summary_to_json(const Summary& s);
Summary summary_from_json(const nlohmann::json& j);

// Recomputes the run metrics from the event log alone (traversals and final
// request records) plus the static network and coefficients.
MetricLedger ledger_from_logs(const RoadNetwork& net, const std::vector<PollutantParams>& params,
                              std::span<const TraversalEvent> traversals, std::span<const Request> requests,
                              double step_s, double horizon_s, int fleet_size);

}  // namespace poolsim
