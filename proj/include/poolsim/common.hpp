#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace poolsim {

// Dense indices into RoadNetwork::nodes() / edges(). External ids live on the
// Node / Edge records themselves.
using NodeIndex = std::int32_t;
using EdgeIndex = std::int32_t;
using RequestId = std::int64_t;
using VehicleId = std::int32_t;

inline constexpr NodeIndex kNoNode = -1;
inline constexpr EdgeIndex kNoEdge = -1;

// Two route or path times closer than this (seconds) are treated as equal and
// resolved by the deterministic tie-break of the caller.
inline constexpr double kTimeTieEps = 1e-7;

// Slack on constraint inequalities so that exact-boundary plans stay feasible
// under floating-point accumulation.
inline constexpr double kConstraintSlack = 1e-9;

inline double kmh_to_ms(double kmh) { return kmh / 3.6; }
inline double ms_to_kmh(double ms) { return ms * 3.6; }

// Input that does not conform to a documented schema.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A simulation invariant was broken. Always a bug, never bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace poolsim
