#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oddr/domain.hpp"
#include "oddr/world.hpp"

namespace oddr {

/// Supply/demand picture of one region at one tick.
struct RegionFeatures {
  RegionId region;
  int demand = 0;        // requests originating here over the history window
  int matched = 0;       // of those windows' matches, originating here
  int arriving = 0;      // occupied drivers finishing here within the horizon
  int future_value = 0;  // destination-minus-origin count, valuation window

  int gap() const { return demand - matched - arriving; }
  friend bool operator==(const RegionFeatures&, const RegionFeatures&) = default;
};

struct FeatureWindows {
  int history_min = 15;
  int arrival_horizon_min = 15;
  int future_value_min = 60;
};

/// Features for every region, indexed by region id. Demand and matches are
/// summed over [tick - history, tick]; arrivals count occupied drivers whose
/// trip ends in the region with remaining busy time <= horizon.
std::vector<RegionFeatures> compute_features(const SimState& state, std::size_t region_count, int tick,
                                             const FeatureWindows& windows = {});

/// Largest demand - matched - arriving gap; ties to the smallest region id.
RegionId select_region_reference(std::span<const RegionFeatures> candidates);

/// Pluggable region choice (e.g. a language-model policy).
class RegionChooser {
 public:
  virtual ~RegionChooser() = default;
  virtual std::string_view name() const = 0;
  /// Throws BackendError on an unusable response.
  virtual RegionId choose(const Driver& driver, std::span<const RegionFeatures> candidates,
                          std::string_view correction) = 0;
};

/// Idle drivers whose idle clock exceeds the threshold, ascending id.
std::vector<DriverId> over_idle_drivers(const SimState& state, int idle_threshold_min);

struct RepositionOutcome {
  RepositionDecision decision;
  std::vector<std::string> events;
};

/// One destination per over-idle driver, chosen within `radius` hex steps of
/// its current region. Drivers are processed in ascending id; each choice
/// adds one to the chosen region's `arriving` count in `features` so later
/// drivers see the crowding.
RepositionOutcome reposition_all(const SimState& state, const HexWorld& world, int idle_threshold_min,
                                 std::vector<RegionFeatures>& features, RegionChooser* chooser = nullptr,
                                 int radius = 2);

}  // namespace oddr
