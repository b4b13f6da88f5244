#include "oddr/reposition.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "oddr/valuation.hpp"

namespace oddr {

std::vector<RegionFeatures> compute_features(const SimState& state, std::size_t region_count, int tick,
                                             const FeatureWindows& windows) {
  std::vector<RegionFeatures> out(region_count);
  for (std::size_t i = 0; i < region_count; ++i) out[i].region = RegionId{static_cast<std::int32_t>(i)};
  if (tick < 0) return out;

  auto in_range = [&](RegionId r) { return r.valid() && static_cast<std::size_t>(r.index) < region_count; };
  const int lo = std::max(0, tick - windows.history_min);
  for (int t = lo; t <= tick; ++t) {
    if (static_cast<std::size_t>(t) < state.demand_log.size()) {
      for (const auto& r : state.demand_log[t]) {
        if (in_range(r.origin)) ++out[r.origin.index].demand;
      }
    }
    if (static_cast<std::size_t>(t) < state.match_log.size()) {
      for (const auto& m : state.match_log[t]) {
        if (in_range(m.origin)) ++out[m.origin.index].matched;
      }
    }
  }
  for (const Driver& d : state.drivers) {
    if (d.idle() || !d.busy_until || !d.target) continue;
    const int remaining = *d.busy_until - tick;
    if (remaining <= windows.arrival_horizon_min && in_range(d.target->region)) {
      ++out[d.target->region.index].arriving;
    }
  }
  const auto fv = future_values(state.demand_log, region_count, tick, windows.future_value_min);
  for (std::size_t i = 0; i < region_count; ++i) out[i].future_value = fv[i];
  return out;
}

RegionId select_region_reference(std::span<const RegionFeatures> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidate regions");
  const RegionFeatures* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.gap() > best->gap() || (c.gap() == best->gap() && c.region < best->region)) best = &c;
  }
  return best->region;
}

std::vector<DriverId> over_idle_drivers(const SimState& state, int idle_threshold_min) {
  std::vector<DriverId> out;
  for (const Driver& d : state.drivers) {
    if (d.idle() && d.idle_time > idle_threshold_min) out.push_back(d.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

RepositionOutcome reposition_all(const SimState& state, const HexWorld& world, int idle_threshold_min,
                                 std::vector<RegionFeatures>& features, RegionChooser* chooser, int radius) {
  if (features.size() != world.region_count()) {
    throw std::invalid_argument("feature table does not cover the world");
  }
  RepositionOutcome out;
  for (DriverId id : over_idle_drivers(state, idle_threshold_min)) {
    const Driver& d = state.driver(id);
    const auto regions = world.neighbors(d.loc.region, radius);
    std::vector<RegionFeatures> candidates;
    candidates.reserve(regions.size());
    for (RegionId r : regions) candidates.push_back(features[r.index]);
    auto is_candidate = [&](RegionId r) { return std::binary_search(regions.begin(), regions.end(), r); };

    std::optional<RegionId> pick;
    if (chooser != nullptr) {
      std::string correction;
      for (int attempt = 0; attempt < 2 && !pick; ++attempt) {
        try {
          const RegionId r = chooser->choose(d, candidates, correction);
          if (is_candidate(r)) {
            pick = r;
          } else {
            correction = "region " + std::to_string(r.index) +
                         " is not among the candidates; answer with one of the listed region ids";
          }
        } catch (const BackendError& e) {
          correction = std::string("the previous answer could not be used: ") + e.what();
        }
      }
      if (pick && !correction.empty()) {
        out.events.push_back("reposition: driver " + std::to_string(id) + ": backend '" + std::string(chooser->name()) +
                             "' answered on retry (" + correction + ")");
      }
      if (!pick) {
        out.events.push_back("reposition: driver " + std::to_string(id) + ": backend '" +
                             std::string(chooser->name()) + "' failed twice (" + correction +
                             "); used reference choice");
      }
    }
    if (!pick) pick = select_region_reference(candidates);

    out.decision.moves[id] = *pick;
    ++features[pick->index].arriving;
  }
  return out;
}

}  // namespace oddr
