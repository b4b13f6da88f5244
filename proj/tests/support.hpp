#pragma once

// Small builders shared by the unit tests and the acceptance binary.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "oddr/domain.hpp"
#include "oddr/rng.hpp"
#include "oddr/world.hpp"

namespace oddr::testing {

inline const HexWorld& default_world() {
  static const HexWorld w;
  return w;
}

/// Point `east_m` / `north_m` away from `p` in the world's local plane.
inline GeoPoint offset(const HexWorld& w, const GeoPoint& p, double east_m, double north_m) {
  const auto xy = w.project(p);
  return w.unproject({xy.x + east_m, xy.y + north_m});
}

inline Place place_at(const HexWorld& w, const GeoPoint& p) { return {p, *w.locate(p)}; }

inline Place center_of(const HexWorld& w, RegionId r) { return {w.center(r), r}; }

inline Order make_order(OrderId id, Place origin, Place dest, double reward, int tick = 0, int trip_min = 5) {
  Order o;
  o.id = id;
  o.request_tick = tick;
  o.origin = origin;
  o.dest = dest;
  o.reward = reward;
  o.trip_distance_m = distance_m(origin.point, dest.point);
  o.trip_time_min = trip_min;
  return o;
}

inline Driver make_driver(DriverId id, Place loc, double cum_reward = 0.0) {
  Driver d;
  d.id = id;
  d.loc = loc;
  d.cum_reward = cum_reward;
  return d;
}

/// Region id of the cell at axial (q, r).
inline RegionId at(const HexWorld& w, int q, int r) { return *w.region_at({q, r}); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("oddr-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oddr::testing
