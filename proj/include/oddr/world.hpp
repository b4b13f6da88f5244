#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace oddr {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p);

/// Dense region index, 0..region_count-1.
struct RegionId {
  std::int32_t index = -1;

  constexpr RegionId() = default;
  constexpr explicit RegionId(std::int32_t i) : index(i) {}

  constexpr bool valid() const { return index >= 0; }
  friend constexpr auto operator<=>(const RegionId&, const RegionId&) = default;
};

/// Axial hex coordinates (pointy-top). The third cube coordinate is -q-r.
struct Axial {
  int q = 0;
  int r = 0;

  friend constexpr bool operator==(const Axial&, const Axial&) = default;
};

int hex_distance(Axial a, Axial b);

/// Great-circle (haversine) distance in meters.
double distance_m(const GeoPoint& a, const GeoPoint& b);

struct WorldParams {
  GeoPoint center{40.7580, -73.9855};
  double circumradius_m = 300.0;
  int rings = 9;
};

/// Concentric-ring hexagonal tessellation around a center point.
///
/// Cells are pointy-top hexagons laid out in a local equirectangular
/// projection anchored at the world center. Region ids are assigned ring by
/// ring outward from the center cell (id 0), row-major (axial r, then q)
/// within a ring, so they are dense and stable for a given parameter set
/// and smaller ids lie closer to the center. Immutable after construction.
class HexWorld {
 public:
  explicit HexWorld(WorldParams params = {});

  const WorldParams& params() const { return params_; }
  std::size_t region_count() const { return cells_.size(); }

  const GeoPoint& center(RegionId r) const;
  Axial axial(RegionId r) const;
  /// Ring index of the cell (hex distance from the world center).
  int ring(RegionId r) const;

  std::optional<RegionId> region_at(Axial a) const;

  /// All in-world regions within hex distance `radius` of `r`, including `r`,
  /// ascending by id. Throws std::domain_error on an invalid id.
  std::vector<RegionId> neighbors(RegionId r, int radius) const;

  /// Region whose cell contains `p`; std::nullopt when outside the world.
  /// Points on a shared edge resolve to the lower region id.
  std::optional<RegionId> locate(const GeoPoint& p) const;

  /// Local planar coordinates (meters east, meters north of the center).
  struct Planar {
    double x = 0.0;
    double y = 0.0;
  };
  Planar project(const GeoPoint& p) const;
  GeoPoint unproject(Planar xy) const;
  Planar planar_center(Axial a) const;

 private:
  struct Cell {
    Axial axial;
    GeoPoint center;
  };

  void check(RegionId r) const;
  std::optional<std::size_t> slot(Axial a) const;

  WorldParams params_;
  double cos_lat0_ = 1.0;
  std::vector<Cell> cells_;
  // (2*rings+1)^2 lookup from axial offset to region index; -1 outside.
  std::vector<std::int32_t> lookup_;
};

}  // namespace oddr

template <>
struct std::hash<oddr::RegionId> {
  std::size_t operator()(const oddr::RegionId& r) const noexcept {
    return std::hash<std::int32_t>{}(r.index);
  }
};
