#include "oddr/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace oddr {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kSqrt3 = std::numbers::sqrt3;
// Points within this many meters of an equidistant split count as ties.
constexpr double kEdgeTolM = 1e-6;

constexpr Axial kDirections[6] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};

Axial cube_round(double fq, double fr) {
  const double fs = -fq - fr;
  double q = std::round(fq);
  double r = std::round(fr);
  double s = std::round(fs);
  const double dq = std::abs(q - fq);
  const double dr = std::abs(r - fr);
  const double ds = std::abs(s - fs);
  if (dq > dr && dq > ds) {
    q = -r - s;
  } else if (dr > ds) {
    r = -q - s;
  }
  return {static_cast<int>(q), static_cast<int>(r)};
}

}  // namespace

bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

int hex_distance(Axial a, Axial b) {
  const int dq = a.q - b.q;
  const int dr = a.r - b.r;
  return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

double distance_m(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double dphi = (b.lat - a.lat) * kDegToRad;
  const double dlambda = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

HexWorld::HexWorld(WorldParams params) : params_(params) {
  if (!is_valid(params_.center)) throw std::invalid_argument("world center out of range");
  if (!(params_.circumradius_m > 0.0)) throw std::invalid_argument("circumradius must be positive");
  if (params_.rings < 0) throw std::invalid_argument("rings must be non-negative");
  cos_lat0_ = std::cos(params_.center.lat * kDegToRad);

  const int n = params_.rings;
  const int side = 2 * n + 1;
  lookup_.assign(static_cast<std::size_t>(side) * side, -1);
  // Ring-major ids: the center cell is 0, then ring 1, and so on; row-major
  // (r, then q) within a ring. Lower ids therefore sit closer to the center.
  std::vector<Axial> order;
  for (int r = -n; r <= n; ++r) {
    for (int q = std::max(-n, -r - n); q <= std::min(n, -r + n); ++q) order.push_back({q, r});
  }
  std::stable_sort(order.begin(), order.end(),
                   [](Axial a, Axial b) { return hex_distance(a, {0, 0}) < hex_distance(b, {0, 0}); });
  for (const Axial a : order) {
    const auto id = static_cast<std::int32_t>(cells_.size());
    cells_.push_back({a, unproject(planar_center(a))});
    lookup_[*slot(a)] = id;
  }
}

std::optional<std::size_t> HexWorld::slot(Axial a) const {
  const int n = params_.rings;
  if (a.q < -n || a.q > n || a.r < -n || a.r > n) return std::nullopt;
  const int side = 2 * n + 1;
  return static_cast<std::size_t>((a.r + n) * side + (a.q + n));
}

void HexWorld::check(RegionId r) const {
  if (r.index < 0 || static_cast<std::size_t>(r.index) >= cells_.size()) {
    throw std::domain_error("invalid region id " + std::to_string(r.index));
  }
}

const GeoPoint& HexWorld::center(RegionId r) const {
  check(r);
  return cells_[r.index].center;
}

Axial HexWorld::axial(RegionId r) const {
  check(r);
  return cells_[r.index].axial;
}

int HexWorld::ring(RegionId r) const { return hex_distance(axial(r), Axial{0, 0}); }

std::optional<RegionId> HexWorld::region_at(Axial a) const {
  if (hex_distance(a, Axial{0, 0}) > params_.rings) return std::nullopt;
  const auto s = slot(a);
  if (!s || lookup_[*s] < 0) return std::nullopt;
  return RegionId{lookup_[*s]};
}

std::vector<RegionId> HexWorld::neighbors(RegionId r, int radius) const {
  check(r);
  if (radius < 0) throw std::domain_error("neighborhood radius must be non-negative");
  const Axial c = cells_[r.index].axial;
  std::vector<RegionId> out;
  for (int dq = -radius; dq <= radius; ++dq) {
    for (int dr = std::max(-radius, -dq - radius); dr <= std::min(radius, -dq + radius); ++dr) {
      if (auto id = region_at({c.q + dq, c.r + dr})) out.push_back(*id);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

HexWorld::Planar HexWorld::project(const GeoPoint& p) const {
  const double x = (p.lon - params_.center.lon) * kDegToRad * kEarthRadiusM * cos_lat0_;
  const double y = (p.lat - params_.center.lat) * kDegToRad * kEarthRadiusM;
  return {x, y};
}

GeoPoint HexWorld::unproject(Planar xy) const {
  const double lat = params_.center.lat + xy.y / kEarthRadiusM / kDegToRad;
  const double lon = params_.center.lon + xy.x / (kEarthRadiusM * cos_lat0_) / kDegToRad;
  return {lat, lon};
}

HexWorld::Planar HexWorld::planar_center(Axial a) const {
  const double s = params_.circumradius_m;
  return {s * (kSqrt3 * a.q + kSqrt3 / 2.0 * a.r), s * 1.5 * a.r};
}

std::optional<RegionId> HexWorld::locate(const GeoPoint& p) const {
  if (!is_valid(p)) return std::nullopt;
  const Planar xy = project(p);
  const double s = params_.circumradius_m;
  const double fq = (kSqrt3 / 3.0 * xy.x - 1.0 / 3.0 * xy.y) / s;
  const double fr = (2.0 / 3.0 * xy.y) / s;
  if (!std::isfinite(fq) || !std::isfinite(fr)) return std::nullopt;
  // Far outside: skip the candidate search entirely.
  if (std::abs(fq) > params_.rings + 2 || std::abs(fr) > params_.rings + 2) return std::nullopt;

  const Axial rounded = cube_round(fq, fr);
  Axial candidates[7] = {rounded};
  for (int i = 0; i < 6; ++i) {
    candidates[i + 1] = {rounded.q + kDirections[i].q, rounded.r + kDirections[i].r};
  }

  double best = std::numeric_limits<double>::infinity();
  double dist[7];
  for (int i = 0; i < 7; ++i) {
    const Planar c = planar_center(candidates[i]);
    dist[i] = std::hypot(c.x - xy.x, c.y - xy.y);
    best = std::min(best, dist[i]);
  }
  // Nearest lattice center is the containing hex; equidistant candidates
  // (edges, vertices) resolve to the lowest in-world id.
  std::optional<RegionId> out;
  for (int i = 0; i < 7; ++i) {
    if (dist[i] > best + kEdgeTolM) continue;
    if (auto id = region_at(candidates[i]); id && (!out || *id < *out)) out = id;
  }
  return out;
}

}  // namespace oddr
