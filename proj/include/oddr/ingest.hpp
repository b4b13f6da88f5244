#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oddr/domain.hpp"
#include "oddr/world.hpp"

namespace oddr {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMetersPerMile = 1609.34;
inline constexpr int kMinutesPerDay = 1440;

struct SkippedRow {
  std::size_t row = 0;  // 1-based data row number (header excluded)
  std::string reason;
};

struct TripFile {
  std::vector<Order> orders;  // ascending (request_tick, id); id = data row number
  std::string day0;           // YYYY-MM-DD of the earliest accepted pickup
  std::size_t rows = 0;
  std::vector<SkippedRow> skipped;
};

/// Parses yellow-cab style trip records. Required columns: pickup_datetime,
/// dropoff_datetime, pickup_longitude, pickup_latitude, dropoff_longitude,
/// dropoff_latitude, trip_distance (miles), total_amount (USD); a tpep_/lpep_
/// prefix on the datetime columns is accepted. Invalid rows are skipped and
/// recorded. Throws IoError when unreadable, EmptyScenarioError when no row
/// survives validation.
TripFile parse_trips(const std::filesystem::path& file, const HexWorld& world, int max_wait_min = 2);
TripFile parse_trips(std::istream& in, const HexWorld& world, int max_wait_min = 2);

struct ScenarioSpec {
  std::string source_file;
  double sample_fraction = 0.1;
  int driver_count = 100;
  std::optional<std::string> first_day;  // inclusive, YYYY-MM-DD
  std::optional<std::string> last_day;   // inclusive, YYYY-MM-DD
  std::uint64_t seed = 42;
};

struct Scenario {
  std::vector<Order> orders;  // ascending (request_tick, id)
  std::vector<Driver> fleet;  // initial placement, ascending id
  std::string day0;
  int days = 1;
  WorldParams world;
};

/// Global Bernoulli(sample_fraction) thinning plus a uniformly placed idle
/// fleet. Pure in (orders, spec).
Scenario sample_scenario(const std::vector<Order>& orders, const std::string& day0,
                         const ScenarioSpec& spec, const HexWorld& world);

/// Idle fleet at uniformly drawn region centers.
std::vector<Driver> place_fleet(int driver_count, const HexWorld& world, std::uint64_t seed);

struct SurgeSpec {
  std::vector<RegionId> zone;
  int hour = 10;
  double multiplier = 1.0;
};

/// Clones orders that originate in the zone during the given hour of any day.
/// Each such order gets floor(m-1) clones plus one more with probability
/// frac(m-1); clones get fresh ids and a request minute jittered within the
/// same hour. Other orders are untouched. Output ascending (request_tick, id).
std::vector<Order> synthesize_surge(const std::vector<Order>& stream, const SurgeSpec& spec,
                                    std::uint64_t seed);

struct SyntheticSpec {
  int expected_orders = 2000;  // per day
  int days = 1;
  int hotspots = 4;
  double hotspot_share = 0.75;
  double hotspot_sigma_m = 600.0;
  double detour_factor = 1.3;  // road distance / great-circle distance
  double trip_speed_mps = 6.33;
  double base_fare = 2.5;
  double fare_per_km = 1.75;
  double fare_per_min = 0.35;
  std::uint64_t seed = 7;
};

/// Poisson demand over the hex world with a time-of-day profile and a few
/// drifting hotspots. Ids start at 1.
std::vector<Order> generate_synthetic(const HexWorld& world, const SyntheticSpec& spec);

/// Minute of the day (0..1439) for a tick.
inline int minute_of_day(int tick) { return ((tick % kMinutesPerDay) + kMinutesPerDay) % kMinutesPerDay; }

// Scenario cache: <dir>/manifest.json, <dir>/orders.jsonl, <dir>/drivers.jsonl.

struct ScenarioManifest {
  std::string source;
  double sample_fraction = 1.0;
  int driver_count = 0;
  std::uint64_t seed = 0;
  std::size_t source_rows = 0;
  std::size_t skipped_rows = 0;
};

void write_scenario(const std::filesystem::path& dir, const Scenario& scenario,
                    const ScenarioManifest& manifest);
Scenario read_scenario(const std::filesystem::path& dir);

/// 64-bit FNV-1a, used for cache checksums.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);

/// One order as a single stable-field-order JSON line (no newline).
std::string order_to_line(const Order& o);
Order order_from_line(std::string_view line);

}  // namespace oddr
