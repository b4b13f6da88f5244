#include "oddr/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "json.hpp"
#include "oddr/rng.hpp"

namespace oddr {

namespace {

using Json = nlohmann::ordered_json;
using std::chrono::sys_days;
using std::chrono::sys_seconds;

constexpr int kScenarioVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<sys_seconds> parse_timestamp(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  std::string buf(s);
  char sep = ' ';
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &sec) != 7) {
    return std::nullopt;
  }
  if (sep != ' ' && sep != 'T') return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60) return std::nullopt;
  return sys_seconds{sys_days{ymd}} + std::chrono::hours{h} + std::chrono::minutes{mi} +
         std::chrono::seconds{sec};
}

std::optional<sys_days> parse_day(std::string_view s) {
  int y = 0, mo = 0, d = 0;
  std::string buf(s);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d", &y, &mo, &d) != 3) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

std::string format_day(sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<std::size_t> find_column(const std::vector<std::string_view>& header,
                                       std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string_view h = header[i];
    if (h.starts_with("tpep_") || h.starts_with("lpep_")) h.remove_prefix(5);
    std::string lower(h);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == name) return i;
  }
  return std::nullopt;
}

struct RawTrip {
  std::size_t row;
  sys_seconds pickup;
  Order order;
};

// Uniform point inside the inscribed circle of a region's hexagon.
GeoPoint jitter_in_cell(const HexWorld& world, RegionId r, rng::Engine& g) {
  const double inner = world.params().circumradius_m * std::numbers::sqrt3 / 2.0 * 0.95;
  const double rad = inner * std::sqrt(rng::uniform01(g));
  const double ang = 2.0 * std::numbers::pi * rng::uniform01(g);
  HexWorld::Planar c = world.planar_center(world.axial(r));
  return world.unproject({c.x + rad * std::cos(ang), c.y + rad * std::sin(ang)});
}

}  // namespace

TripFile parse_trips(const std::filesystem::path& file, const HexWorld& world, int max_wait_min) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read trip file " + file.string());
  return parse_trips(in, world, max_wait_min);
}

TripFile parse_trips(std::istream& in, const HexWorld& world, int max_wait_min) {
  TripFile out;
  std::string line;
  if (!std::getline(in, line)) throw EmptyScenarioError("trip file is empty");
  const std::string header_line = line;
  const auto header = split_csv(header_line);

  static constexpr std::string_view kRequired[] = {
      "pickup_datetime",  "dropoff_datetime", "pickup_longitude", "pickup_latitude",
      "dropoff_longitude", "dropoff_latitude", "trip_distance",    "total_amount"};
  std::size_t col[8];
  for (std::size_t i = 0; i < 8; ++i) {
    auto c = find_column(header, kRequired[i]);
    if (!c) throw IoError("trip file is missing column " + std::string(kRequired[i]));
    col[i] = *c;
  }
  const std::size_t needed = *std::max_element(std::begin(col), std::end(col)) + 1;

  std::vector<RawTrip> trips;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto f = split_csv(line);
    auto skip = [&](std::string reason) { out.skipped.push_back({row, std::move(reason)}); };
    if (f.size() < needed) {
      skip("expected at least " + std::to_string(needed) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    const auto pickup = parse_timestamp(f[col[0]]);
    const auto dropoff = parse_timestamp(f[col[1]]);
    if (!pickup || !dropoff) {
      skip("bad timestamp");
      continue;
    }
    const auto plon = to_double(f[col[2]]);
    const auto plat = to_double(f[col[3]]);
    const auto dlon = to_double(f[col[4]]);
    const auto dlat = to_double(f[col[5]]);
    const auto miles = to_double(f[col[6]]);
    const auto fare = to_double(f[col[7]]);
    if (!plon || !plat || !dlon || !dlat || !miles || !fare) {
      skip("non-numeric field");
      continue;
    }
    const GeoPoint o{*plat, *plon};
    const GeoPoint d{*dlat, *dlon};
    const auto oreg = world.locate(o);
    const auto dreg = world.locate(d);
    if (!oreg || !dreg) {
      skip("endpoint outside the world");
      continue;
    }
    if (!(*fare > 0.0)) {
      skip("non-positive fare");
      continue;
    }
    if (*miles < 0.0) {
      skip("negative trip distance");
      continue;
    }
    const auto secs = (*dropoff - *pickup).count();
    if (secs <= 0) {
      skip("non-positive duration");
      continue;
    }
    Order ord;
    ord.id = static_cast<OrderId>(row);
    ord.origin = {o, *oreg};
    ord.dest = {d, *dreg};
    ord.reward = *fare;
    ord.trip_distance_m = *miles * kMetersPerMile;
    ord.trip_time_min = std::max<int>(1, static_cast<int>((secs + 59) / 60));
    ord.max_wait_min = max_wait_min;
    trips.push_back({row, *pickup, ord});
  }
  out.rows = row;
  if (trips.empty()) throw EmptyScenarioError("no valid trip rows (" + std::to_string(row) + " rows read)");

  sys_seconds earliest = trips.front().pickup;
  for (const auto& t : trips) earliest = std::min(earliest, t.pickup);
  const sys_days day0 = std::chrono::floor<std::chrono::days>(earliest);
  out.day0 = format_day(day0);
  out.orders.reserve(trips.size());
  for (auto& t : trips) {
    t.order.request_tick =
        static_cast<int>(std::chrono::floor<std::chrono::minutes>(t.pickup - sys_seconds{day0}).count());
    out.orders.push_back(t.order);
  }
  std::sort(out.orders.begin(), out.orders.end(), [](const Order& a, const Order& b) {
    return std::tie(a.request_tick, a.id) < std::tie(b.request_tick, b.id);
  });
  return out;
}

std::vector<Driver> place_fleet(int driver_count, const HexWorld& world, std::uint64_t seed) {
  if (driver_count <= 0) throw std::invalid_argument("driver count must be positive");
  auto g = rng::make_engine(seed, 1);
  std::vector<Driver> fleet;
  fleet.reserve(driver_count);
  for (int i = 0; i < driver_count; ++i) {
    const RegionId r{static_cast<std::int32_t>(rng::uniform_index(g, world.region_count()))};
    Driver d;
    d.id = i;
    d.loc = {world.center(r), r};
    fleet.push_back(d);
  }
  return fleet;
}

Scenario sample_scenario(const std::vector<Order>& orders, const std::string& day0,
                         const ScenarioSpec& spec, const HexWorld& world) {
  if (!(spec.sample_fraction > 0.0 && spec.sample_fraction <= 1.0)) {
    throw std::invalid_argument("sample fraction must lie in (0, 1]");
  }
  const auto base = parse_day(day0);
  if (!base) throw std::invalid_argument("bad day0 " + day0);
  int lo_tick = std::numeric_limits<int>::min();
  int hi_tick = std::numeric_limits<int>::max();
  sys_days start = *base;
  if (spec.first_day) {
    const auto d = parse_day(*spec.first_day);
    if (!d) throw std::invalid_argument("bad first_day " + *spec.first_day);
    start = *d;
    lo_tick = static_cast<int>((*d - *base).count()) * kMinutesPerDay;
  }
  if (spec.last_day) {
    const auto d = parse_day(*spec.last_day);
    if (!d) throw std::invalid_argument("bad last_day " + *spec.last_day);
    hi_tick = static_cast<int>((*d - *base).count() + 1) * kMinutesPerDay - 1;
  }
  const int shift = static_cast<int>((start - *base).count()) * kMinutesPerDay;

  auto g = rng::make_engine(spec.seed, 0);
  Scenario sc;
  for (const Order& o : orders) {
    if (o.request_tick < lo_tick || o.request_tick > hi_tick) continue;
    if (!rng::bernoulli(g, spec.sample_fraction)) continue;
    Order copy = o;
    copy.request_tick -= shift;
    copy.status = OrderStatus::kPending;
    copy.waited = 0;
    sc.orders.push_back(copy);
  }
  std::sort(sc.orders.begin(), sc.orders.end(), [](const Order& a, const Order& b) {
    return std::tie(a.request_tick, a.id) < std::tie(b.request_tick, b.id);
  });
  sc.fleet = place_fleet(spec.driver_count, world, spec.seed);
  sc.day0 = format_day(start);
  sc.days = sc.orders.empty() ? 1 : sc.orders.back().request_tick / kMinutesPerDay + 1;
  if (spec.last_day) sc.days = std::max(sc.days, (hi_tick - shift) / kMinutesPerDay + 1);
  sc.world = world.params();
  return sc;
}

std::vector<Order> synthesize_surge(const std::vector<Order>& stream, const SurgeSpec& spec,
                                    std::uint64_t seed) {
  if (spec.multiplier < 1.0 || !std::isfinite(spec.multiplier)) {
    throw std::invalid_argument("surge multiplier must be >= 1");
  }
  if (spec.hour < 0 || spec.hour > 23) throw std::invalid_argument("surge hour must lie in 0..23");
  std::vector<Order> out = stream;
  if (spec.multiplier == 1.0 || spec.zone.empty()) return out;

  const std::set<RegionId> zone(spec.zone.begin(), spec.zone.end());
  const double extra = spec.multiplier - 1.0;
  const int whole = static_cast<int>(std::floor(extra));
  const double frac = extra - whole;

  OrderId next_id = 0;
  for (const Order& o : stream) next_id = std::max(next_id, o.id);
  ++next_id;

  auto g = rng::make_engine(seed, 2);
  for (const Order& o : stream) {
    if (!zone.contains(o.origin.region) || minute_of_day(o.request_tick) / 60 != spec.hour) continue;
    const int clones = whole + (frac > 0.0 && rng::bernoulli(g, frac) ? 1 : 0);
    const int hour_start = o.request_tick - minute_of_day(o.request_tick) % 60;
    for (int c = 0; c < clones; ++c) {
      Order clone = o;
      clone.id = next_id++;
      clone.request_tick = hour_start + static_cast<int>(rng::uniform_index(g, 60));
      clone.status = OrderStatus::kPending;
      clone.waited = 0;
      out.push_back(clone);
    }
  }
  std::sort(out.begin(), out.end(), [](const Order& a, const Order& b) {
    return std::tie(a.request_tick, a.id) < std::tie(b.request_tick, b.id);
  });
  return out;
}

std::vector<Order> generate_synthetic(const HexWorld& world, const SyntheticSpec& spec) {
  // Relative hourly demand, shaped like a weekday in a dense downtown.
  static constexpr double kHourly[24] = {0.55, 0.40, 0.30, 0.22, 0.20, 0.28, 0.55, 0.95,
                                         1.20, 1.15, 1.00, 1.00, 1.05, 1.05, 1.00, 1.05,
                                         1.15, 1.35, 1.45, 1.35, 1.20, 1.10, 0.95, 0.75};
  double hourly_sum = 0.0;
  for (double h : kHourly) hourly_sum += h;

  auto g = rng::make_engine(spec.seed, 3);
  const auto n_regions = world.region_count();
  const int inner_rings = std::max(0, world.params().rings - 2);

  struct Hotspot {
    HexWorld::Planar at;
    double peak_hour;
  };
  std::vector<Hotspot> hotspots;
  for (int k = 0; k < spec.hotspots; ++k) {
    RegionId r;
    do {
      r = RegionId{static_cast<std::int32_t>(rng::uniform_index(g, n_regions))};
    } while (world.ring(r) > inner_rings);
    hotspots.push_back({world.planar_center(world.axial(r)), rng::uniform(g, 0.0, 24.0)});
  }

  auto hotspot_weights = [&](double hour) {
    std::vector<double> w;
    for (const auto& h : hotspots) {
      double dh = std::abs(hour - h.peak_hour);
      dh = std::min(dh, 24.0 - dh);
      w.push_back(0.4 + std::exp(-(dh / 3.0) * (dh / 3.0)));
    }
    return w;
  };

  auto draw_point = [&](double hour, double hotspot_share) -> Place {
    while (true) {
      if (!hotspots.empty() && rng::bernoulli(g, hotspot_share)) {
        const auto w = hotspot_weights(hour);
        double total = 0.0;
        for (double x : w) total += x;
        double u = rng::uniform01(g) * total;
        std::size_t k = 0;
        while (k + 1 < w.size() && u >= w[k]) u -= w[k++];
        const HexWorld::Planar c = hotspots[k].at;
        const GeoPoint p = world.unproject({rng::normal(g, c.x, spec.hotspot_sigma_m),
                                            rng::normal(g, c.y, spec.hotspot_sigma_m)});
        if (auto r = world.locate(p)) return {p, *r};
      } else {
        const RegionId r{static_cast<std::int32_t>(rng::uniform_index(g, n_regions))};
        return {jitter_in_cell(world, r, g), r};
      }
    }
  };

  std::vector<Order> out;
  OrderId next_id = 1;
  for (int day = 0; day < spec.days; ++day) {
    for (int minute = 0; minute < kMinutesPerDay; ++minute) {
      const int hour = minute / 60;
      const double lambda = spec.expected_orders * kHourly[hour] / hourly_sum / 60.0;
      const int n = rng::poisson(g, lambda);
      for (int i = 0; i < n; ++i) {
        const double h = minute / 60.0;
        Order o;
        o.id = next_id++;
        o.request_tick = day * kMinutesPerDay + minute;
        o.origin = draw_point(h, spec.hotspot_share);
        o.dest = draw_point(h, spec.hotspot_share * 0.5);
        o.trip_distance_m = spec.detour_factor * distance_m(o.origin.point, o.dest.point);
        o.trip_time_min = std::max(1, travel_minutes(o.trip_distance_m, spec.trip_speed_mps));
        const double fare = spec.base_fare + spec.fare_per_km * o.trip_distance_m / 1000.0 +
                            spec.fare_per_min * o.trip_time_min;
        o.reward = std::round(fare * 100.0) / 100.0;
        out.push_back(o);
      }
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string order_to_line(const Order& o) {
  Json j;
  j["id"] = o.id;
  j["request_tick"] = o.request_tick;
  j["origin_lat"] = o.origin.point.lat;
  j["origin_lon"] = o.origin.point.lon;
  j["origin_region"] = o.origin.region.index;
  j["dest_lat"] = o.dest.point.lat;
  j["dest_lon"] = o.dest.point.lon;
  j["dest_region"] = o.dest.region.index;
  j["reward"] = o.reward;
  j["trip_distance_m"] = o.trip_distance_m;
  j["trip_time_min"] = o.trip_time_min;
  j["max_wait_min"] = o.max_wait_min;
  return j.dump();
}

Order order_from_line(std::string_view line) {
  const Json j = Json::parse(line);
  Order o;
  o.id = j.at("id").get<OrderId>();
  o.request_tick = j.at("request_tick").get<int>();
  o.origin = {{j.at("origin_lat").get<double>(), j.at("origin_lon").get<double>()},
              RegionId{j.at("origin_region").get<std::int32_t>()}};
  o.dest = {{j.at("dest_lat").get<double>(), j.at("dest_lon").get<double>()},
            RegionId{j.at("dest_region").get<std::int32_t>()}};
  o.reward = j.at("reward").get<double>();
  o.trip_distance_m = j.at("trip_distance_m").get<double>();
  o.trip_time_min = j.at("trip_time_min").get<int>();
  o.max_wait_min = j.at("max_wait_min").get<int>();
  return o;
}

void write_scenario(const std::filesystem::path& dir, const Scenario& scenario,
                    const ScenarioManifest& manifest) {
  std::filesystem::create_directories(dir);
  std::string orders_text;
  for (const Order& o : scenario.orders) {
    orders_text += order_to_line(o);
    orders_text += '\n';
  }
  std::string drivers_text;
  for (const Driver& d : scenario.fleet) {
    Json j;
    j["id"] = d.id;
    j["lat"] = d.loc.point.lat;
    j["lon"] = d.loc.point.lon;
    j["region"] = d.loc.region.index;
    drivers_text += j.dump();
    drivers_text += '\n';
  }

  Json m;
  m["format"] = "oddr-scenario";
  m["version"] = kScenarioVersion;
  m["source"] = manifest.source;
  m["sample_fraction"] = manifest.sample_fraction;
  m["driver_count"] = scenario.fleet.size();
  m["seed"] = manifest.seed;
  m["day0"] = scenario.day0;
  m["days"] = scenario.days;
  m["order_count"] = scenario.orders.size();
  m["source_rows"] = manifest.source_rows;
  m["skipped_rows"] = manifest.skipped_rows;
  m["world"] = {{"center_lat", scenario.world.center.lat},
                {"center_lon", scenario.world.center.lon},
                {"circumradius_m", scenario.world.circumradius_m},
                {"rings", scenario.world.rings}};
  char sum[32];
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(orders_text)));
  m["orders_checksum"] = std::string("fnv1a64:") + sum;
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(drivers_text)));
  m["drivers_checksum"] = std::string("fnv1a64:") + sum;

  auto write = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    f << text;
  };
  write("orders.jsonl", orders_text);
  write("drivers.jsonl", drivers_text);
  write("manifest.json", m.dump(2) + "\n");
}

Scenario read_scenario(const std::filesystem::path& dir) {
  auto slurp = [&](const char* name) {
    std::ifstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("cannot read " + (dir / name).string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const Json m = Json::parse(slurp("manifest.json"));
  if (m.value("format", "") != "oddr-scenario" || m.value("version", 0) != kScenarioVersion) {
    throw IoError("unsupported scenario manifest in " + dir.string());
  }
  const std::string orders_text = slurp("orders.jsonl");
  const std::string drivers_text = slurp("drivers.jsonl");
  char sum[32];
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(orders_text)));
  if (m.at("orders_checksum").get<std::string>() != std::string("fnv1a64:") + sum) {
    throw IoError("orders checksum mismatch in " + dir.string());
  }

  Scenario sc;
  sc.day0 = m.at("day0").get<std::string>();
  sc.days = m.at("days").get<int>();
  const auto& w = m.at("world");
  sc.world.center = {w.at("center_lat").get<double>(), w.at("center_lon").get<double>()};
  sc.world.circumradius_m = w.at("circumradius_m").get<double>();
  sc.world.rings = w.at("rings").get<int>();

  std::istringstream os(orders_text);
  std::string line;
  while (std::getline(os, line)) {
    if (!line.empty()) sc.orders.push_back(order_from_line(line));
  }
  std::istringstream ds(drivers_text);
  while (std::getline(ds, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    Driver d;
    d.id = j.at("id").get<DriverId>();
    d.loc = {{j.at("lat").get<double>(), j.at("lon").get<double>()}, RegionId{j.at("region").get<std::int32_t>()}};
    sc.fleet.push_back(d);
  }
  return sc;
}

}  // namespace oddr
