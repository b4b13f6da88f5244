#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oddr/world.hpp"

namespace oddr {

using OrderId = std::int64_t;
using DriverId = std::int64_t;

/// A located point: raw coordinates plus the grid cell they fall in.
struct Place {
  GeoPoint point;
  RegionId region;
};

enum class OrderStatus { kPending, kMatched, kCompleted, kExpired };
std::string_view to_string(OrderStatus s);

struct Order {
  OrderId id = 0;
  int request_tick = 0;  // minutes since the scenario's day-0 midnight
  Place origin;
  Place dest;
  double reward = 0.0;
  double trip_distance_m = 0.0;
  int trip_time_min = 1;
  int max_wait_min = 2;
  OrderStatus status = OrderStatus::kPending;
  int waited = 0;
};

enum class DriverStatus { kIdle = 0, kOccupied = 1 };

struct Driver {
  DriverId id = 0;
  Place loc;
  std::optional<Place> target;  // repositioning target or trip destination
  DriverStatus status = DriverStatus::kIdle;
  int waited = 0;     // minutes since the last status change
  int idle_time = 0;  // minutes since the last completed order or relocation
  int finished_orders = 0;
  double cum_reward = 0.0;
  std::optional<int> busy_until;
  std::optional<OrderId> current_order;

  bool idle() const { return status == DriverStatus::kIdle; }
  bool relocating() const { return idle() && target.has_value(); }
};

/// Matched (order, driver) pairs for one tick, ascending by order id.
struct DispatchDecision {
  std::vector<std::pair<OrderId, DriverId>> pairs;

  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
  void normalize();  // sort ascending
  friend bool operator==(const DispatchDecision&, const DispatchDecision&) = default;
};

/// Destination region for every over-idle driver in one tick.
struct RepositionDecision {
  std::map<DriverId, RegionId> moves;

  bool empty() const { return moves.empty(); }
  friend bool operator==(const RepositionDecision&, const RepositionDecision&) = default;
};

struct FeasiblePair {
  OrderId order = 0;
  DriverId driver = 0;
  double pickup_m = 0.0;

  friend bool operator==(const FeasiblePair&, const FeasiblePair&) = default;
};

struct RequestRecord {
  OrderId order = 0;
  RegionId origin;
  RegionId dest;
};

struct MatchRecord {
  int tick = 0;
  OrderId order = 0;
  DriverId driver = 0;
  double pickup_m = 0.0;
  double reward = 0.0;
  RegionId origin;
  RegionId dest;
};

/// Per-tick request log; index = tick.
using DemandLog = std::vector<std::vector<RequestRecord>>;
/// Per-tick match log; index = tick.
using MatchLog = std::vector<std::vector<MatchRecord>>;

/// Mutable simulation state. Owned by the engine; policies see it const.
struct SimState {
  int tick = 0;
  std::vector<Order> orders;    // every injected order, in injection order
  std::vector<Driver> drivers;  // ascending by id; count fixed for a run
  DemandLog demand_log;
  MatchLog match_log;
  std::uint64_t rng_seed = 0;

  Order& order(OrderId id);
  const Order& order(OrderId id) const;
  Driver& driver(DriverId id);
  const Driver& driver(DriverId id) const;
  bool has_order(OrderId id) const { return order_index_.contains(id); }

  /// Appends an order and logs its request at the current tick.
  void inject(Order o);
  std::vector<OrderId> pending_orders() const;  // ascending id
  /// Drops orders that are no longer pending from the pending index.
  void prune_pending();
  /// Grows the per-tick logs so that `t` is a valid index.
  void ensure_log(int t);
  void reindex_drivers();

 private:
  std::unordered_map<OrderId, std::size_t> order_index_;
  std::unordered_map<DriverId, std::size_t> driver_index_;
  std::vector<OrderId> pending_;
};

/// Idle-driver / pending-order pairs within pickup range, ordered by
/// (order id, driver id). Relocating drivers count as idle unless
/// `include_relocating` is false.
std::vector<FeasiblePair> feasible_pairs(const SimState& state, double max_pickup_m,
                                         bool include_relocating = true);

/// Whole minutes needed to cover `meters` at `speed_mps`, rounded up.
int travel_minutes(double meters, double speed_mps);

}  // namespace oddr
