#include "oddr/domain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace oddr {

std::string_view to_string(OrderStatus s) {
  switch (s) {
    case OrderStatus::kPending: return "pending";
    case OrderStatus::kMatched: return "matched";
    case OrderStatus::kCompleted: return "completed";
    case OrderStatus::kExpired: return "expired";
  }
  return "unknown";
}

void DispatchDecision::normalize() { std::sort(pairs.begin(), pairs.end()); }

Order& SimState::order(OrderId id) {
  auto it = order_index_.find(id);
  if (it == order_index_.end()) throw std::out_of_range("unknown order " + std::to_string(id));
  return orders[it->second];
}

const Order& SimState::order(OrderId id) const {
  auto it = order_index_.find(id);
  if (it == order_index_.end()) throw std::out_of_range("unknown order " + std::to_string(id));
  return orders[it->second];
}

Driver& SimState::driver(DriverId id) {
  auto it = driver_index_.find(id);
  if (it == driver_index_.end()) throw std::out_of_range("unknown driver " + std::to_string(id));
  return drivers[it->second];
}

const Driver& SimState::driver(DriverId id) const {
  auto it = driver_index_.find(id);
  if (it == driver_index_.end()) throw std::out_of_range("unknown driver " + std::to_string(id));
  return drivers[it->second];
}

void SimState::reindex_drivers() {
  std::sort(drivers.begin(), drivers.end(),
            [](const Driver& a, const Driver& b) { return a.id < b.id; });
  driver_index_.clear();
  for (std::size_t i = 0; i < drivers.size(); ++i) {
    if (!driver_index_.emplace(drivers[i].id, i).second) {
      throw std::invalid_argument("duplicate driver id " + std::to_string(drivers[i].id));
    }
  }
}

void SimState::ensure_log(int t) {
  const auto need = static_cast<std::size_t>(t) + 1;
  if (demand_log.size() < need) demand_log.resize(need);
  if (match_log.size() < need) match_log.resize(need);
}

void SimState::inject(Order o) {
  if (order_index_.contains(o.id)) {
    throw std::invalid_argument("duplicate order id " + std::to_string(o.id));
  }
  ensure_log(tick);
  demand_log[tick].push_back({o.id, o.origin.region, o.dest.region});
  order_index_.emplace(o.id, orders.size());
  if (o.status == OrderStatus::kPending) pending_.push_back(o.id);
  orders.push_back(std::move(o));
}

std::vector<OrderId> SimState::pending_orders() const {
  std::vector<OrderId> out;
  for (OrderId id : pending_) {
    if (order(id).status == OrderStatus::kPending) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SimState::prune_pending() {
  std::erase_if(pending_, [this](OrderId id) { return order(id).status != OrderStatus::kPending; });
}

std::vector<FeasiblePair> feasible_pairs(const SimState& state, double max_pickup_m,
                                         bool include_relocating) {
  std::vector<FeasiblePair> out;
  for (OrderId oid : state.pending_orders()) {
    const Order& o = state.order(oid);
    for (const Driver& d : state.drivers) {
      if (!d.idle()) continue;
      if (!include_relocating && d.relocating()) continue;
      const double dist = distance_m(d.loc.point, o.origin.point);
      if (dist <= max_pickup_m) out.push_back({oid, d.id, dist});
    }
  }
  return out;  // pending ids ascending, drivers ascending
}

int travel_minutes(double meters, double speed_mps) {
  if (!(speed_mps > 0.0)) throw std::invalid_argument("speed must be positive");
  if (meters <= 0.0) return 0;
  return static_cast<int>(std::ceil(meters / speed_mps / 60.0));
}

}  // namespace oddr
