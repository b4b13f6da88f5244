#include <gtest/gtest.h>

#include <algorithm>

#include "oddr/domain.hpp"
#include "oddr/rng.hpp"
#include "support.hpp"

namespace oddr {
namespace {

using testing::center_of;
using testing::default_world;
using testing::make_driver;
using testing::make_order;
using testing::offset;
using testing::place_at;

SimState one_order_state(double driver_east_m, DriverStatus status = DriverStatus::kIdle) {
  const auto& w = default_world();
  SimState s;
  const Place o = center_of(w, RegionId{0});
  s.inject(make_order(1, o, center_of(w, RegionId{20}), 10.0));
  Driver d = make_driver(7, place_at(w, offset(w, o.point, driver_east_m, 0.0)));
  d.status = status;
  s.drivers.push_back(d);
  s.reindex_drivers();
  return s;
}

TEST(FeasiblePairs, DriverAt400mIncluded) {
  const auto pairs = feasible_pairs(one_order_state(400.0), 950.0);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].order, 1);
  EXPECT_EQ(pairs[0].driver, 7);
  EXPECT_NEAR(pairs[0].pickup_m, 400.0, 0.5);
}

TEST(FeasiblePairs, DriverAt1000mExcluded) {
  EXPECT_TRUE(feasible_pairs(one_order_state(1000.0), 950.0).empty());
}

TEST(FeasiblePairs, OccupiedDriverExcluded) {
  EXPECT_TRUE(feasible_pairs(one_order_state(100.0, DriverStatus::kOccupied), 950.0).empty());
}

TEST(FeasiblePairs, RelocatingToggle) {
  auto s = one_order_state(100.0);
  s.drivers[0].target = center_of(default_world(), RegionId{3});
  EXPECT_EQ(feasible_pairs(s, 950.0, true).size(), 1u);
  EXPECT_TRUE(feasible_pairs(s, 950.0, false).empty());
}

TEST(FeasiblePairs, MatchesBruteForce) {
  const auto& w = default_world();
  auto g = rng::make_engine(3);
  for (int trial = 0; trial < 50; ++trial) {
    SimState s;
    const int n_orders = 1 + static_cast<int>(rng::uniform_index(g, 15));
    const int n_drivers = 1 + static_cast<int>(rng::uniform_index(g, 25));
    auto random_place = [&] {
      return center_of(w, RegionId{static_cast<std::int32_t>(rng::uniform_index(g, 61))});
    };
    for (int i = 0; i < n_orders; ++i) {
      Order o = make_order(100 + i, random_place(), random_place(), 5.0);
      s.inject(o);
      if (rng::bernoulli(g, 0.2)) s.order(o.id).status = OrderStatus::kExpired;
    }
    s.prune_pending();
    for (int j = 0; j < n_drivers; ++j) {
      Driver d = make_driver(j + 1, random_place());
      if (rng::bernoulli(g, 0.3)) d.status = DriverStatus::kOccupied;
      s.drivers.push_back(d);
    }
    s.reindex_drivers();

    std::vector<FeasiblePair> expected;
    for (const Order& o : s.orders) {
      if (o.status != OrderStatus::kPending) continue;
      for (const Driver& d : s.drivers) {
        if (!d.idle()) continue;
        const double m = distance_m(o.origin.point, d.loc.point);
        if (m <= 950.0) expected.push_back({o.id, d.id, m});
      }
    }
    std::sort(expected.begin(), expected.end(),
              [](const auto& a, const auto& b) { return std::tie(a.order, a.driver) < std::tie(b.order, b.driver); });
    EXPECT_EQ(feasible_pairs(s, 950.0), expected) << "trial " << trial;
  }
}

TEST(SimState, PendingIndexTracksStatus) {
  const auto& w = default_world();
  SimState s;
  s.inject(make_order(5, center_of(w, RegionId{0}), center_of(w, RegionId{1}), 1.0));
  s.inject(make_order(2, center_of(w, RegionId{0}), center_of(w, RegionId{1}), 1.0));
  EXPECT_EQ(s.pending_orders(), (std::vector<OrderId>{2, 5}));
  s.order(2).status = OrderStatus::kMatched;
  s.prune_pending();
  EXPECT_EQ(s.pending_orders(), std::vector<OrderId>{5});
  ASSERT_EQ(s.demand_log.size(), 1u);
  EXPECT_EQ(s.demand_log[0].size(), 2u);
}

TEST(SimState, UnknownIdsThrow) {
  SimState s;
  EXPECT_FALSE(s.has_order(1));
  EXPECT_ANY_THROW(s.order(1));
  EXPECT_ANY_THROW(s.driver(1));
}

TEST(TravelMinutes, RoundsUp) {
  EXPECT_EQ(travel_minutes(0.0, 6.33), 0);
  EXPECT_EQ(travel_minutes(370.0, 6.33), 1);
  EXPECT_EQ(travel_minutes(380.0, 6.33), 2);
  EXPECT_EQ(travel_minutes(950.0, 6.33), 3);
}

TEST(DispatchDecision, NormalizeSorts) {
  DispatchDecision d;
  d.pairs = {{3, 1}, {1, 2}};
  d.normalize();
  EXPECT_EQ(d.pairs.front().first, 1);
}

}  // namespace
}  // namespace oddr
