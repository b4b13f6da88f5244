#include <gtest/gtest.h>

#include <algorithm>

#include "oddr/reposition.hpp"
#include "oddr/rng.hpp"
#include "oddr/valuation.hpp"
#include "support.hpp"

namespace oddr {
namespace {

using testing::center_of;
using testing::default_world;
using testing::make_driver;

RegionFeatures feat(int region, int d, int m, int v) {
  RegionFeatures f;
  f.region = RegionId{region};
  f.demand = d;
  f.matched = m;
  f.arriving = v;
  return f;
}

TEST(SelectRegion, LargestGapWins) {
  const std::vector<RegionFeatures> c{feat(3, 10, 4, 2), feat(5, 6, 1, 0), feat(9, 8, 8, 3)};
  EXPECT_EQ(c[0].gap(), 4);
  EXPECT_EQ(c[1].gap(), 5);
  EXPECT_EQ(c[2].gap(), -3);
  EXPECT_EQ(select_region_reference(c), RegionId{5});
}

TEST(SelectRegion, TiesGoToSmallestId) {
  const std::vector<RegionFeatures> c{feat(8, 0, 0, 0), feat(2, 0, 0, 0), feat(4, 0, 0, 0)};
  EXPECT_EQ(select_region_reference(c), RegionId{2});
}

TEST(SelectRegion, SingleCandidate) {
  const std::vector<RegionFeatures> c{feat(7, 0, 3, 9)};
  EXPECT_EQ(select_region_reference(c), RegionId{7});
  EXPECT_THROW(select_region_reference({}), std::invalid_argument);
}

SimState empty_state() {
  SimState s;
  s.ensure_log(100);
  return s;
}

TEST(ComputeFeatures, NoHistoryAllZero) {
  const auto f = compute_features(empty_state(), default_world().region_count(), 50);
  ASSERT_EQ(f.size(), 271u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(f[i], feat(static_cast<int>(i), 0, 0, 0));
  }
}

TEST(ComputeFeatures, EnRouteIndicator) {
  const auto& w = default_world();
  SimState s = empty_state();
  const RegionId k{12};
  int id = 1;
  for (int remaining : {5, 10, 20}) {
    Driver d = make_driver(id++, center_of(w, RegionId{0}));
    d.status = DriverStatus::kOccupied;
    d.busy_until = 40 + remaining;
    d.target = center_of(w, k);
    s.drivers.push_back(d);
  }
  s.reindex_drivers();
  const auto f = compute_features(s, w.region_count(), 40);
  EXPECT_EQ(f[k.index].arriving, 2);
  EXPECT_EQ(f[0].arriving, 0);
}

TEST(ComputeFeatures, DemandAndMatchesInWindow) {
  SimState s = empty_state();
  const RegionId k{4};
  for (int i = 0; i < 10; ++i) s.demand_log[30 + i].push_back({i + 1, k, RegionId{0}});
  for (int i = 0; i < 4; ++i) s.match_log[32 + i].push_back({32 + i, i + 1, 1, 100.0, 5.0, k, RegionId{0}});
  s.demand_log[10].push_back({99, k, RegionId{0}});  // outside the 15-minute window
  const auto f = compute_features(s, default_world().region_count(), 40);
  EXPECT_EQ(f[k.index].demand, 10);
  EXPECT_EQ(f[k.index].matched, 4);
  EXPECT_EQ(f[k.index].gap(), 6);
  EXPECT_EQ(f[0].future_value, 11);
  EXPECT_EQ(f[k.index].future_value, -11);
}

Driver over_idle(DriverId id, RegionId r, int idle_time = 6) {
  Driver d = make_driver(id, center_of(default_world(), r));
  d.idle_time = idle_time;
  return d;
}

TEST(OverIdle, StrictThreshold) {
  SimState s;
  s.drivers = {over_idle(1, RegionId{0}, 5), over_idle(2, RegionId{0}, 6)};
  s.drivers.push_back(over_idle(3, RegionId{0}, 9));
  s.drivers.back().status = DriverStatus::kOccupied;
  s.reindex_drivers();
  EXPECT_EQ(over_idle_drivers(s, 5), std::vector<DriverId>{2});
}

TEST(RepositionAll, NoOverIdleDriversEmpty) {
  SimState s;
  s.drivers = {over_idle(1, RegionId{0}, 0)};
  s.reindex_drivers();
  auto f = compute_features(s, 271, 0);
  EXPECT_TRUE(reposition_all(s, default_world(), 5, f).decision.empty());
}

TEST(RepositionAll, OneMoveWithinTwoNeighborhood) {
  const auto& w = default_world();
  SimState s = empty_state();
  s.drivers = {over_idle(1, RegionId{0})};
  s.reindex_drivers();
  const RegionId hot = *w.region_at({2, -1});
  const RegionId far = *w.region_at({5, 0});
  for (int i = 0; i < 3; ++i) s.demand_log[50].push_back({i + 1, hot, RegionId{0}});
  for (int i = 0; i < 9; ++i) s.demand_log[50].push_back({i + 10, far, RegionId{0}});
  auto f = compute_features(s, w.region_count(), 50);
  const auto out = reposition_all(s, w, 5, f);
  ASSERT_EQ(out.decision.moves.size(), 1u);
  EXPECT_EQ(out.decision.moves.at(1), hot);
  EXPECT_EQ(f[hot.index].arriving, 1);
}

TEST(RepositionAll, SelfCrowding) {
  const auto& w = default_world();
  SimState s = empty_state();
  const RegionId a = *w.region_at({1, 0});
  const RegionId b = *w.region_at({0, 1});
  s.demand_log[50].push_back({1, a, RegionId{0}});
  s.demand_log[50].push_back({2, a, RegionId{0}});
  s.demand_log[50].push_back({3, b, RegionId{0}});
  s.demand_log[50].push_back({4, b, RegionId{0}});
  s.drivers = {over_idle(1, RegionId{0}), over_idle(2, RegionId{0})};
  s.reindex_drivers();
  auto f = compute_features(s, w.region_count(), 50);
  const auto out = reposition_all(s, w, 5, f);
  // Same gap of 2 in a and b: first driver takes the smaller id, second the other.
  EXPECT_EQ(out.decision.moves.at(1), std::min(a, b));
  EXPECT_EQ(out.decision.moves.at(2), std::max(a, b));
}

TEST(RepositionAll, ExactlyOneCandidateMovePerDriver) {
  const auto& w = default_world();
  auto g = rng::make_engine(31);
  for (int trial = 0; trial < 50; ++trial) {
    SimState s = empty_state();
    for (int i = 0; i < 200; ++i) {
      const RegionId o{static_cast<std::int32_t>(rng::uniform_index(g, 271))};
      const RegionId d{static_cast<std::int32_t>(rng::uniform_index(g, 271))};
      s.demand_log[40 + rng::uniform_index(g, 15)].push_back({i + 1, o, d});
    }
    for (int j = 0; j < 30; ++j) {
      s.drivers.push_back(over_idle(j + 1, RegionId{static_cast<std::int32_t>(rng::uniform_index(g, 271))},
                                    static_cast<int>(rng::uniform_index(g, 10))));
    }
    s.reindex_drivers();
    auto f = compute_features(s, w.region_count(), 55);
    const auto out = reposition_all(s, w, 5, f);
    const auto expected = over_idle_drivers(s, 5);
    ASSERT_EQ(out.decision.moves.size(), expected.size());
    for (DriverId id : expected) {
      ASSERT_TRUE(out.decision.moves.contains(id));
      const RegionId from = s.driver(id).loc.region;
      EXPECT_LE(hex_distance(w.axial(from), w.axial(out.decision.moves.at(id))), 2);
    }
  }
}

class ScriptedRegions : public RegionChooser {
 public:
  explicit ScriptedRegions(std::vector<int> answers) : answers_(std::move(answers)) {}
  std::string_view name() const override { return "scripted"; }
  RegionId choose(const Driver&, std::span<const RegionFeatures>, std::string_view) override {
    const int a = answers_.at(std::min(calls_++, answers_.size() - 1));
    if (a < 0) throw BackendError("garbage");
    return RegionId{a};
  }

 private:
  std::vector<int> answers_;
  std::size_t calls_ = 0;
};

TEST(RepositionAll, ChooserOutsideNeighborhoodFallsBack) {
  const auto& w = default_world();
  SimState s = empty_state();
  s.drivers = {over_idle(1, RegionId{0})};
  s.reindex_drivers();
  auto f = compute_features(s, w.region_count(), 50);
  ScriptedRegions chooser({200, -1});
  const auto out = reposition_all(s, w, 5, f, &chooser);
  EXPECT_EQ(out.decision.moves.at(1), RegionId{0});
  ASSERT_EQ(out.events.size(), 1u);
  EXPECT_NE(out.events[0].find("reference"), std::string::npos);
}

TEST(RepositionAll, ChooserAnswerUsed) {
  const auto& w = default_world();
  SimState s = empty_state();
  s.drivers = {over_idle(1, RegionId{0})};
  s.reindex_drivers();
  auto f = compute_features(s, w.region_count(), 50);
  ScriptedRegions chooser({15});
  const auto out = reposition_all(s, w, 5, f, &chooser);
  EXPECT_EQ(out.decision.moves.at(1), RegionId{15});
  EXPECT_TRUE(out.events.empty());
}

}  // namespace
}  // namespace oddr
