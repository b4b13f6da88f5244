#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>

#include "oddr/assignment.hpp"
#include "oddr/dispatch.hpp"
#include "oddr/rng.hpp"

namespace oddr {
namespace {

// Exhaustive optimum: every order either takes an unused driver or stays
// unmatched. Fine up to 6 x 6.
double brute_force(int n, int m, const std::vector<double>& w) {
  std::vector<char> used(m, 0);
  std::function<double(int)> go = [&](int i) -> double {
    if (i == n) return 0.0;
    double best = go(i + 1);
    for (int j = 0; j < m; ++j) {
      if (used[j] || w[i * m + j] <= 0.0) continue;
      used[j] = 1;
      best = std::max(best, w[i * m + j] + go(i + 1));
      used[j] = 0;
    }
    return best;
  };
  return go(0);
}

std::vector<WeightedPair> to_edges(int n, int m, const std::vector<double>& w) {
  std::vector<WeightedPair> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (w[i * m + j] > 0.0) edges.push_back({i + 1, j + 101, w[i * m + j]});
    }
  }
  return edges;
}

std::vector<FeasiblePair> as_feasible(std::span<const WeightedPair> edges) {
  std::vector<FeasiblePair> out;
  for (const auto& e : edges) out.push_back({e.order, e.driver, 0.0});
  return out;
}

TEST(Assignment, SquareAndRectangular) {
  const double w[2][3] = {{1, 2, 3}, {4, 5, 1}};
  auto a = max_weight_assignment<double>(2, 3, [&](std::size_t i, std::size_t j) { return w[i][j]; });
  EXPECT_DOUBLE_EQ(a.total, 8.0);
  EXPECT_EQ(a.row_to_col, (std::vector<int>{2, 1}));
  auto t = max_weight_assignment<double>(3, 2, [&](std::size_t i, std::size_t j) { return w[j][i]; });
  EXPECT_DOUBLE_EQ(t.total, 8.0);
  EXPECT_EQ(t.row_to_col, (std::vector<int>{-1, 1, 0}));
  EXPECT_TRUE(max_weight_assignment<double>(0, 4, [](std::size_t, std::size_t) { return 1.0; }).row_to_col.empty());
}

TEST(KmDispatch, EmptyGraph) { EXPECT_TRUE(km_dispatch({}).empty()); }

TEST(KmDispatch, ForcedMatch) {
  const std::vector<WeightedPair> e{{1, 1, 5.0}};
  const auto d = km_dispatch(e);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(decision_weight(d, e), 5.0);
}

TEST(KmDispatch, TwoByTwo) {
  const std::vector<WeightedPair> e{{1, 1, 3.0}, {1, 2, 5.0}, {2, 1, 4.0}, {2, 2, 1.0}};
  const auto d = km_dispatch(e);
  EXPECT_EQ(d.pairs, (std::vector<std::pair<OrderId, DriverId>>{{1, 2}, {2, 1}}));
  EXPECT_DOUBLE_EQ(decision_weight(d, e), 9.0);
}

TEST(KmDispatch, TieBreakIsLexicographic) {
  // Both perfect matchings weigh 2; the one starting (1,1) wins.
  const std::vector<WeightedPair> e{{1, 1, 1.0}, {1, 2, 1.0}, {2, 1, 1.0}, {2, 2, 1.0}};
  EXPECT_EQ(km_dispatch(e).pairs, (std::vector<std::pair<OrderId, DriverId>>{{1, 1}, {2, 2}}));
}

TEST(KmDispatch, MatchesBruteForceOnRandomGraphs) {
  auto g = rng::make_engine(101);
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + static_cast<int>(rng::uniform_index(g, 6));
    const int m = 1 + static_cast<int>(rng::uniform_index(g, 6));
    const double density = trial % 2 ? 1.0 : 0.5;
    std::vector<double> w(n * m, 0.0);
    for (double& x : w) x = rng::bernoulli(g, density) ? rng::uniform(g, 0.0, 10.0) : 0.0;
    const auto edges = to_edges(n, m, w);
    const auto d = km_dispatch(edges);
    EXPECT_NEAR(decision_weight(d, edges), brute_force(n, m, w), 1e-9) << "trial " << trial;
    EXPECT_FALSE(validate_decision(d, as_feasible(edges)).has_value());
  }
}

TEST(KmDispatch, IntegerWeightsExact) {
  auto g = rng::make_engine(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng::uniform_index(g, 6));
    const int m = 1 + static_cast<int>(rng::uniform_index(g, 6));
    std::vector<double> w(n * m);
    for (double& x : w) x = static_cast<double>(rng::uniform_index(g, 4));  // many ties and zeros
    const auto edges = to_edges(n, m, w);
    EXPECT_EQ(decision_weight(km_dispatch(edges), edges), brute_force(n, m, w));
  }
}

TEST(KmDispatch, DuplicateEdgesKeepMax) {
  const std::vector<WeightedPair> e{{1, 1, 1.0}, {1, 1, 4.0}};
  EXPECT_DOUBLE_EQ(decision_weight(km_dispatch(e), e), 4.0);
}

struct Fixture {
  std::vector<OrderSnapshot> orders;
  ValueMap values;
  std::vector<Driver> drivers;
  std::vector<FeasiblePair> feasible;
};

Driver driver(DriverId id, double cr) {
  Driver d;
  d.id = id;
  d.cum_reward = cr;
  return d;
}

OrderSnapshot order(OrderId id) {
  OrderSnapshot o;
  o.id = id;
  return o;
}

TEST(DriverScores, ByHand) {
  const DispatchWeights w;
  const OrderSnapshot o = order(1);
  const std::vector<EligibleDriver> e{{1, 100.0, 80.0, 0, 0, {}}, {2, 900.0, 0.0, 0, 0, {}}};
  const auto s = driver_scores({o, 50.0, e, w, 950.0});
  EXPECT_NEAR(s[0], 0.3 * (1.0 - 100.0 / 950.0) + 0.2 * 0.0, 1e-12);
  EXPECT_NEAR(s[1], 0.3 * (1.0 - 900.0 / 950.0) + 0.2 * 1.0, 1e-12);
  EXPECT_NEAR(s[0], 0.2684, 1e-4);
  EXPECT_NEAR(s[1], 0.2158, 1e-4);
  EXPECT_EQ(choose_driver_reference({o, 50.0, e, w, 950.0}), 1);
}

TEST(FairnessDispatch, EquidistantLowerIncomeWins) {
  Fixture f;
  f.orders = {order(1)};
  f.values = {{1, 50.0}};
  f.drivers = {driver(1, 80.0), driver(2, 50.0)};
  f.feasible = {{1, 1, 300.0}, {1, 2, 300.0}};
  const auto out = fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0);
  EXPECT_EQ(out.decision.pairs, (std::vector<std::pair<OrderId, DriverId>>{{1, 2}}));
}

TEST(FairnessDispatch, HigherValueOrderGoesFirst) {
  Fixture f;
  f.orders = {order(1), order(2)};
  f.values = {{1, 40.0}, {2, 90.0}};
  f.drivers = {driver(5, 0.0)};
  f.feasible = {{1, 5, 100.0}, {2, 5, 100.0}};
  const auto out = fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0);
  EXPECT_EQ(out.decision.pairs, (std::vector<std::pair<OrderId, DriverId>>{{2, 5}}));
}

TEST(FairnessDispatch, ShiftInvariance) {
  auto g = rng::make_engine(55);
  for (int trial = 0; trial < 100; ++trial) {
    Fixture f;
    const int n = 1 + static_cast<int>(rng::uniform_index(g, 6));
    const int m = 1 + static_cast<int>(rng::uniform_index(g, 6));
    for (int i = 0; i < n; ++i) {
      f.orders.push_back(order(i + 1));
      f.values[i + 1] = std::round(rng::uniform(g, 0, 100));
    }
    for (int j = 0; j < m; ++j) f.drivers.push_back(driver(j + 1, std::round(rng::uniform(g, 0, 300))));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        if (rng::bernoulli(g, 0.7)) f.feasible.push_back({i + 1, j + 1, std::round(rng::uniform(g, 0, 950))});
      }
    }
    const auto base = fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0);
    auto shifted = f.drivers;
    for (auto& d : shifted) d.cum_reward += 64.0;  // exact in binary
    const auto moved = fairness_dispatch(f.orders, f.values, shifted, f.feasible, {}, 950.0);
    EXPECT_EQ(base.decision, moved.decision) << "trial " << trial;
    EXPECT_FALSE(validate_decision(base.decision, f.feasible).has_value());

    // Optimal matching by reward dominates the greedy one on the same edges.
    std::vector<WeightedPair> edges;
    for (const auto& p : f.feasible) edges.push_back({p.order, p.driver, f.values[p.order] + 1.0});
    EXPECT_GE(decision_weight(km_dispatch(edges), edges) + 1e-9, decision_weight(base.decision, edges));
  }
}

TEST(FairnessDispatch, OccupiedDriversIgnored) {
  Fixture f;
  f.orders = {order(1)};
  f.values = {{1, 50.0}};
  f.drivers = {driver(1, 0.0)};
  f.drivers[0].status = DriverStatus::kOccupied;
  f.feasible = {{1, 1, 100.0}};
  EXPECT_TRUE(fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0).decision.empty());
}

class ScriptedChooser : public DriverChooser {
 public:
  explicit ScriptedChooser(std::vector<DriverId> answers) : answers_(std::move(answers)) {}
  std::string_view name() const override { return "scripted"; }
  DriverId choose(const DispatchQuery&, std::string_view correction) override {
    corrections.emplace_back(correction);
    const DriverId a = answers_.at(std::min(calls_++, answers_.size() - 1));
    if (a < 0) throw BackendError("unparseable");
    return a;
  }
  std::vector<std::string> corrections;

 private:
  std::vector<DriverId> answers_;
  std::size_t calls_ = 0;
};

Fixture two_driver_fixture() {
  Fixture f;
  f.orders = {order(1)};
  f.values = {{1, 50.0}};
  f.drivers = {driver(1, 0.0), driver(2, 100.0)};
  f.feasible = {{1, 1, 100.0}, {1, 2, 100.0}};
  return f;
}

TEST(FairnessDispatch, ChooserAnswerIsUsed) {
  auto f = two_driver_fixture();
  ScriptedChooser c({2});
  const auto out = fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0, &c);
  EXPECT_EQ(out.decision.pairs, (std::vector<std::pair<OrderId, DriverId>>{{1, 2}}));
  EXPECT_TRUE(out.events.empty());
}

TEST(FairnessDispatch, IneligibleAnswerRetriedThenFallsBack) {
  auto f = two_driver_fixture();
  ScriptedChooser c({99, 42});
  const auto out = fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0, &c);
  EXPECT_EQ(out.decision.pairs, (std::vector<std::pair<OrderId, DriverId>>{{1, 1}}));
  ASSERT_EQ(c.corrections.size(), 2u);
  EXPECT_TRUE(c.corrections[0].empty());
  EXPECT_NE(c.corrections[1].find("99"), std::string::npos);
  ASSERT_EQ(out.events.size(), 1u);
  EXPECT_NE(out.events[0].find("reference"), std::string::npos);
}

TEST(FairnessDispatch, RetrySuccessIsLogged) {
  auto f = two_driver_fixture();
  ScriptedChooser c({-1, 2});
  const auto out = fairness_dispatch(f.orders, f.values, f.drivers, f.feasible, {}, 950.0, &c);
  EXPECT_EQ(out.decision.pairs, (std::vector<std::pair<OrderId, DriverId>>{{1, 2}}));
  ASSERT_EQ(out.events.size(), 1u);
  EXPECT_NE(out.events[0].find("retry"), std::string::npos);
}

TEST(ValidateDecision, Cases) {
  const std::vector<FeasiblePair> feas{{1, 1, 10}, {2, 1, 10}, {2, 2, 10}};
  EXPECT_FALSE(validate_decision({}, feas).has_value());
  EXPECT_FALSE(validate_decision({{{1, 1}, {2, 2}}}, feas).has_value());

  auto v = validate_decision({{{1, 1}, {2, 1}}}, feas);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::kDuplicateDriver);

  v = validate_decision({{{2, 1}, {2, 2}}}, feas);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::kDuplicateOrder);

  v = validate_decision({{{1, 2}}}, feas);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::kInfeasiblePair);
}

TEST(ValidateDecision, AdversarialPairSets) {
  auto g = rng::make_engine(77);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<FeasiblePair> feas;
    for (int i = 1; i <= 4; ++i) {
      for (int j = 1; j <= 4; ++j) {
        if (rng::bernoulli(g, 0.5)) feas.push_back({i, j, 0});
      }
    }
    DispatchDecision d;
    const int k = static_cast<int>(rng::uniform_index(g, 6));
    for (int p = 0; p < k; ++p) {
      d.pairs.emplace_back(1 + rng::uniform_index(g, 4), 1 + rng::uniform_index(g, 4));
    }
    // Oracle.
    std::map<OrderId, int> oc;
    std::map<DriverId, int> dc;
    bool ok = true;
    for (auto [o, dr] : d.pairs) {
      ok &= ++oc[o] == 1;
      ok &= ++dc[dr] == 1;
      ok &= std::any_of(feas.begin(), feas.end(), [&](const FeasiblePair& f) { return f.order == o && f.driver == dr; });
    }
    EXPECT_EQ(!validate_decision(d, feas).has_value(), ok);
  }
}

TEST(DispatchWeights, Validation) {
  EXPECT_NO_THROW(DispatchWeights{}.validate());
  EXPECT_THROW((DispatchWeights{0.5, 0.5, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((DispatchWeights{1.2, -0.2, 0.0}.validate()), std::invalid_argument);
}

}  // namespace
}  // namespace oddr
