#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oddr/domain.hpp"
#include "oddr/valuation.hpp"

namespace oddr {

/// Relative weight of order value, pickup proximity and income fairness in
/// the per-order driver choice. Non-negative, summing to 1.
struct DispatchWeights {
  double value_w = 0.5;
  double proximity_w = 0.3;
  double fairness_w = 0.2;

  void validate() const;
};

struct WeightedPair {
  OrderId order = 0;
  DriverId driver = 0;
  double weight = 0.0;
};

/// Maximum-total-weight matching over the given edges. Among optimal
/// matchings the lexicographically smallest (order id, driver id) sequence
/// wins. Zero-weight edges never change the optimum and are ignored.
DispatchDecision km_dispatch(std::span<const WeightedPair> edges);

/// Total weight of a decision under the given edges (missing pairs count 0).
double decision_weight(const DispatchDecision& d, std::span<const WeightedPair> edges);

struct EligibleDriver {
  DriverId id = 0;
  double pickup_m = 0.0;
  double cum_reward = 0.0;
  int finished_orders = 0;
  int idle_time = 0;
  RegionId region;
};

struct DispatchQuery {
  const OrderSnapshot& order;
  double value = 0.0;
  std::span<const EligibleDriver> eligible;  // ascending id, non-empty
  const DispatchWeights& weights;
  double max_pickup_m = 950.0;
};

/// proximity_w * (1 - pickup/max) + fairness_w * (1 - norm(cum_reward)),
/// with cum_reward min-max normalized over the eligible set (constant -> 0.5).
std::vector<double> driver_scores(const DispatchQuery& q);
/// Argmax of driver_scores, ties to the lower driver id.
DriverId choose_driver_reference(const DispatchQuery& q);

/// Pluggable per-order driver choice (e.g. a language-model policy).
class DriverChooser {
 public:
  virtual ~DriverChooser() = default;
  virtual std::string_view name() const = 0;
  /// `correction` is empty on the first attempt and explains the rejected
  /// answer on the retry. Throws BackendError on an unusable response.
  virtual DriverId choose(const DispatchQuery& q, std::string_view correction) = 0;
};

struct DispatchOutcome {
  DispatchDecision decision;
  std::vector<std::string> events;
};

/// Sequential greedy: orders in descending value (ties ascending id), each
/// takes one still-available eligible driver. Without a chooser, or when the
/// chooser fails twice, the reference argmax decides.
DispatchOutcome fairness_dispatch(std::span<const OrderSnapshot> orders, const ValueMap& values,
                                  std::span<const Driver> drivers, std::span<const FeasiblePair> feasible,
                                  const DispatchWeights& weights, double max_pickup_m,
                                  DriverChooser* chooser = nullptr);

enum class ViolationKind { kDuplicateOrder, kDuplicateDriver, kInfeasiblePair };
std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  OrderId order = 0;
  DriverId driver = 0;
  std::string message;
};

/// First violation of: each order at most once, each driver at most once,
/// every pair drawn from the feasible set.
std::optional<Violation> validate_decision(const DispatchDecision& d, std::span<const FeasiblePair> feasible);

}  // namespace oddr
