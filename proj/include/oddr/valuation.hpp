#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "oddr/domain.hpp"

namespace oddr {

/// Weights and loop limits for order valuation. The three weights cover
/// reward (higher is better), destination future value (higher is better)
/// and accumulated waiting (shorter is better); they must sum to 1.
struct ScorerConstraints {
  double reward_weight = 0.5;
  double future_weight = 0.3;
  double wait_weight = 0.2;
  int window_min = 60;
  int k_max = 3;

  void validate() const;  // throws std::invalid_argument
};

/// Read-only view of one order as the valuation stage sees it.
struct OrderSnapshot {
  OrderId id = 0;
  int request_tick = 0;
  RegionId origin;
  RegionId dest;
  double reward = 0.0;
  double trip_distance_m = 0.0;
  int trip_time_min = 1;
  int max_wait_min = 2;
  int waited = 0;
  int future_value = 0;  // of the destination region
};

OrderSnapshot snapshot(const Order& o, int dest_future_value);

using ValueMap = std::map<OrderId, double>;

struct ReviewFlag {
  bool flagged = false;
  std::string feedback;

  friend bool operator==(const ReviewFlag&, const ReviewFlag&) = default;
};
using ReviewMap = std::map<OrderId, ReviewFlag>;

/// Prior value and reviewer feedback handed to the scorer on a re-score.
struct Rescore {
  double previous = 0.0;
  std::string feedback;
};
using RescoreMap = std::map<OrderId, Rescore>;

/// Destination-minus-origin request count for `region` over ticks
/// [max(0, tick - window), tick]. May be negative.
int future_value(const DemandLog& log, RegionId region, int tick, int window);
/// future_value for every region at once.
std::vector<int> future_values(const DemandLog& log, std::size_t region_count, int tick, int window);

/// Deterministic scorer: 100 * (a*norm(reward) + b*norm(future) + c*(1 - norm(waited)))
/// with per-batch min-max normalization (a constant attribute normalizes to
/// 0.5), rounded to cents.
ValueMap score_orders_reference(std::span<const OrderSnapshot> orders, const ScorerConstraints& c);

/// Flags an order when some other order dominates it on (reward, future
/// value, waiting) yet is valued more than `slack` below it.
ReviewMap review_orders_reference(std::span<const OrderSnapshot> orders, const ValueMap& values,
                                  double slack = 1.0);

/// Recoverable backend failure; the refinement loop falls back to the
/// reference backend when it sees one.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValuationBackend {
 public:
  virtual ~ValuationBackend() = default;
  virtual std::string_view name() const = 0;
  /// Values for every order in `batch`. `all` is the whole tick's batch; on
  /// re-scoring `batch` is the flagged subset and `prior` is non-null.
  virtual ValueMap score(std::span<const OrderSnapshot> batch, std::span<const OrderSnapshot> all,
                         const ScorerConstraints& c, const RescoreMap* prior) = 0;
  virtual ReviewMap review(std::span<const OrderSnapshot> all, const ValueMap& values) = 0;
};

class ReferenceValuation final : public ValuationBackend {
 public:
  std::string_view name() const override { return "reference"; }
  ValueMap score(std::span<const OrderSnapshot> batch, std::span<const OrderSnapshot> all,
                 const ScorerConstraints& c, const RescoreMap* prior) override;
  ReviewMap review(std::span<const OrderSnapshot> all, const ValueMap& values) override;
};

struct ValuationResult {
  ValueMap values;
  int iterations_used = 0;
  std::vector<ReviewMap> flags_history;  // one entry per iteration
  bool fell_back = false;
  std::vector<std::string> events;  // fallback notes for the decisions log
};

/// Score -> review -> re-score flagged orders, until the reviewer flags
/// nothing or k_max iterations have run. Unflagged values stay frozen.
ValuationResult refine_values(std::span<const OrderSnapshot> orders, const ScorerConstraints& c,
                              ValuationBackend& backend);

}  // namespace oddr
