#include "oddr/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace oddr {

namespace {

struct MinMax {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double norm(double v) const { return hi > lo ? (v - lo) / (hi - lo) : 0.5; }
};

double round_cents(double v) { return std::round(v * 100.0) / 100.0; }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

ReferenceValuation& reference_backend() {
  static ReferenceValuation ref;
  return ref;
}

}  // namespace

void ScorerConstraints::validate() const {
  if (reward_weight < 0.0 || future_weight < 0.0 || wait_weight < 0.0) {
    throw std::invalid_argument("scorer weights must be non-negative");
  }
  if (std::abs(reward_weight + future_weight + wait_weight - 1.0) > 1e-9) {
    throw std::invalid_argument("scorer weights must sum to 1");
  }
  if (window_min < 0) throw std::invalid_argument("future-value window must be non-negative");
  if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
}

OrderSnapshot snapshot(const Order& o, int dest_future_value) {
  OrderSnapshot s;
  s.id = o.id;
  s.request_tick = o.request_tick;
  s.origin = o.origin.region;
  s.dest = o.dest.region;
  s.reward = o.reward;
  s.trip_distance_m = o.trip_distance_m;
  s.trip_time_min = o.trip_time_min;
  s.max_wait_min = o.max_wait_min;
  s.waited = o.waited;
  s.future_value = dest_future_value;
  return s;
}

int future_value(const DemandLog& log, RegionId region, int tick, int window) {
  if (tick < 0 || log.empty()) return 0;
  const int hi = std::min<int>(tick, static_cast<int>(log.size()) - 1);
  const int lo = std::max(0, tick - window);
  int arrivals = 0;
  int departures = 0;
  for (int t = lo; t <= hi; ++t) {
    for (const RequestRecord& r : log[t]) {
      if (r.dest == region) ++arrivals;
      if (r.origin == region) ++departures;
    }
  }
  return arrivals - departures;
}

std::vector<int> future_values(const DemandLog& log, std::size_t region_count, int tick, int window) {
  std::vector<int> out(region_count, 0);
  if (tick < 0 || log.empty()) return out;
  const int hi = std::min<int>(tick, static_cast<int>(log.size()) - 1);
  const int lo = std::max(0, tick - window);
  for (int t = lo; t <= hi; ++t) {
    for (const RequestRecord& r : log[t]) {
      if (r.dest.valid() && static_cast<std::size_t>(r.dest.index) < region_count) ++out[r.dest.index];
      if (r.origin.valid() && static_cast<std::size_t>(r.origin.index) < region_count) --out[r.origin.index];
    }
  }
  return out;
}

ValueMap score_orders_reference(std::span<const OrderSnapshot> orders, const ScorerConstraints& c) {
  MinMax reward, future, waited;
  for (const auto& o : orders) {
    reward.add(o.reward);
    future.add(o.future_value);
    waited.add(o.waited);
  }
  ValueMap out;
  for (const auto& o : orders) {
    const double v = 100.0 * (c.reward_weight * reward.norm(o.reward) +
                              c.future_weight * future.norm(o.future_value) +
                              c.wait_weight * (1.0 - waited.norm(o.waited)));
    out[o.id] = round_cents(std::clamp(v, 0.0, 100.0));
  }
  return out;
}

ReviewMap review_orders_reference(std::span<const OrderSnapshot> orders, const ValueMap& values,
                                  double slack) {
  ReviewMap out;
  for (const auto& i : orders) {
    ReviewFlag flag;
    const double vi = values.at(i.id);
    for (const auto& j : orders) {
      if (j.id == i.id) continue;
      const bool weakly = j.reward >= i.reward && j.future_value >= i.future_value && j.waited <= i.waited;
      const bool strictly = j.reward > i.reward || j.future_value > i.future_value || j.waited < i.waited;
      if (!weakly || !strictly) continue;
      const double vj = values.at(j.id);
      if (vj < vi - slack) {
        flag.flagged = true;
        flag.feedback = "order " + std::to_string(i.id) + " is dominated by order " + std::to_string(j.id) +
                        " on reward, destination value and waiting time, yet is valued " + fmt2(vi) +
                        " against " + fmt2(vj) + "; lower it below the dominating order";
        break;
      }
    }
    out[i.id] = std::move(flag);
  }
  return out;
}

ValueMap ReferenceValuation::score(std::span<const OrderSnapshot> batch, std::span<const OrderSnapshot> all,
                                   const ScorerConstraints& c, const RescoreMap* /*prior*/) {
  // The reference scorer is a function of the whole batch; feedback cannot
  // improve on it, so a re-score simply restates the batch-consistent value.
  const ValueMap full = score_orders_reference(all, c);
  ValueMap out;
  for (const auto& o : batch) out[o.id] = full.at(o.id);
  return out;
}

ReviewMap ReferenceValuation::review(std::span<const OrderSnapshot> all, const ValueMap& values) {
  return review_orders_reference(all, values);
}

ValuationResult refine_values(std::span<const OrderSnapshot> orders, const ScorerConstraints& c,
                              ValuationBackend& backend) {
  c.validate();
  ValuationResult result;
  if (orders.empty()) return result;

  ValuationBackend* active = &backend;
  auto fall_back = [&](const char* stage, const std::exception& e) {
    result.fell_back = true;
    result.events.push_back(std::string("valuation ") + stage + ": backend '" + std::string(active->name()) +
                            "' failed (" + e.what() + "); using reference for the rest of the batch");
    active = &reference_backend();
  };
  auto check_scores = [](const ValueMap& got, std::span<const OrderSnapshot> batch) {
    for (const auto& o : batch) {
      auto it = got.find(o.id);
      if (it == got.end()) throw BackendError("no value for order " + std::to_string(o.id));
      if (!(it->second >= 0.0 && it->second <= 100.0)) {
        throw BackendError("value out of range for order " + std::to_string(o.id));
      }
    }
  };
  auto score = [&](std::span<const OrderSnapshot> batch, const RescoreMap* prior) {
    if (active != &reference_backend()) {
      try {
        ValueMap got = active->score(batch, orders, c, prior);
        check_scores(got, batch);
        return got;
      } catch (const BackendError& e) {
        fall_back("scorer", e);
      }
    }
    return active->score(batch, orders, c, prior);
  };
  auto review = [&](const ValueMap& values) {
    if (active != &reference_backend()) {
      try {
        ReviewMap got = active->review(orders, values);
        for (const auto& o : orders) {
          if (!got.contains(o.id)) throw BackendError("no review for order " + std::to_string(o.id));
        }
        return got;
      } catch (const BackendError& e) {
        fall_back("reviewer", e);
      }
    }
    return active->review(orders, values);
  };

  ValueMap values = score(orders, nullptr);
  for (const auto& o : orders) result.values[o.id] = values.at(o.id);

  for (int k = 0; k < c.k_max; ++k) {
    ReviewMap flags = review(result.values);
    result.iterations_used = k + 1;
    std::vector<OrderSnapshot> flagged;
    RescoreMap prior;
    for (const auto& o : orders) {
      const ReviewFlag& f = flags.at(o.id);
      if (f.flagged) {
        flagged.push_back(o);
        prior[o.id] = {result.values.at(o.id), f.feedback};
      }
    }
    result.flags_history.push_back(std::move(flags));
    if (flagged.empty() || k + 1 == c.k_max) break;

    const ValueMap rescored = score(flagged, &prior);
    for (const auto& o : flagged) result.values[o.id] = rescored.at(o.id);
  }
  return result;
}

}  // namespace oddr
