#include "oddr/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "oddr/assignment.hpp"

namespace oddr {

void DispatchWeights::validate() const {
  if (value_w < 0.0 || proximity_w < 0.0 || fairness_w < 0.0) {
    throw std::invalid_argument("dispatch weights must be non-negative");
  }
  if (std::abs(value_w + proximity_w + fairness_w - 1.0) > 1e-9) {
    throw std::invalid_argument("dispatch weights must sum to 1");
  }
}

namespace {

struct Graph {
  std::vector<OrderId> orders;    // ascending
  std::vector<DriverId> drivers;  // ascending
  struct Edge {
    std::size_t row;
    std::size_t col;
    double weight;
  };
  std::vector<Edge> edges;  // ascending (order id, driver id)
};

Graph build_graph(std::span<const WeightedPair> in) {
  std::map<std::pair<OrderId, DriverId>, double> uniq;
  for (const auto& e : in) {
    if (!(e.weight > 0.0)) continue;
    if (!std::isfinite(e.weight)) throw std::invalid_argument("edge weight must be finite");
    auto [it, inserted] = uniq.emplace(std::pair{e.order, e.driver}, e.weight);
    if (!inserted) it->second = std::max(it->second, e.weight);
  }
  Graph g;
  std::set<OrderId> os;
  std::set<DriverId> ds;
  for (const auto& [key, w] : uniq) {
    os.insert(key.first);
    ds.insert(key.second);
  }
  g.orders.assign(os.begin(), os.end());
  g.drivers.assign(ds.begin(), ds.end());
  for (const auto& [key, w] : uniq) {
    const auto r = std::lower_bound(g.orders.begin(), g.orders.end(), key.first) - g.orders.begin();
    const auto c = std::lower_bound(g.drivers.begin(), g.drivers.end(), key.second) - g.drivers.begin();
    g.edges.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), w});
  }
  return g;
}

// Best total over edges not touching blocked rows/cols and not banned.
double best_total(const Graph& g, const std::vector<char>& row_blocked, const std::vector<char>& col_blocked,
                  const std::vector<char>& banned) {
  std::vector<std::size_t> rows, cols;
  std::vector<int> row_slot(g.orders.size(), -1), col_slot(g.drivers.size(), -1);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& ed = g.edges[e];
    if (banned[e] || row_blocked[ed.row] || col_blocked[ed.col]) continue;
    if (row_slot[ed.row] < 0) {
      row_slot[ed.row] = static_cast<int>(rows.size());
      rows.push_back(ed.row);
    }
    if (col_slot[ed.col] < 0) {
      col_slot[ed.col] = static_cast<int>(cols.size());
      cols.push_back(ed.col);
    }
  }
  if (rows.empty()) return 0.0;
  std::vector<double> w(rows.size() * cols.size(), 0.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& ed = g.edges[e];
    if (banned[e] || row_blocked[ed.row] || col_blocked[ed.col]) continue;
    w[row_slot[ed.row] * cols.size() + col_slot[ed.col]] = ed.weight;
  }
  const auto a = max_weight_assignment<double>(rows.size(), cols.size(),
                                               [&](std::size_t i, std::size_t j) { return w[i * cols.size() + j]; });
  return a.total;
}

}  // namespace

DispatchDecision km_dispatch(std::span<const WeightedPair> edges) {
  const Graph g = build_graph(edges);
  DispatchDecision out;
  if (g.edges.empty()) return out;

  std::vector<char> row_blocked(g.orders.size(), 0), col_blocked(g.drivers.size(), 0);
  std::vector<char> banned(g.edges.size(), 0);
  const double optimum = best_total(g, row_blocked, col_blocked, banned);
  const double eps = 1e-9 * std::max(1.0, std::abs(optimum));

  // Walk edges in lexicographic order, keeping each one that still admits an
  // optimal completion and banning the rest.
  double fixed = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& ed = g.edges[e];
    if (row_blocked[ed.row] || col_blocked[ed.col]) continue;
    row_blocked[ed.row] = col_blocked[ed.col] = 1;
    const double with = fixed + ed.weight + best_total(g, row_blocked, col_blocked, banned);
    if (with >= optimum - eps) {
      fixed += ed.weight;
      out.pairs.emplace_back(g.orders[ed.row], g.drivers[ed.col]);
    } else {
      row_blocked[ed.row] = col_blocked[ed.col] = 0;
      banned[e] = 1;
    }
  }
  return out;
}

double decision_weight(const DispatchDecision& d, std::span<const WeightedPair> edges) {
  std::map<std::pair<OrderId, DriverId>, double> w;
  for (const auto& e : edges) w[{e.order, e.driver}] = std::max(w[{e.order, e.driver}], e.weight);
  auto pairs = d.pairs;
  std::sort(pairs.begin(), pairs.end());
  double total = 0.0;
  for (const auto& p : pairs) {
    if (auto it = w.find(p); it != w.end()) total += it->second;
  }
  return total;
}

std::vector<double> driver_scores(const DispatchQuery& q) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& d : q.eligible) {
    lo = std::min(lo, d.cum_reward);
    hi = std::max(hi, d.cum_reward);
  }
  std::vector<double> out;
  out.reserve(q.eligible.size());
  for (const auto& d : q.eligible) {
    const double income = hi > lo ? (d.cum_reward - lo) / (hi - lo) : 0.5;
    out.push_back(q.weights.proximity_w * (1.0 - d.pickup_m / q.max_pickup_m) +
                  q.weights.fairness_w * (1.0 - income));
  }
  return out;
}

DriverId choose_driver_reference(const DispatchQuery& q) {
  if (q.eligible.empty()) throw std::invalid_argument("no eligible drivers");
  const auto scores = driver_scores(q);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && q.eligible[i].id < q.eligible[best].id)) {
      best = i;
    }
  }
  return q.eligible[best].id;
}

DispatchOutcome fairness_dispatch(std::span<const OrderSnapshot> orders, const ValueMap& values,
                                  std::span<const Driver> drivers, std::span<const FeasiblePair> feasible,
                                  const DispatchWeights& weights, double max_pickup_m, DriverChooser* chooser) {
  weights.validate();
  DispatchOutcome out;

  std::vector<const OrderSnapshot*> queue;
  for (const auto& o : orders) queue.push_back(&o);
  std::sort(queue.begin(), queue.end(), [&](const OrderSnapshot* a, const OrderSnapshot* b) {
    const double va = values.at(a->id);
    const double vb = values.at(b->id);
    if (va != vb) return va > vb;
    return a->id < b->id;
  });

  std::map<DriverId, const Driver*> by_id;
  for (const auto& d : drivers) by_id[d.id] = &d;
  std::map<OrderId, std::vector<const FeasiblePair*>> by_order;
  for (const auto& p : feasible) by_order[p.order].push_back(&p);

  std::set<DriverId> taken;
  for (const OrderSnapshot* o : queue) {
    auto it = by_order.find(o->id);
    if (it == by_order.end()) continue;
    std::vector<EligibleDriver> eligible;
    for (const FeasiblePair* p : it->second) {
      if (taken.contains(p->driver)) continue;
      auto d = by_id.find(p->driver);
      if (d == by_id.end() || !d->second->idle()) continue;
      const Driver& dr = *d->second;
      eligible.push_back({dr.id, p->pickup_m, dr.cum_reward, dr.finished_orders, dr.idle_time, dr.loc.region});
    }
    if (eligible.empty()) continue;
    std::sort(eligible.begin(), eligible.end(),
              [](const EligibleDriver& a, const EligibleDriver& b) { return a.id < b.id; });

    const DispatchQuery q{*o, values.at(o->id), eligible, weights, max_pickup_m};
    auto is_eligible = [&](DriverId id) {
      return std::any_of(eligible.begin(), eligible.end(), [&](const EligibleDriver& e) { return e.id == id; });
    };

    std::optional<DriverId> pick;
    if (chooser != nullptr) {
      std::string correction;
      for (int attempt = 0; attempt < 2 && !pick; ++attempt) {
        try {
          const DriverId id = chooser->choose(q, correction);
          if (is_eligible(id)) {
            pick = id;
          } else {
            correction = "driver " + std::to_string(id) + " is not in the eligible list; answer with one of the listed driver ids";
          }
        } catch (const BackendError& e) {
          correction = std::string("the previous answer could not be used: ") + e.what();
        }
      }
      if (pick && !correction.empty()) {
        out.events.push_back("dispatch: order " + std::to_string(o->id) + ": backend '" + std::string(chooser->name()) +
                             "' answered on retry (" + correction + ")");
      }
      if (!pick) {
        out.events.push_back("dispatch: order " + std::to_string(o->id) + ": backend '" +
                             std::string(chooser->name()) + "' failed twice (" + correction +
                             "); used reference choice");
      }
    }
    if (!pick) pick = choose_driver_reference(q);

    taken.insert(*pick);
    out.decision.pairs.emplace_back(o->id, *pick);
  }
  out.decision.normalize();
  return out;
}

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::kDuplicateOrder: return "order assigned more than once";
    case ViolationKind::kDuplicateDriver: return "driver assigned more than once";
    case ViolationKind::kInfeasiblePair: return "pair not in the feasible set";
  }
  return "unknown";
}

std::optional<Violation> validate_decision(const DispatchDecision& d, std::span<const FeasiblePair> feasible) {
  std::set<std::pair<OrderId, DriverId>> allowed;
  for (const auto& p : feasible) allowed.emplace(p.order, p.driver);
  std::set<OrderId> orders;
  std::set<DriverId> drivers;
  for (const auto& [o, dr] : d.pairs) {
    auto make = [&](ViolationKind k) {
      return Violation{k, o, dr,
                       std::string(to_string(k)) + " (order " + std::to_string(o) + ", driver " +
                           std::to_string(dr) + ")"};
    };
    if (!orders.insert(o).second) return make(ViolationKind::kDuplicateOrder);
    if (!drivers.insert(dr).second) return make(ViolationKind::kDuplicateDriver);
    if (!allowed.contains({o, dr})) return make(ViolationKind::kInfeasiblePair);
  }
  return std::nullopt;
}

}  // namespace oddr
