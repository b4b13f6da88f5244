#include "oddr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "oddr/config.hpp"

namespace oddr {

std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::kReference: return "reference";
    case PolicyKind::kLlm: return "llm";
    case PolicyKind::kKm: return "km";
  }
  return "unknown";
}

PolicyKind parse_policy(std::string_view s) {
  if (s == "reference") return PolicyKind::kReference;
  if (s == "llm") return PolicyKind::kLlm;
  if (s == "km" || s == "km_baseline") return PolicyKind::kKm;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "' (expected reference, km or llm)");
}

void SimConstants::validate() const {
  if (!(speed_mps > 0.0)) throw std::invalid_argument("speed_mps must be positive");
  if (!(pickup_max_m > 0.0)) throw std::invalid_argument("pickup_max_m must be positive");
  if (wait_max_min <= 0) throw std::invalid_argument("wait_max_min must be positive");
  if (idle_threshold_min <= 0) throw std::invalid_argument("idle_threshold_min must be positive");
  if (tick_min != 1) throw std::invalid_argument("tick_min must be 1 (one tick is one minute)");
}

void RunConfig::validate() const {
  constants.validate();
  scorer.validate();
  dispatch.validate();
  if (horizon && *horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  if (reposition_radius < 0) throw std::invalid_argument("reposition_radius must be >= 0");
  if (windows.history_min < 0 || windows.arrival_horizon_min < 0 || windows.future_value_min < 0) {
    throw std::invalid_argument("feature windows must be >= 0");
  }
  if (surge) {
    if (surge->hour < 0 || surge->hour > 23) throw std::invalid_argument("surge.hour must be in 0..23");
    if (!(surge->multiplier >= 1.0)) throw std::invalid_argument("surge.multiplier must be >= 1");
  }
  if (policy == PolicyKind::kLlm) llm.validate();
}

// -- simulator ------------------------------------------------------------

Simulator::Simulator(const HexWorld& world, RunConfig config, std::vector<Order> stream, std::vector<Driver> fleet,
                     Policies policies)
    : world_(world), config_(std::move(config)), policies_(policies), stream_(std::move(stream)) {
  config_.validate();
  std::stable_sort(stream_.begin(), stream_.end(), [](const Order& a, const Order& b) {
    return a.request_tick != b.request_tick ? a.request_tick < b.request_tick : a.id < b.id;
  });
  int days = 1;
  if (!stream_.empty()) days = std::max(1, stream_.back().request_tick / kMinutesPerDay + 1);
  horizon_ = config_.horizon.value_or(days * kMinutesPerDay);

  for (auto& d : fleet) {
    if (!d.loc.region.valid() || static_cast<std::size_t>(d.loc.region.index) >= world_.region_count()) {
      throw std::invalid_argument("driver " + std::to_string(d.id) + " is outside the world");
    }
    d.status = DriverStatus::kIdle;
    d.target.reset();
    d.busy_until.reset();
    d.current_order.reset();
  }
  initial_fleet_ = fleet;
  state_.drivers = std::move(fleet);
  state_.reindex_drivers();
  state_.rng_seed = config_.seed;
}

void Simulator::log(int t, const std::string& msg) { events_.push_back("tick " + std::to_string(t) + ": " + msg); }

void Simulator::reset_fleet() {
  int completed = 0;
  for (Driver& d : state_.drivers) {
    if (!d.idle()) {
      if (d.current_order) state_.order(*d.current_order).status = OrderStatus::kCompleted;
      ++d.finished_orders;
      ++completed;
    }
    const Driver& init = initial_fleet_[static_cast<std::size_t>(&d - state_.drivers.data())];
    d.loc = init.loc;
    d.target.reset();
    d.status = DriverStatus::kIdle;
    d.waited = 0;
    d.idle_time = 0;
    d.busy_until.reset();
    d.current_order.reset();
  }
  log(state_.tick, "day boundary: fleet reset to initial positions (" + std::to_string(completed) +
                       " in-flight trips completed)");
}

void Simulator::inject(int t) {
  while (cursor_ < stream_.size() && stream_[cursor_].request_tick <= t) {
    Order o = stream_[cursor_++];
    o.status = OrderStatus::kPending;
    o.waited = 0;
    o.max_wait_min = config_.constants.wait_max_min;
    state_.inject(std::move(o));
  }
}

ValueMap Simulator::value_orders(int t, const std::vector<OrderSnapshot>& snaps, TickStats& stats) {
  ReferenceValuation reference;
  ValuationBackend& backend = policies_.valuation ? *policies_.valuation : reference;
  ValuationResult r = refine_values(snaps, config_.scorer, backend);
  stats.valuation_iterations = r.iterations_used;
  for (const auto& e : r.events) log(t, e);
  return r.values;
}

void Simulator::apply_matches(int t, const DispatchDecision& d, TickStats& stats) {
  std::map<std::pair<OrderId, DriverId>, double> pickup;
  for (const auto& p : last_feasible_) pickup[{p.order, p.driver}] = p.pickup_m;
  for (const auto& [oid, did] : d.pairs) {
    Order& o = state_.order(oid);
    Driver& dr = state_.driver(did);
    const double pm = pickup.at({oid, did});
    o.status = OrderStatus::kMatched;
    dr.status = DriverStatus::kOccupied;
    dr.busy_until = t + travel_minutes(pm, config_.constants.speed_mps) + o.trip_time_min;
    dr.target = o.dest;
    dr.current_order = oid;
    dr.cum_reward += o.reward;
    dr.waited = 0;
    state_.match_log[t].push_back({t, oid, did, pm, o.reward, o.origin.region, o.dest.region});
    ++stats.matched;
    stats.gmv += o.reward;
  }
}

void Simulator::reposition(int t, TickStats& stats) {
  last_over_idle_ = over_idle_drivers(state_, config_.constants.idle_threshold_min);
  if (last_over_idle_.empty()) return;
  auto features = compute_features(state_, world_.region_count(), t, config_.windows);
  RepositionOutcome out = reposition_all(state_, world_, config_.constants.idle_threshold_min, features,
                                         policies_.repositioner, config_.reposition_radius);
  for (const auto& e : out.events) log(t, e);

  for (DriverId id : last_over_idle_) {
    if (!out.decision.moves.contains(id)) {
      throw std::logic_error("over-idle driver " + std::to_string(id) + " received no reposition command");
    }
  }
  for (const auto& [id, region] : out.decision.moves) {
    Driver& d = state_.driver(id);
    if (hex_distance(world_.axial(d.loc.region), world_.axial(region)) > config_.reposition_radius) {
      throw std::logic_error("reposition target outside the neighborhood of driver " + std::to_string(id));
    }
    repositions_.push_back({t, id, d.loc.region, region});
    d.target = Place{world_.center(region), region};
    d.idle_time = 0;
    ++stats.repositioned;
  }
  last_reposition_ = std::move(out.decision);
}

void Simulator::move_drivers(int t) {
  const double step_m = config_.constants.speed_mps * 60.0 * config_.constants.tick_min;
  for (Driver& d : state_.drivers) {
    if (!d.idle()) {
      if (d.busy_until && *d.busy_until <= t + 1) {
        d.loc = *d.target;
        d.target.reset();
        d.status = DriverStatus::kIdle;
        d.busy_until.reset();
        if (d.current_order) state_.order(*d.current_order).status = OrderStatus::kCompleted;
        d.current_order.reset();
        ++d.finished_orders;
        d.idle_time = 0;
        d.waited = 0;
        idle_arrivals_.push_back({t, d.id, d.loc.region, false});
      } else {
        ++d.waited;
      }
      continue;
    }
    if (d.target) {
      const RegionId before = d.loc.region;
      const auto from = world_.project(d.loc.point);
      const auto to = world_.project(d.target->point);
      const double dx = to.x - from.x;
      const double dy = to.y - from.y;
      const double remaining = std::hypot(dx, dy);
      if (remaining <= step_m) {
        d.loc = *d.target;
        d.target.reset();
      } else {
        const double f = step_m / remaining;
        d.loc.point = world_.unproject({from.x + dx * f, from.y + dy * f});
        if (auto r = world_.locate(d.loc.point)) d.loc.region = *r;
      }
      if (d.loc.region != before) idle_arrivals_.push_back({t, d.id, d.loc.region, true});
    }
    ++d.idle_time;
    ++d.waited;
  }
}

void Simulator::age_orders(TickStats& stats) {
  for (OrderId id : state_.pending_orders()) {
    Order& o = state_.order(id);
    ++o.waited;
    if (o.waited > o.max_wait_min) {
      o.status = OrderStatus::kExpired;
      ++stats.expired;
    }
  }
  state_.prune_pending();
}

void Simulator::step() {
  if (done()) throw std::logic_error("step called past the horizon");
  const int t = state_.tick;
  state_.ensure_log(t);
  TickStats stats;
  stats.tick = t;

  if (config_.reset_fleet_daily && t > 0 && t % kMinutesPerDay == 0) reset_fleet();

  const std::size_t before = state_.orders.size();
  inject(t);
  stats.requests = static_cast<int>(state_.orders.size() - before);

  // Value and dispatch.
  last_feasible_ = feasible_pairs(state_, config_.constants.pickup_max_m, config_.relocating_matchable);
  last_dispatch_ = {};
  last_reposition_ = {};
  last_over_idle_.clear();
  if (!last_feasible_.empty()) {
    if (config_.policy == PolicyKind::kKm) {
      std::vector<WeightedPair> edges;
      edges.reserve(last_feasible_.size());
      for (const auto& p : last_feasible_) edges.push_back({p.order, p.driver, state_.order(p.order).reward});
      last_dispatch_ = km_dispatch(edges);
    } else {
      const auto fv = future_values(state_.demand_log, world_.region_count(), t, config_.scorer.window_min);
      std::vector<OrderSnapshot> snaps;
      for (OrderId id : state_.pending_orders()) {
        const Order& o = state_.order(id);
        snaps.push_back(snapshot(o, fv[o.dest.region.index]));
      }
      const ValueMap values = value_orders(t, snaps, stats);
      DispatchOutcome out = fairness_dispatch(snaps, values, state_.drivers, last_feasible_, config_.dispatch,
                                              config_.constants.pickup_max_m, policies_.dispatcher);
      for (const auto& e : out.events) log(t, e);
      last_dispatch_ = std::move(out.decision);
    }
    if (auto v = validate_decision(last_dispatch_, last_feasible_)) {
      throw std::logic_error("dispatch decision rejected: " + v->message);
    }
  }
  apply_matches(t, last_dispatch_, stats);

  if (config_.reposition_enabled()) reposition(t, stats);
  move_drivers(t);
  age_orders(stats);

  stats.idle_drivers = static_cast<int>(std::count_if(state_.drivers.begin(), state_.drivers.end(),
                                                      [](const Driver& d) { return d.idle(); }));
  ticks_.push_back(stats);
  ++state_.tick;
}

// -- metrics --------------------------------------------------------------

std::vector<WindowMetrics> default_windows() {
  return {{"morning", 7 * 60, 10 * 60}, {"noon", 11 * 60, 14 * 60}, {"evening", 17 * 60, 20 * 60}};
}

double gini(std::span<const double> incomes) {
  for (double x : incomes) {
    if (!(x >= 0.0)) throw std::invalid_argument("gini needs non-negative incomes");
  }
  const std::size_t n = incomes.size();
  if (n <= 1) return 0.0;
  std::vector<double> x(incomes.begin(), incomes.end());
  std::sort(x.begin(), x.end());
  const double sum = std::accumulate(x.begin(), x.end(), 0.0);
  if (sum == 0.0) return 0.0;
  // sum_i sum_j |x_i - x_j| = 2 * sum_i (2i - n - 1) x_(i), i 1-based over the sorted values.
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += (2.0 * static_cast<double>(i + 1) - static_cast<double>(n) - 1.0) * x[i];
  }
  return acc / (static_cast<double>(n) * sum);
}

namespace {

bool is_matched(OrderStatus s) { return s == OrderStatus::kMatched || s == OrderStatus::kCompleted; }

double ratio(int num, int den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

}  // namespace

RunMetrics compute_metrics(const SimState& state, int days) {
  RunMetrics m;
  m.windows = default_windows();
  std::map<OrderId, double> matched_reward;
  for (const auto& tick : state.match_log) {
    for (const auto& rec : tick) {
      m.gmv += rec.reward;
      matched_reward[rec.order] = rec.reward;
    }
  }

  int max_day = std::max(0, days - 1);
  for (const Order& o : state.orders) max_day = std::max(max_day, o.request_tick / kMinutesPerDay);
  m.days.resize(static_cast<std::size_t>(max_day) + 1);
  for (std::size_t d = 0; d < m.days.size(); ++d) m.days[d].day = static_cast<int>(d);

  for (const Order& o : state.orders) {
    ++m.total;
    const bool matched = is_matched(o.status);
    if (matched) ++m.matched;
    if (o.status == OrderStatus::kExpired) ++m.expired;
    if (o.status == OrderStatus::kPending) ++m.pending;

    const auto it = matched_reward.find(o.id);
    const double reward = it == matched_reward.end() ? 0.0 : it->second;
    const int mod = minute_of_day(o.request_tick);
    for (auto& w : m.windows) {
      if (mod < w.start_min || mod >= w.end_min) continue;
      ++w.total;
      if (matched) {
        ++w.matched;
        w.gmv += reward;
      }
    }
    auto& day = m.days[static_cast<std::size_t>(std::max(0, o.request_tick / kMinutesPerDay))];
    ++day.total;
    if (matched) {
      ++day.matched;
      day.gmv += reward;
    }
    if (o.status == OrderStatus::kExpired) ++day.expired;
  }
  m.orr = ratio(m.matched, m.total);
  for (auto& w : m.windows) w.orr = ratio(w.matched, w.total);
  for (auto& d : m.days) d.orr = ratio(d.matched, d.total);

  for (const Driver& d : state.drivers) {
    m.driver_ids.push_back(d.id);
    m.incomes.push_back(d.cum_reward);
    m.finished.push_back(d.finished_orders);
  }
  if (!m.incomes.empty()) {
    const double n = static_cast<double>(m.incomes.size());
    m.income_mean = std::accumulate(m.incomes.begin(), m.incomes.end(), 0.0) / n;
    double var = 0.0;
    for (double x : m.incomes) var += (x - m.income_mean) * (x - m.income_mean);
    m.income_std = std::sqrt(var / n);
    m.gini = gini(m.incomes);
  }
  return m;
}

// -- runs -----------------------------------------------------------------

namespace {

std::vector<Order> effective_stream(const RunConfig& config, const Scenario& scenario) {
  if (!config.surge) return scenario.orders;
  return synthesize_surge(scenario.orders, *config.surge, config.seed);
}

RunResult collect(const Simulator& sim, int days) {
  RunResult r;
  r.metrics = compute_metrics(sim.state(), days);
  r.ticks = sim.ticks();
  for (const auto& tick : sim.state().match_log) r.matches.insert(r.matches.end(), tick.begin(), tick.end());
  r.events = sim.events();
  r.repositions = sim.repositions();
  r.idle_arrivals = sim.idle_arrivals();
  r.metrics.repositions = static_cast<int>(r.repositions.size());
  r.metrics.fallbacks =
      static_cast<int>(std::count_if(r.events.begin(), r.events.end(), [](const std::string& e) {
        return e.find("used reference") != std::string::npos || e.find("using reference") != std::string::npos;
      }));
  return r;
}

RunConfig resolved(RunConfig c, const Scenario& scenario) {
  if (!c.horizon) c.horizon = scenario.days * kMinutesPerDay;
  if (!c.reposition) c.reposition = c.reposition_enabled();
  return c;
}

}  // namespace

RunResult run(const RunConfig& config, const Scenario& scenario, Policies policies) {
  const HexWorld world(scenario.world);
  Simulator sim(world, resolved(config, scenario), effective_stream(config, scenario), scenario.fleet, policies);
  while (!sim.done()) sim.step();
  return collect(sim, scenario.days);
}

RunResult run(const RunConfig& config, const Scenario& scenario, const std::filesystem::path& out_dir) {
  const RunConfig cfg = resolved(config, scenario);
  cfg.validate();

  llm::EventSink sink;
  std::unique_ptr<llm::HttpChatClient> client;
  std::unique_ptr<llm::LlmValuation> valuation;
  std::unique_ptr<llm::LlmDispatcher> dispatcher;
  std::unique_ptr<llm::LlmRepositioner> repositioner;
  Policies policies;
  if (cfg.policy == PolicyKind::kLlm) {
    client = std::make_unique<llm::HttpChatClient>(cfg.llm, llm::api_key_from_env(cfg.llm), &sink);
    valuation = std::make_unique<llm::LlmValuation>(*client, cfg.llm, &sink);
    dispatcher = std::make_unique<llm::LlmDispatcher>(*client);
    repositioner = std::make_unique<llm::LlmRepositioner>(*client, cfg.windows);
    policies = {valuation.get(), dispatcher.get(), repositioner.get()};
  }

  const HexWorld world(scenario.world);
  Simulator sim(world, cfg, effective_stream(cfg, scenario), scenario.fleet, policies);
  // Retry notes are stamped with the tick that produced them.
  auto flush_notes = [&](int t) {
    for (auto& n : sink.drain()) sim.note_at(t, n);
  };
  try {
    while (!sim.done()) {
      const int t = sim.state().tick;
      sim.step();
      flush_notes(t);
    }
  } catch (const std::exception& e) {
    flush_notes(sim.state().tick);
    RunResult partial = collect(sim, scenario.days);
    partial.aborted = true;
    partial.abort_reason = e.what();
    partial.events.push_back("tick " + std::to_string(sim.state().tick) + ": run aborted: " + e.what());
    write_artifacts(out_dir, cfg, scenario, partial);
    throw;
  }
  RunResult r = collect(sim, scenario.days);
  write_artifacts(out_dir, cfg, scenario, r);
  return r;
}

// -- artifacts ------------------------------------------------------------

namespace {

double cents(double v) { return std::round(v * 100.0) / 100.0; }

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string clock(int minute) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minute / 60, minute % 60);
  return buf;
}

void write_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace

void write_artifacts(const std::filesystem::path& dir, const RunConfig& config, const Scenario& scenario,
                     const RunResult& r) {
  std::filesystem::create_directories(dir);
  const RunMetrics& m = r.metrics;

  nlohmann::ordered_json report;
  report["format"] = "oddr-report";
  report["version"] = kReportVersion;
  report["status"] = r.aborted ? "aborted" : "complete";
  if (r.aborted) report["abort_reason"] = r.abort_reason;
  report["policy"] = std::string(to_string(config.policy));
  report["scenario"] = {{"day0", scenario.day0},
                        {"days", scenario.days},
                        {"orders", scenario.orders.size()},
                        {"drivers", scenario.fleet.size()},
                        {"world",
                         {{"center_lat", scenario.world.center.lat},
                          {"center_lon", scenario.world.center.lon},
                          {"circumradius_m", scenario.world.circumradius_m},
                          {"rings", scenario.world.rings}}}};
  report["config"] = config_to_json(config);
  report["overall"] = {{"gmv", cents(m.gmv)}, {"orr", m.orr},         {"matched", m.matched},
                       {"expired", m.expired}, {"pending", m.pending}, {"total", m.total}};
  auto windows = nlohmann::ordered_json::array();
  for (const auto& w : m.windows) {
    windows.push_back({{"name", w.name},
                       {"start", clock(w.start_min)},
                       {"end", clock(w.end_min)},
                       {"gmv", cents(w.gmv)},
                       {"orr", w.orr},
                       {"matched", w.matched},
                       {"total", w.total}});
  }
  report["windows"] = windows;
  auto days = nlohmann::ordered_json::array();
  for (const auto& d : m.days) {
    days.push_back({{"day", d.day},
                    {"gmv", cents(d.gmv)},
                    {"orr", d.orr},
                    {"matched", d.matched},
                    {"expired", d.expired},
                    {"total", d.total}});
  }
  report["days"] = days;
  double lo = 0.0, hi = 0.0;
  if (!m.incomes.empty()) {
    lo = *std::min_element(m.incomes.begin(), m.incomes.end());
    hi = *std::max_element(m.incomes.begin(), m.incomes.end());
  }
  report["fairness"] = {{"income_mean", cents(m.income_mean)},
                        {"income_std", cents(m.income_std)},
                        {"income_min", cents(lo)},
                        {"income_max", cents(hi)},
                        {"gini", m.gini}};
  report["repositions"] = m.repositions;
  report["fallbacks"] = m.fallbacks;
  write_file(dir / "report.json", report.dump(2) + "\n");

  std::string ticks = "tick,requests,matched,expired,repositioned,idle_drivers,gmv,valuation_iterations\n";
  for (const auto& t : r.ticks) {
    ticks += std::to_string(t.tick) + "," + std::to_string(t.requests) + "," + std::to_string(t.matched) + "," +
             std::to_string(t.expired) + "," + std::to_string(t.repositioned) + "," +
             std::to_string(t.idle_drivers) + "," + fmt(t.gmv, 2) + "," + std::to_string(t.valuation_iterations) +
             "\n";
  }
  write_file(dir / "ticks.csv", ticks);

  std::string incomes = "driver_id,cum_reward,finished_orders\n";
  for (std::size_t i = 0; i < m.driver_ids.size(); ++i) {
    incomes += std::to_string(m.driver_ids[i]) + "," + fmt(m.incomes[i], 2) + "," + std::to_string(m.finished[i]) +
               "\n";
  }
  write_file(dir / "incomes.csv", incomes);

  std::string matches = "tick,order_id,driver_id,pickup_m,reward\n";
  for (const auto& x : r.matches) {
    matches += std::to_string(x.tick) + "," + std::to_string(x.order) + "," + std::to_string(x.driver) + "," +
               fmt(x.pickup_m, 1) + "," + fmt(x.reward, 2) + "\n";
  }
  write_file(dir / "matches.csv", matches);

  std::string log;
  for (const auto& e : r.events) log += e + "\n";
  write_file(dir / "decisions.log", log);
}

}  // namespace oddr
