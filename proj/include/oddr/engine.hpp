#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oddr/dispatch.hpp"
#include "oddr/domain.hpp"
#include "oddr/ingest.hpp"
#include "oddr/llm.hpp"
#include "oddr/reposition.hpp"
#include "oddr/valuation.hpp"
#include "oddr/world.hpp"

namespace oddr {

enum class PolicyKind { kReference, kLlm, kKm };
std::string_view to_string(PolicyKind p);
PolicyKind parse_policy(std::string_view s);  // "reference" | "llm" | "km"; throws std::invalid_argument

struct SimConstants {
  double speed_mps = 6.33;
  double pickup_max_m = 950.0;
  int wait_max_min = 2;
  int idle_threshold_min = 5;
  int tick_min = 1;

  void validate() const;
};

struct RunConfig {
  std::string scenario;  // scenario cache directory
  std::optional<SurgeSpec> surge;
  PolicyKind policy = PolicyKind::kReference;
  ScorerConstraints scorer;
  DispatchWeights dispatch;
  SimConstants constants;
  FeatureWindows windows;
  std::optional<int> horizon;       // ticks; defaults to the scenario's days * 1440
  std::optional<bool> reposition;   // defaults to on except for km
  bool relocating_matchable = true;
  bool reset_fleet_daily = true;
  int reposition_radius = 2;
  std::uint64_t seed = 42;
  llm::EndpointConfig llm;

  bool reposition_enabled() const { return reposition.value_or(policy != PolicyKind::kKm); }
  void validate() const;
};

/// Decision backends for one run. Null members select the reference backend.
struct Policies {
  ValuationBackend* valuation = nullptr;
  DriverChooser* dispatcher = nullptr;
  RegionChooser* repositioner = nullptr;
};

struct TickStats {
  int tick = 0;
  int requests = 0;
  int matched = 0;
  int expired = 0;
  int repositioned = 0;
  int idle_drivers = 0;
  double gmv = 0.0;
  int valuation_iterations = 0;
};

struct RepositionRecord {
  int tick = 0;
  DriverId driver = 0;
  RegionId from;
  RegionId to;
};

/// An idle driver showing up in a region: a completed trip or a relocation step.
struct IdleArrival {
  int tick = 0;
  DriverId driver = 0;
  RegionId region;
  bool relocating = false;
};

class Simulator {
 public:
  Simulator(const HexWorld& world, RunConfig config, std::vector<Order> stream, std::vector<Driver> fleet,
            Policies policies = {});

  /// One tick. Throws std::logic_error if a decision breaks a constraint;
  /// backend errors that are not recoverable propagate unchanged.
  void step();
  bool done() const { return state_.tick >= horizon_; }
  /// Appends a note to the decisions log.
  void note_at(int tick, const std::string& msg) { log(tick, msg); }
  int horizon() const { return horizon_; }

  const SimState& state() const { return state_; }
  const RunConfig& config() const { return config_; }
  const std::vector<TickStats>& ticks() const { return ticks_; }
  const std::vector<std::string>& events() const { return events_; }
  const std::vector<RepositionRecord>& repositions() const { return repositions_; }
  const std::vector<IdleArrival>& idle_arrivals() const { return idle_arrivals_; }

  /// Feasible pairs and decisions of the last completed tick.
  const std::vector<FeasiblePair>& last_feasible() const { return last_feasible_; }
  const DispatchDecision& last_dispatch() const { return last_dispatch_; }
  const RepositionDecision& last_reposition() const { return last_reposition_; }
  /// Drivers that were over the idle threshold when the last tick repositioned.
  const std::vector<DriverId>& last_over_idle() const { return last_over_idle_; }

 private:
  void reset_fleet();
  void inject(int t);
  ValueMap value_orders(int t, const std::vector<OrderSnapshot>& snaps, TickStats& stats);
  void apply_matches(int t, const DispatchDecision& d, TickStats& stats);
  void reposition(int t, TickStats& stats);
  void move_drivers(int t);
  void age_orders(TickStats& stats);
  void log(int t, const std::string& msg);

  const HexWorld& world_;
  RunConfig config_;
  Policies policies_;
  std::vector<Order> stream_;
  std::size_t cursor_ = 0;
  std::vector<Driver> initial_fleet_;
  SimState state_;
  int horizon_ = 0;

  std::vector<TickStats> ticks_;
  std::vector<std::string> events_;
  std::vector<RepositionRecord> repositions_;
  std::vector<IdleArrival> idle_arrivals_;
  std::vector<FeasiblePair> last_feasible_;
  DispatchDecision last_dispatch_;
  RepositionDecision last_reposition_;
  std::vector<DriverId> last_over_idle_;
};

struct WindowMetrics {
  std::string name;
  int start_min = 0;  // minute of day, inclusive
  int end_min = 0;    // exclusive
  double gmv = 0.0;
  double orr = 0.0;
  int matched = 0;
  int total = 0;
};

struct DayMetrics {
  int day = 0;
  double gmv = 0.0;
  double orr = 0.0;
  int matched = 0;
  int expired = 0;
  int total = 0;
};

struct RunMetrics {
  double gmv = 0.0;
  double orr = 0.0;
  int matched = 0;
  int expired = 0;
  int pending = 0;  // still pending at the horizon
  int total = 0;
  std::vector<WindowMetrics> windows;  // morning, noon, evening
  std::vector<DayMetrics> days;
  std::vector<DriverId> driver_ids;
  std::vector<double> incomes;  // cum_reward, parallel to driver_ids
  std::vector<int> finished;    // finished_orders, parallel to driver_ids
  double income_mean = 0.0;
  double income_std = 0.0;  // population standard deviation
  double gini = 0.0;
  int repositions = 0;
  int fallbacks = 0;  // decisions taken by the reference backend after a failure
};

/// Morning 07:00-10:00, noon 11:00-14:00, evening 17:00-20:00.
std::vector<WindowMetrics> default_windows();

/// Mean absolute difference over all ordered pairs divided by twice the
/// mean; 0 when n <= 1 or the mean is 0. Throws on a negative income.
double gini(std::span<const double> incomes);

/// Metrics of a (possibly hand-built) state. Matched counts include
/// completed orders; GMV is summed over the match log.
RunMetrics compute_metrics(const SimState& state, int days = 1);

struct RunResult {
  RunMetrics metrics;
  std::vector<TickStats> ticks;
  std::vector<MatchRecord> matches;
  std::vector<std::string> events;
  std::vector<RepositionRecord> repositions;
  std::vector<IdleArrival> idle_arrivals;
  bool aborted = false;
  std::string abort_reason;
};

/// Runs the scenario to the horizon with the given backends (the surge, if
/// configured, is applied to the order stream first).
RunResult run(const RunConfig& config, const Scenario& scenario, Policies policies = {});

/// Builds backends from the config: reference backends, or LLM backends on
/// an HTTP client reading the key from the configured environment variable.
/// Throws llm::AuthError before any tick when the key is missing.
RunResult run(const RunConfig& config, const Scenario& scenario, const std::filesystem::path& out_dir);

inline constexpr int kReportVersion = 1;

/// report.json, ticks.csv, incomes.csv, matches.csv and decisions.log.
void write_artifacts(const std::filesystem::path& dir, const RunConfig& config, const Scenario& scenario,
                     const RunResult& result);

}  // namespace oddr
