#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "oddr/engine.hpp"

namespace oddr {

inline constexpr int kConfigVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run configuration file (JSON). Every section is optional and falls back
/// to the defaults; unknown keys are rejected.
///
///   {
///     "version": 1,
///     "scenario": "runs/small-100",
///     "policy": "reference" | "km" | "llm",
///     "seed": 42,
///     "horizon": null | ticks,
///     "reposition": null | bool,
///     "relocating_matchable": true,
///     "reset_fleet_daily": true,
///     "reposition_radius": 2,
///     "constants": {"speed_mps", "pickup_max_m", "wait_max_min", "idle_threshold_min", "tick_min"},
///     "scorer":    {"reward_weight", "future_weight", "wait_weight", "window_min", "k_max"},
///     "dispatch":  {"value_w", "proximity_w", "fairness_w"},
///     "windows":   {"history_min", "arrival_horizon_min", "future_value_min"},
///     "surge":     null | {"zone": [region ids], "hour", "multiplier"},
///     "world":     {"center_lat", "center_lon", "circumradius_m", "rings"}  (read by prepare)
///     "llm":       {"base_url", "model", "api_key_env", "timeout_s", "max_retries",
///                   "batch_size", "max_in_flight", "temperature", "backoff_initial_s"}
///   }
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);

RunConfig load_config(const std::filesystem::path& file);
void save_config(const std::filesystem::path& file, const RunConfig& c);

}  // namespace oddr
