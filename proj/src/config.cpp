#include "oddr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace oddr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  reject_unknown(j, "config",
                 {"version", "scenario", "policy", "seed", "horizon", "reposition", "relocating_matchable",
                  "reset_fleet_daily", "reposition_radius", "constants", "scorer", "dispatch", "windows", "surge",
                  "llm", "world"});
  if (!j.contains("version")) throw ConfigError("config has no version field");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kConfigVersion) {
    throw ConfigError("unsupported config version " + j["version"].dump() + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }

  // The world is fixed when a scenario is prepared; runs only check the shape.
  if (auto it = j.find("world"); it != j.end() && !it->is_null()) {
    reject_unknown(*it, "world", {"center_lat", "center_lon", "circumradius_m", "rings"});
  }

  RunConfig c;
  read(j, "scenario", c.scenario, "config");
  if (auto it = j.find("policy"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ConfigError("config.policy must be a string");
    try {
      c.policy = parse_policy(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "seed", c.seed, "config");
  if (auto it = j.find("horizon"); it != j.end() && !it->is_null()) {
    int h = 0;
    read(j, "horizon", h, "config");
    c.horizon = h;
  }
  if (auto it = j.find("reposition"); it != j.end() && !it->is_null()) {
    bool r = true;
    read(j, "reposition", r, "config");
    c.reposition = r;
  }
  read(j, "relocating_matchable", c.relocating_matchable, "config");
  read(j, "reset_fleet_daily", c.reset_fleet_daily, "config");
  read(j, "reposition_radius", c.reposition_radius, "config");

  if (auto it = j.find("constants"); it != j.end() && !it->is_null()) {
    const std::string w = "constants";
    reject_unknown(*it, w, {"speed_mps", "pickup_max_m", "wait_max_min", "idle_threshold_min", "tick_min"});
    read(*it, "speed_mps", c.constants.speed_mps, w);
    read(*it, "pickup_max_m", c.constants.pickup_max_m, w);
    read(*it, "wait_max_min", c.constants.wait_max_min, w);
    read(*it, "idle_threshold_min", c.constants.idle_threshold_min, w);
    read(*it, "tick_min", c.constants.tick_min, w);
  }
  if (auto it = j.find("scorer"); it != j.end() && !it->is_null()) {
    const std::string w = "scorer";
    reject_unknown(*it, w, {"reward_weight", "future_weight", "wait_weight", "window_min", "k_max"});
    read(*it, "reward_weight", c.scorer.reward_weight, w);
    read(*it, "future_weight", c.scorer.future_weight, w);
    read(*it, "wait_weight", c.scorer.wait_weight, w);
    read(*it, "window_min", c.scorer.window_min, w);
    read(*it, "k_max", c.scorer.k_max, w);
  }
  if (auto it = j.find("dispatch"); it != j.end() && !it->is_null()) {
    const std::string w = "dispatch";
    reject_unknown(*it, w, {"value_w", "proximity_w", "fairness_w"});
    read(*it, "value_w", c.dispatch.value_w, w);
    read(*it, "proximity_w", c.dispatch.proximity_w, w);
    read(*it, "fairness_w", c.dispatch.fairness_w, w);
  }
  if (auto it = j.find("windows"); it != j.end() && !it->is_null()) {
    const std::string w = "windows";
    reject_unknown(*it, w, {"history_min", "arrival_horizon_min", "future_value_min"});
    read(*it, "history_min", c.windows.history_min, w);
    read(*it, "arrival_horizon_min", c.windows.arrival_horizon_min, w);
    read(*it, "future_value_min", c.windows.future_value_min, w);
  }
  if (auto it = j.find("surge"); it != j.end() && !it->is_null()) {
    const std::string w = "surge";
    reject_unknown(*it, w, {"zone", "hour", "multiplier"});
    SurgeSpec s;
    std::vector<std::int32_t> zone;
    read(*it, "zone", zone, w);
    for (auto z : zone) s.zone.push_back(RegionId{z});
    read(*it, "hour", s.hour, w);
    read(*it, "multiplier", s.multiplier, w);
    c.surge = s;
  }
  if (auto it = j.find("llm"); it != j.end() && !it->is_null()) {
    const std::string w = "llm";
    reject_unknown(*it, w,
                   {"base_url", "model", "api_key_env", "timeout_s", "max_retries", "batch_size", "max_in_flight",
                    "temperature", "backoff_initial_s"});
    read(*it, "base_url", c.llm.base_url, w);
    read(*it, "model", c.llm.model, w);
    read(*it, "api_key_env", c.llm.api_key_env, w);
    read(*it, "timeout_s", c.llm.timeout_s, w);
    read(*it, "max_retries", c.llm.max_retries, w);
    read(*it, "batch_size", c.llm.batch_size, w);
    read(*it, "max_in_flight", c.llm.max_in_flight, w);
    read(*it, "temperature", c.llm.temperature, w);
    read(*it, "backoff_initial_s", c.llm.backoff_initial_s, w);
  }

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["version"] = kConfigVersion;
  j["scenario"] = c.scenario;
  j["policy"] = std::string(to_string(c.policy));
  j["seed"] = c.seed;
  j["horizon"] = c.horizon ? ordered_json(*c.horizon) : ordered_json(nullptr);
  j["reposition"] = c.reposition ? ordered_json(*c.reposition) : ordered_json(nullptr);
  j["relocating_matchable"] = c.relocating_matchable;
  j["reset_fleet_daily"] = c.reset_fleet_daily;
  j["reposition_radius"] = c.reposition_radius;
  j["constants"] = {{"speed_mps", c.constants.speed_mps},
                    {"pickup_max_m", c.constants.pickup_max_m},
                    {"wait_max_min", c.constants.wait_max_min},
                    {"idle_threshold_min", c.constants.idle_threshold_min},
                    {"tick_min", c.constants.tick_min}};
  j["scorer"] = {{"reward_weight", c.scorer.reward_weight},
                 {"future_weight", c.scorer.future_weight},
                 {"wait_weight", c.scorer.wait_weight},
                 {"window_min", c.scorer.window_min},
                 {"k_max", c.scorer.k_max}};
  j["dispatch"] = {{"value_w", c.dispatch.value_w},
                   {"proximity_w", c.dispatch.proximity_w},
                   {"fairness_w", c.dispatch.fairness_w}};
  j["windows"] = {{"history_min", c.windows.history_min},
                  {"arrival_horizon_min", c.windows.arrival_horizon_min},
                  {"future_value_min", c.windows.future_value_min}};
  if (c.surge) {
    std::vector<std::int32_t> zone;
    for (RegionId r : c.surge->zone) zone.push_back(r.index);
    j["surge"] = {{"zone", zone}, {"hour", c.surge->hour}, {"multiplier", c.surge->multiplier}};
  } else {
    j["surge"] = nullptr;
  }
  j["llm"] = {{"base_url", c.llm.base_url},
              {"model", c.llm.model},
              {"api_key_env", c.llm.api_key_env},
              {"timeout_s", c.llm.timeout_s},
              {"max_retries", c.llm.max_retries},
              {"batch_size", c.llm.batch_size},
              {"max_in_flight", c.llm.max_in_flight},
              {"temperature", c.llm.temperature},
              {"backoff_initial_s", c.llm.backoff_initial_s}};
  return j;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + file.string() + " is not valid JSON");
  return config_from_json(j);
}

void save_config(const std::filesystem::path& file, const RunConfig& c) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + file.string());
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace oddr
