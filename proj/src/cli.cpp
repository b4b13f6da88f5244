#include "oddr/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "oddr/config.hpp"
#include "oddr/engine.hpp"
#include "oddr/ingest.hpp"

namespace oddr::cli {

using nlohmann::json;

namespace {

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
}

const CLI::Validator kFraction = CLI::Validator(
    [](std::string& s) -> std::string {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && v > 0.0 && v <= 1.0) return {};
      } catch (const std::exception&) {
      }
      return "fraction must be a number in (0, 1], got " + s;
    },
    "FRACTION in (0,1]");

struct PrepareArgs {
  std::string input;
  int synthetic = 0;
  int days = 1;
  std::string day0 = "2024-01-01";
  double fraction = 1.0;
  int drivers = 100;
  std::uint64_t seed = 42;
  std::string out;
  std::string config;
  std::string first_day;
  std::string last_day;
};

int do_prepare(const PrepareArgs& a, std::ostream& out, std::ostream& err) {
  WorldParams wp;
  if (!a.config.empty()) {
    // Only the world section matters here; scenario worlds are fixed at prepare time.
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot read config " + a.config);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + a.config + " is not valid JSON");
    if (auto w = j.find("world"); w != j.end()) {
      wp.center.lat = w->value("center_lat", wp.center.lat);
      wp.center.lon = w->value("center_lon", wp.center.lon);
      wp.circumradius_m = w->value("circumradius_m", wp.circumradius_m);
      wp.rings = w->value("rings", wp.rings);
    }
  }
  const HexWorld world(wp);

  ScenarioSpec spec;
  spec.sample_fraction = a.fraction;
  spec.driver_count = a.drivers;
  spec.seed = a.seed;
  if (!a.first_day.empty()) spec.first_day = a.first_day;
  if (!a.last_day.empty()) spec.last_day = a.last_day;

  ScenarioManifest manifest;
  manifest.sample_fraction = a.fraction;
  manifest.driver_count = a.drivers;
  manifest.seed = a.seed;

  std::vector<Order> orders;
  std::string day0;
  if (!a.input.empty()) {
    spec.source_file = a.input;
    TripFile tf = parse_trips(a.input, world);
    for (const auto& s : tf.skipped) err << "skipped row " << s.row << ": " << s.reason << '\n';
    manifest.source = a.input;
    manifest.source_rows = tf.rows;
    manifest.skipped_rows = tf.skipped.size();
    orders = std::move(tf.orders);
    day0 = tf.day0;
  } else {
    SyntheticSpec ss;
    ss.expected_orders = a.synthetic;
    ss.days = a.days;
    ss.seed = a.seed;
    orders = generate_synthetic(world, ss);
    manifest.source = "synthetic:" + std::to_string(a.synthetic) + "/day";
    manifest.source_rows = orders.size();
    day0 = a.day0;
  }

  Scenario sc = sample_scenario(orders, day0, spec, world);
  write_scenario(a.out, sc, manifest);
  out << "scenario " << a.out << ": " << sc.orders.size() << " orders, " << sc.fleet.size() << " drivers, "
      << sc.days << " day(s) from " << sc.day0 << ", " << world.region_count() << " regions";
  if (manifest.skipped_rows > 0) out << ", " << manifest.skipped_rows << " rows skipped";
  out << '\n';
  return kOk;
}

struct RunArgs {
  std::string scenario;
  std::string policy;
  std::string config;
  std::string out;
  std::string reposition;
  std::int64_t seed = -1;
  int horizon = -1;
};

int do_run(const RunArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (!a.scenario.empty()) cfg.scenario = a.scenario;
  if (cfg.scenario.empty()) throw ConfigError("no scenario given (use --scenario or the config's scenario key)");
  if (!a.policy.empty()) cfg.policy = parse_policy(a.policy);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.horizon >= 0) cfg.horizon = a.horizon;
  if (a.reposition == "on") cfg.reposition = true;
  if (a.reposition == "off") cfg.reposition = false;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.policy == PolicyKind::kLlm) llm::api_key_from_env(cfg.llm);  // fail before loading anything

  const Scenario sc = read_scenario(cfg.scenario);
  const RunResult r = run(cfg, sc, std::filesystem::path(a.out));
  out << "run " << a.out << " (" << to_string(cfg.policy) << "): GMV " << fmt(r.metrics.gmv, 2) << ", ORR "
      << fmt(r.metrics.orr, 4) << ", matched " << r.metrics.matched << "/" << r.metrics.total << ", Gini "
      << fmt(r.metrics.gini, 4) << ", fallbacks " << r.metrics.fallbacks << '\n';
  return kOk;
}

struct SurgeArgs {
  std::string scenario;
  std::vector<int> zone;
  int zone_center = -1;
  int zone_radius = 1;
  int hour = 10;
  double multiplier = 3.0;
  std::uint64_t seed = 42;
  std::string out;
};

int do_surge(const SurgeArgs& a, std::ostream& out) {
  Scenario sc = read_scenario(a.scenario);
  const HexWorld world(sc.world);
  SurgeSpec spec;
  spec.hour = a.hour;
  spec.multiplier = a.multiplier;
  for (int z : a.zone) spec.zone.push_back(RegionId{z});
  if (a.zone_center >= 0) {
    for (RegionId r : world.neighbors(RegionId{a.zone_center}, a.zone_radius)) spec.zone.push_back(r);
  }
  if (spec.zone.empty()) throw ConfigError("surge needs --zone or --zone-center");
  for (RegionId r : spec.zone) {
    if (static_cast<std::size_t>(r.index) >= world.region_count() || !r.valid()) {
      throw ConfigError("surge zone region " + std::to_string(r.index) + " is outside the world");
    }
  }
  const std::size_t before = sc.orders.size();
  sc.orders = synthesize_surge(sc.orders, spec, a.seed);

  ScenarioManifest manifest;
  manifest.source = "surge:" + a.scenario;
  manifest.driver_count = static_cast<int>(sc.fleet.size());
  manifest.seed = a.seed;
  manifest.source_rows = before;
  write_scenario(a.out, sc, manifest);
  out << "scenario " << a.out << ": " << sc.orders.size() - before << " surge orders added in " << spec.zone.size()
      << " regions at " << a.hour << ":00 (x" << fmt(a.multiplier, 2) << ")\n";
  return kOk;
}

json load_report(const std::filesystem::path& dir) {
  const auto file = dir / "report.json";
  std::ifstream in(file);
  if (!in) throw IoError("run directory " + dir.string() + " has no report.json");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError("run directory " + dir.string() + ": report.json is not valid JSON");
  if (j.value("format", "") != "oddr-report" || !j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kReportVersion) {
    throw IoError("run directory " + dir.string() + ": report version " +
                  (j.contains("version") ? j["version"].dump() : std::string("missing")) + " is not supported (expected " +
                  std::to_string(kReportVersion) + ")");
  }
  return j;
}

int do_report(const std::string& dir, std::ostream& out) {
  const json j = load_report(dir);
  out << "run: " << dir << " (" << j.value("policy", "") << ", " << j.value("status", "") << ")\n";
  const auto& o = j.at("overall");
  out << "overall: GMV " << fmt(o.at("gmv").get<double>(), 2) << ", ORR " << fmt(o.at("orr").get<double>(), 4)
      << ", matched " << o.at("matched").get<int>() << ", expired " << o.at("expired").get<int>() << ", pending "
      << o.at("pending").get<int>() << ", total " << o.at("total").get<int>() << '\n';
  for (const auto& w : j.at("windows")) {
    out << w.at("name").get<std::string>() << " " << w.at("start").get<std::string>() << "-"
        << w.at("end").get<std::string>() << ": GMV " << fmt(w.at("gmv").get<double>(), 2) << ", ORR "
        << fmt(w.at("orr").get<double>(), 4) << '\n';
  }
  for (const auto& d : j.at("days")) {
    out << "day " << d.at("day").get<int>() << ": GMV " << fmt(d.at("gmv").get<double>(), 2) << ", ORR "
        << fmt(d.at("orr").get<double>(), 4) << '\n';
  }
  const auto& f = j.at("fairness");
  out << "income: mean " << fmt(f.at("income_mean").get<double>(), 2) << ", std "
      << fmt(f.at("income_std").get<double>(), 2) << ", Gini " << fmt(f.at("gini").get<double>(), 4) << '\n';
  out << "repositions: " << j.value("repositions", 0) << ", fallbacks: " << j.value("fallbacks", 0) << '\n';
  return kOk;
}

}  // namespace

CompareRow read_compare_row(const std::filesystem::path& dir) {
  const json j = load_report(dir);
  CompareRow row;
  auto name = dir.filename().string();
  if (name.empty()) name = dir.parent_path().filename().string();
  row.label = name + " (" + j.value("policy", "?") + ")";
  row.gmv = j.at("overall").at("gmv").get<double>();
  row.orr = j.at("overall").at("orr").get<double>();
  const auto& ws = j.at("windows");
  for (std::size_t i = 0; i < 3 && i < ws.size(); ++i) {
    row.window_gmv[i] = ws[i].at("gmv").get<double>();
    row.window_orr[i] = ws[i].at("orr").get<double>();
  }
  return row;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string s =
      "run,overall_gmv,overall_orr,morning_gmv,morning_orr,noon_gmv,noon_orr,evening_gmv,evening_orr\n";
  for (const auto& r : rows) {
    std::string label = r.label;
    if (label.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char c : label) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = q + "\"";
    }
    s += label + "," + fmt(r.gmv, 2) + "," + fmt(r.orr, 4);
    for (int i = 0; i < 3; ++i) s += "," + fmt(r.window_gmv[i], 2) + "," + fmt(r.window_orr[i], 4);
    s += "\n";
  }
  return s;
}

std::string compare_text(const std::vector<CompareRow>& rows) {
  const char* groups[4] = {"Overall", "Morning (7:00-10:00)", "Noon (11:00-14:00)", "Evening (17:00-20:00)"};
  std::size_t label_w = 6;
  for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
  constexpr std::size_t kGmvW = 12;
  constexpr std::size_t kOrrW = 8;
  constexpr std::size_t kGroupW = kGmvW + kOrrW + 1;

  auto pad = [](std::string s, std::size_t w, bool right) {
    if (s.size() >= w) return s;
    return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
  };
  std::string out = pad("", label_w, false);
  for (const char* g : groups) out += " | " + pad(g, kGroupW, false);
  out += "\n" + pad("Run", label_w, false);
  for (int i = 0; i < 4; ++i) out += " | " + pad("GMV", kGmvW, true) + " " + pad("ORR", kOrrW, true);
  out += "\n" + std::string(label_w, '-');
  for (int i = 0; i < 4; ++i) out += "-+-" + std::string(kGroupW, '-');
  out += "\n";
  for (const auto& r : rows) {
    out += pad(r.label, label_w, false);
    out += " | " + pad(fmt(r.gmv, 2), kGmvW, true) + " " + pad(fmt(r.orr, 4), kOrrW, true);
    for (int i = 0; i < 3; ++i) {
      out += " | " + pad(fmt(r.window_gmv[i], 2), kGmvW, true) + " " + pad(fmt(r.window_orr[i], 4), kOrrW, true);
    }
    out += "\n";
  }
  return out;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ride-hailing order dispatching and driver repositioning simulator", "oddr"};
  app.require_subcommand(1, 1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Build a scenario cache from trip records or synthetic demand");
  auto* input = prepare->add_option("--input", prep.input, "Trip record CSV")->check(CLI::ExistingFile);
  auto* synthetic =
      prepare->add_option("--synthetic", prep.synthetic, "Generate synthetic demand with N expected orders per day")
          ->check(CLI::PositiveNumber);
  input->excludes(synthetic);
  prepare->add_option("--days", prep.days, "Days of synthetic demand")->check(CLI::Range(1, 366));
  prepare->add_option("--day0", prep.day0, "Calendar date of the first synthetic day (YYYY-MM-DD)");
  prepare->add_option("--fraction", prep.fraction, "Fraction of orders kept by random sampling")
      ->check(kFraction)
      ->capture_default_str();
  prepare->add_option("--drivers", prep.drivers, "Fleet size")->check(CLI::Range(1, 1000000))->capture_default_str();
  prepare->add_option("--seed", prep.seed, "Sampling and placement seed")->capture_default_str();
  prepare->add_option("--first-day", prep.first_day, "First day to keep (YYYY-MM-DD)");
  prepare->add_option("--last-day", prep.last_day, "Last day to keep (YYYY-MM-DD)");
  prepare->add_option("--config", prep.config, "Config file whose world section sets the grid")
      ->check(CLI::ExistingFile);
  prepare->add_option("--out", prep.out, "Scenario directory")->required();

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and write report.json and logs");
  run_cmd->add_option("--scenario", ra.scenario, "Scenario directory (overrides the config)");
  run_cmd->add_option("--policy", ra.policy, "Decision policy (overrides the config)")
      ->check(CLI::IsMember({"reference", "km", "llm"}));
  run_cmd->add_option("--config", ra.config, "Run config (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("--out", ra.out, "Run output directory")->required();
  run_cmd->add_option("--seed", ra.seed, "Seed override")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--horizon", ra.horizon, "Horizon override in ticks")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--reposition", ra.reposition, "Force repositioning on or off")
      ->check(CLI::IsMember({"on", "off"}));

  std::vector<std::string> runs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Tabulate GMV and ORR per time window across runs");
  compare->add_option("--runs", runs, "Run directories")->required()->expected(2, -1);
  compare->add_option("--out", compare_out, "CSV output file; an aligned .txt copy is written beside it");

  SurgeArgs sa;
  auto* surge = app.add_subcommand("surge", "Add a demand surge to a scenario");
  surge->add_option("--scenario", sa.scenario, "Input scenario directory")->required()->check(CLI::ExistingDirectory);
  auto* zone = surge->add_option("--zone", sa.zone, "Surge zone region ids");
  auto* zone_center = surge->add_option("--zone-center", sa.zone_center, "Centre region of the surge zone")
                          ->check(CLI::NonNegativeNumber);
  zone->excludes(zone_center);
  surge->add_option("--zone-radius", sa.zone_radius, "Hex radius around --zone-center")
      ->check(CLI::Range(0, 50))
      ->capture_default_str();
  surge->add_option("--hour", sa.hour, "Hour of day")->check(CLI::Range(0, 23))->capture_default_str();
  surge->add_option("--multiplier", sa.multiplier, "Demand multiplier (>= 1)")
      ->check(CLI::Range(1.0, 100.0))
      ->capture_default_str();
  surge->add_option("--seed", sa.seed, "Clone seed")->capture_default_str();
  surge->add_option("--out", sa.out, "Output scenario directory")->required();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Print the summary of a run");
  report->add_option("--run", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? kOk : kUsageError;
  }

  try {
    if (prepare->parsed()) {
      if (prep.input.empty() && prep.synthetic == 0) {
        err << "prepare: one of --input or --synthetic is required\n";
        return kUsageError;
      }
      return do_prepare(prep, out, err);
    }
    if (run_cmd->parsed()) return do_run(ra, out);
    if (compare->parsed()) {
      std::vector<CompareRow> rows;
      for (const auto& r : runs) rows.push_back(read_compare_row(r));
      const std::string text = compare_text(rows);
      if (!compare_out.empty()) {
        std::filesystem::path csv = compare_out;
        write_text(csv, compare_csv(rows));
        write_text(std::filesystem::path(csv).replace_extension(".txt"), text);
      }
      out << text;
      return kOk;
    }
    if (surge->parsed()) return do_surge(sa, out);
    if (report->parsed()) return do_report(report_dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const llm::AuthError& e) {
    err << (e.status() == 0 ? "config error: " : "run aborted: ") << e.what() << '\n';
    return e.status() == 0 ? kConfigError : kRunAborted;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const EmptyScenarioError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "run aborted: " << e.what() << '\n';
    return kRunAborted;
  }
  return kUsageError;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"oddr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace oddr::cli
