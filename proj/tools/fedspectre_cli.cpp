#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedspectre/csv.hpp"
#include "fedspectre/scenario.hpp"
#include "fedspectre/version.hpp"

namespace fs = std::filesystem;
using namespace fedspectre;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string hash_hex(const json& config) {
  std::ostringstream out;
  out << std::hex << fnv1a(config.dump());
  return out.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

// The built-in ids: s1..s4 shorthand or the descriptive names.
scenario::ScenarioId parse_scenario(const std::string& text) {
  if (text == "s1") return scenario::ScenarioId::anomaly_fleet;
  if (text == "s2") return scenario::ScenarioId::anomaly_transfer;
  if (text == "s3") return scenario::ScenarioId::binary_fleet;
  if (text == "s4") return scenario::ScenarioId::binary_transfer;
  return scenario::scenario_from_string(text);
}

struct DatasetOptions {
  std::string source = "synthetic";
  std::string column_map;
  data::RecordList records;

  bool load() {
    if (source == "synthetic" || source.empty()) return false;
    if (column_map.empty()) {
      records = data::load_csv(source);
    } else {
      records = data::load_csv(
          source, data::ColumnMap::from_json_text(read_text(column_map)));
    }
    return true;
  }

  json describe() const {
    json doc;
    doc["source"] = source;
    if (!column_map.empty()) doc["column_map"] = column_map;
    return doc;
  }
};

void guard_injection_cycle(const std::vector<std::string>& names,
                           bool allow_stealthy,
                           std::vector<data::Behavior>& cycle) {
  for (const std::string& name : names) {
    const data::Behavior behavior = data::behavior_from_string(name);
    const bool stealthy = behavior == data::Behavior::freeze ||
                          behavior == data::Behavior::repeat;
    if (stealthy && !allow_stealthy) {
      throw ConfigError("injecting '" + name +
                        "' barely moves the traffic and is disabled by "
                        "default; pass --allow-stealthy-injection to force it");
    }
    cycle.push_back(behavior);
  }
}

json cell_doc(const scenario::CellResult& cell) {
  return json::parse(scenario::to_json_text(cell));
}

double safe_f1(const eval::EvaluationReport& report,
               std::optional<data::DeviceId> device) {
  try {
    return device ? report.device_f1(*device) : report.overall_f1();
  } catch (const MetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::string grid_csv(const std::vector<std::pair<int, scenario::CellResult>>&
                         seeded_cells) {
  std::set<data::DeviceId> devices;
  for (const auto& [seed, cell] : seeded_cells) {
    for (const auto& [key, counts] : cell.report.cells) devices.insert(key.first);
  }
  std::ostringstream out;
  out << "rule,attack,adversaries,seed,f1_overall";
  for (const data::DeviceId device : devices) {
    out << ",f1_" << data::to_string(device);
  }
  out << "\n";
  out.precision(17);
  for (const auto& [seed, cell] : seeded_cells) {
    out << agg::to_string(cell.rule) << ',' << adv::to_string(cell.attack)
        << ',' << cell.adversaries << ',' << seed << ','
        << safe_f1(cell.report, std::nullopt);
    for (const data::DeviceId device : devices) {
      out << ',' << safe_f1(cell.report, device);
    }
    out << "\n";
  }
  return out.str();
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const json& config, const std::vector<std::string>& outputs) {
  json manifest;
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["config_hash"] = hash_hex(config);
  manifest["outputs"] = outputs;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct SynthArgs {
  std::string out;
  std::string spec_path;
  std::string emit_spec;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& args) {
  data::SyntheticSpec spec = args.spec_path.empty()
                                 ? data::SyntheticSpec::desk_default()
                                 : data::SyntheticSpec::from_json_text(
                                       read_text(args.spec_path));
  const data::RecordList records = data::synthesize(spec, args.seed);
  const fs::path out(args.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_csv(out, records);
  if (!args.emit_spec.empty()) {
    write_text(args.emit_spec, spec.to_json_text() + "\n");
  }
  std::cout << "wrote " << records.size() << " records to " << args.out << "\n";
  return 0;
}

struct RunArgs {
  std::string scenario_name;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string pairing_name;
  bool paper_quotas = false;
  std::string rule_name = "fed_avg";
  std::string attack_name = "none";
  int adversaries = 0;
  bool no_overstate = false;
  int rounds = 15;
  int local_epochs = 5;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double client_fraction = 1.0;
  std::vector<std::string> inject_names;
  bool allow_stealthy = false;
  bool centralized = false;
  DatasetOptions dataset;
};

scenario::RunPlan plan_from(const RunArgs& args, scenario::ScenarioId id,
                            scenario::TransferPairing pairing,
                            const data::RecordList* dataset) {
  scenario::RunPlan plan;
  plan.scenario = id;
  plan.pairing = pairing;
  plan.attack = adv::attack_from_string(args.attack_name);
  plan.adversaries = args.adversaries;
  plan.overstate_thresholds = !args.no_overstate;
  plan.paper_scale = args.paper_quotas;
  guard_injection_cycle(args.inject_names, args.allow_stealthy,
                        plan.injection_cycle);
  plan.dataset = dataset;
  plan.federation.rounds = args.rounds;
  plan.federation.local_epochs = args.local_epochs;
  plan.federation.batch_size = args.batch_size;
  plan.federation.learning_rate = args.learning_rate;
  plan.federation.client_fraction = args.client_fraction;
  plan.federation.rule = agg::rule_from_string(args.rule_name);
  plan.federation.seed = args.seed;
  return plan;
}

int run_run(const RunArgs& args) {
  const bool sweep_id = args.scenario_name == "robustness_sweep";
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);

  const data::RecordList* dataset = nullptr;
  DatasetOptions data_options = args.dataset;
  if (data_options.load()) dataset = &data_options.records;

  json config;
  config["scenario"] = args.scenario_name;
  config["seed"] = args.seed;
  config["data"] = data_options.describe();
  config["paper_quotas"] = args.paper_quotas;
  std::vector<std::string> outputs;

  if (sweep_id) {
    // The bundled robustness grid. Weight canceling is swept across every
    // rule with honestly reported thresholds so the aggregation comparison
    // is not masked, the threshold fabrication arm runs under plain
    // averaging, and the injection sweep probes the data poisoning side.
    scenario::RunPlan base = plan_from(
        args, scenario::ScenarioId::anomaly_fleet,
        scenario::TransferPairing::holdout_rpi4_4gb, dataset);

    std::vector<std::pair<int, scenario::CellResult>> seeded;
    json all_cells = json::array();

    scenario::SweepSpec canceling;
    canceling.base = base;
    canceling.base.attack = adv::AttackKind::model_canceling;
    canceling.base.overstate_thresholds = false;
    canceling.rules = {agg::Rule::fed_avg, agg::Rule::trimmed_mean_1,
                       agg::Rule::trimmed_mean_2, agg::Rule::median};
    canceling.adversary_counts = {0, 2, 6};

    scenario::SweepSpec fabricated;
    fabricated.base = base;
    fabricated.base.attack = adv::AttackKind::model_canceling;
    fabricated.base.overstate_thresholds = true;
    fabricated.rules = {agg::Rule::fed_avg};
    fabricated.adversary_counts = {1, 2};

    scenario::SweepSpec injection;
    injection.base = base;
    injection.base.attack = adv::AttackKind::behavior_injection;
    injection.rules = {agg::Rule::fed_avg};
    injection.adversary_counts = {1, 2, 4};

    for (const auto* spec : {&canceling, &fabricated, &injection}) {
      for (const auto& cell : scenario::run_sweep(*spec)) {
        all_cells.push_back(cell_doc(cell));
        seeded.emplace_back(static_cast<int>(args.seed), cell);
      }
    }

    json doc;
    doc["seed"] = args.seed;
    doc["cells"] = all_cells;
    write_text(dir / "cells.json", doc.dump(2) + "\n");
    write_text(dir / "grid.csv", grid_csv(seeded));
    outputs = {"cells.json", "grid.csv"};
    config["attacks"] = {"model_canceling", "behavior_injection"};
    write_manifest(dir, "run", config, outputs);
    std::cout << "wrote " << seeded.size() << " sweep cells to " << args.out_dir
              << "\n";
    return 0;
  }

  const scenario::ScenarioId id = parse_scenario(args.scenario_name);
  std::vector<scenario::TransferPairing> pairings;
  if (!scenario::is_transfer(id)) {
    pairings = {scenario::TransferPairing::holdout_rpi4_4gb};
  } else if (!args.pairing_name.empty()) {
    pairings = {scenario::pairing_from_string(args.pairing_name)};
  } else {
    pairings.assign(scenario::kAllPairings.begin(),
                    scenario::kAllPairings.end());
  }

  config["rule"] = args.rule_name;
  config["attack"] = args.attack_name;
  config["adversaries"] = args.adversaries;
  config["overstate_thresholds"] = !args.no_overstate;
  config["rounds"] = args.rounds;
  config["local_epochs"] = args.local_epochs;
  config["batch_size"] = args.batch_size;
  config["learning_rate"] = args.learning_rate;
  config["client_fraction"] = args.client_fraction;
  config["injection_cycle"] = args.inject_names;
  config["centralized"] = args.centralized;
  json pairing_names = json::array();

  for (const scenario::TransferPairing pairing : pairings) {
    const scenario::RunPlan plan = plan_from(args, id, pairing, dataset);
    std::string tag(scenario::to_string(id));
    if (scenario::is_transfer(id)) {
      tag += "_" + std::string(scenario::to_string(pairing));
      pairing_names.push_back(std::string(scenario::to_string(pairing)));
    }

    const scenario::CellResult cell = scenario::run_cell(plan);
    write_text(dir / ("report_" + tag + ".json"),
               scenario::to_json_text(cell) + "\n");
    write_text(dir / ("report_" + tag + ".csv"), cell.report.to_csv_text());
    outputs.push_back("report_" + tag + ".json");
    outputs.push_back("report_" + tag + ".csv");
    std::cout << tag << ": overall F1 " << safe_f1(cell.report, std::nullopt)
              << "\n";

    if (args.centralized) {
      const scenario::CentralizedResult central = scenario::run_centralized(plan);
      json doc;
      doc["threshold"] = central.threshold;
      doc["evaluation"] = json::parse(central.report.to_json_text());
      write_text(dir / ("centralized_" + tag + ".json"), doc.dump(2) + "\n");
      write_text(dir / ("centralized_" + tag + ".csv"),
                 central.report.to_csv_text());
      outputs.push_back("centralized_" + tag + ".json");
      outputs.push_back("centralized_" + tag + ".csv");
    }
  }

  if (scenario::is_transfer(id)) config["pairings"] = pairing_names;
  write_manifest(dir, "run", config, outputs);
  return 0;
}

struct SweepArgs {
  std::string spec_path;
  std::string out_dir;
};

int run_sweep_cmd(const SweepArgs& args) {
  const json doc = json::parse(read_text(args.spec_path));
  if (!doc.is_object()) throw ConfigError("sweep spec must be a json object");

  RunArgs base_args;
  base_args.scenario_name = doc.value("scenario", std::string("s1"));
  base_args.pairing_name = doc.value("pairing", std::string());
  base_args.attack_name = doc.value("attack", std::string("none"));
  base_args.paper_quotas = doc.value("paper_quotas", false);
  base_args.no_overstate = !doc.value("overstate_thresholds", true);
  base_args.rounds = doc.value("rounds", 15);
  base_args.local_epochs = doc.value("local_epochs", 5);
  base_args.batch_size = doc.value("batch_size", 64);
  base_args.learning_rate = doc.value("learning_rate", 1e-3);
  base_args.client_fraction = doc.value("client_fraction", 1.0);
  base_args.allow_stealthy = doc.value("allow_stealthy_injection", false);
  if (doc.contains("injection_cycle")) {
    base_args.inject_names =
        doc.at("injection_cycle").get<std::vector<std::string>>();
  }
  base_args.dataset.source = doc.value("data", std::string("synthetic"));
  base_args.dataset.column_map = doc.value("column_map", std::string());

  const scenario::ScenarioId id = parse_scenario(base_args.scenario_name);
  const scenario::TransferPairing pairing =
      base_args.pairing_name.empty()
          ? scenario::TransferPairing::holdout_rpi4_4gb
          : scenario::pairing_from_string(base_args.pairing_name);

  std::vector<agg::Rule> rules;
  for (const auto& name : doc.value("rules", std::vector<std::string>{"fed_avg"})) {
    rules.push_back(agg::rule_from_string(name));
  }
  const std::vector<int> counts =
      doc.value("adversaries", std::vector<int>{0});
  const std::vector<std::uint64_t> seeds =
      doc.value("seeds", std::vector<std::uint64_t>{0});

  const data::RecordList* dataset = nullptr;
  if (base_args.dataset.load()) dataset = &base_args.dataset.records;

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  std::vector<std::string> outputs;
  std::vector<std::pair<int, scenario::CellResult>> seeded;

  for (const std::uint64_t seed : seeds) {
    base_args.seed = seed;
    scenario::SweepSpec sweep;
    sweep.base = plan_from(base_args, id, pairing, dataset);
    sweep.rules = rules;
    sweep.adversary_counts = counts;
    const std::vector<scenario::CellResult> cells = scenario::run_sweep(sweep);

    json cell_array = json::array();
    for (const auto& cell : cells) {
      cell_array.push_back(cell_doc(cell));
      seeded.emplace_back(static_cast<int>(seed), cell);
    }
    json seed_doc;
    seed_doc["seed"] = seed;
    seed_doc["cells"] = cell_array;
    const std::string name = "cells_seed" + std::to_string(seed) + ".json";
    write_text(dir / name, seed_doc.dump(2) + "\n");
    outputs.push_back(name);
  }

  write_text(dir / "grid.csv", grid_csv(seeded));
  outputs.push_back("grid.csv");

  json config = doc;
  config["resolved_scenario"] = std::string(scenario::to_string(id));
  write_manifest(dir, "sweep", config, outputs);
  std::cout << "wrote " << seeded.size() << " cells to " << args.out_dir << "\n";
  return 0;
}

struct ReportArgs {
  std::string in_path;
  std::string format = "csv";
};

void collect_cells(const json& doc, int seed_hint,
                   std::vector<std::pair<int, scenario::CellResult>>& out) {
  if (doc.is_array()) {
    for (const auto& entry : doc) collect_cells(entry, seed_hint, out);
    return;
  }
  if (!doc.is_object()) return;
  if (doc.contains("cells")) {
    const int seed = doc.value("seed", seed_hint);
    for (const auto& entry : doc.at("cells")) collect_cells(entry, seed, out);
    return;
  }
  if (doc.contains("rule")) {
    out.emplace_back(seed_hint, scenario::cell_from_json(doc.dump()));
  }
}

int run_report(const ReportArgs& args) {
  if (args.format != "csv" && args.format != "json") {
    throw ConfigError("report format must be csv or json");
  }

  std::vector<fs::path> files;
  const fs::path in(args.in_path);
  if (fs::is_directory(in)) {
    for (const auto& entry : fs::directory_iterator(in)) {
      const std::string name = entry.path().filename().string();
      if (entry.path().extension() == ".json" && name != "manifest.json" &&
          name.rfind("centralized_", 0) != 0) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(in);
  }
  if (files.empty()) throw IoError("no report files under '" + args.in_path + "'");

  std::vector<std::pair<int, scenario::CellResult>> cells;
  for (const fs::path& file : files) {
    collect_cells(json::parse(read_text(file)), 0, cells);
  }
  if (cells.empty()) {
    throw ParseError("no cell results found under '" + args.in_path + "'");
  }

  if (args.format == "json") {
    json out = json::array();
    for (const auto& [seed, cell] : cells) {
      json doc = cell_doc(cell);
      doc["seed"] = seed;
      out.push_back(doc);
    }
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << grid_csv(cells);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated spectrum-sensor misbehavior detection harness"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset csv");
  synth->add_option("--out", synth_args.out, "output csv path")->required();
  synth->add_option("--spec", synth_args.spec_path,
                    "generator spec json (default: built-in desk spec)");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--emit-spec", synth_args.emit_spec,
                    "also write the effective spec json here");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run one scenario end to end");
  run->add_option("--scenario", run_args.scenario_name,
                  "s1|s2|s3|s4, a full scenario name, or robustness_sweep")
      ->required();
  run->add_option("--out", run_args.out_dir, "output directory")->required();
  run->add_option("--seed", run_args.seed, "run seed");
  run->add_option("--data", run_args.dataset.source,
                  "'synthetic' or a dataset csv path");
  run->add_option("--column-map", run_args.dataset.column_map,
                  "json renaming for foreign csv headers");
  run->add_option("--pairing", run_args.pairing_name,
                  "restrict a transfer scenario to one holdout pairing");
  run->add_flag("--paper-quotas", run_args.paper_quotas,
                "use the full-size anomaly quotas");
  run->add_option("--rule", run_args.rule_name, "aggregation rule");
  run->add_option("--attack", run_args.attack_name, "adversary kind");
  run->add_option("--adversaries", run_args.adversaries, "adversary count");
  run->add_flag("--no-overstate", run_args.no_overstate,
                "model poisoning adversaries report honest thresholds");
  run->add_option("--rounds", run_args.rounds, "federation rounds");
  run->add_option("--epochs", run_args.local_epochs, "local epochs per round");
  run->add_option("--batch", run_args.batch_size, "minibatch size");
  run->add_option("--lr", run_args.learning_rate, "learning rate");
  run->add_option("--fraction", run_args.client_fraction,
                  "client fraction per round");
  run->add_option("--inject-behavior", run_args.inject_names,
                  "override the injected behavior rotation");
  run->add_flag("--allow-stealthy-injection", run_args.allow_stealthy,
                "permit freeze/repeat injection");
  run->add_flag("--centralized", run_args.centralized,
                "also train the pooled centralized twin");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "run a rules x adversaries grid");
  sweep->add_option("--spec", sweep_args.spec_path, "sweep spec json")
      ->required();
  sweep->add_option("--out", sweep_args.out_dir, "output directory")->required();

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "print stored results");
  report->add_option("--in", report_args.in_path,
                     "results directory or a single json file")
      ->required();
  report->add_option("--format", report_args.format, "csv or json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(synth_args);
    if (*run) return run_run(run_args);
    if (*sweep) return run_sweep_cmd(sweep_args);
    if (*report) return run_report(report_args);
  } catch (const json::exception& e) {
    std::cerr << "fedspectre: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fedspectre: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
