#include "fedspectre/scenario.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <json.hpp>

#include "fedspectre/preprocess.hpp"

namespace fedspectre::scenario {
namespace {

using data::Behavior;
using data::DeviceId;
using data::RecordList;

constexpr int kSlotsPerDevice = 4;
// Reserve sizing for the extra participants model poisoning brings along.
constexpr int kMaxAddedAdversaries = 6;

const std::array<Behavior, 4> kInjectable = {Behavior::spoof, Behavior::mimic,
                                             Behavior::delay, Behavior::disorder};

std::vector<Behavior> slot_behaviors(int slot) {
  switch (slot % kSlotsPerDevice) {
    case 0: return {Behavior::normal};
    case 1: return {Behavior::normal, Behavior::delay};
    case 2: return {Behavior::normal, Behavior::freeze};
    default: return {Behavior::normal, Behavior::noise};
  }
}

std::uint64_t device_ordinal(DeviceId device) {
  return static_cast<std::uint64_t>(device);
}

struct WorkingMember {
  MemberInfo info;
  RecordList train;
  RecordList val;
  double weight = 0.0;
};

RecordList behavior_shard(const RecordList& rows, Behavior behavior, int slot,
                          int stride) {
  RecordList out;
  int seen = 0;
  for (const auto& record : rows) {
    if (record.behavior != behavior) continue;
    if (seen % stride == slot) out.push_back(record);
    ++seen;
  }
  return out;
}

RecordList behavior_rows(const RecordList& rows, Behavior behavior) {
  RecordList out;
  for (const auto& record : rows) {
    if (record.behavior == behavior) out.push_back(record);
  }
  return out;
}

}  // namespace

std::string_view to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::anomaly_fleet: return "anomaly_fleet";
    case ScenarioId::anomaly_transfer: return "anomaly_transfer";
    case ScenarioId::binary_fleet: return "binary_fleet";
    case ScenarioId::binary_transfer: return "binary_transfer";
  }
  return "unknown";
}

ScenarioId scenario_from_string(std::string_view text) {
  for (const ScenarioId id : kAllScenarios) {
    if (text == to_string(id)) return id;
  }
  throw ParseError("unknown scenario '" + std::string(text) + "'");
}

bool is_anomaly(ScenarioId id) {
  return id == ScenarioId::anomaly_fleet || id == ScenarioId::anomaly_transfer;
}

bool is_transfer(ScenarioId id) {
  return id == ScenarioId::anomaly_transfer || id == ScenarioId::binary_transfer;
}

std::string_view to_string(TransferPairing pairing) {
  switch (pairing) {
    case TransferPairing::holdout_rpi4_4gb: return "holdout_rpi4_4gb";
    case TransferPairing::holdout_rpi4_2gb: return "holdout_rpi4_2gb";
    case TransferPairing::holdout_rpi3: return "holdout_rpi3";
  }
  return "unknown";
}

TransferPairing pairing_from_string(std::string_view text) {
  for (const TransferPairing pairing : kAllPairings) {
    if (text == to_string(pairing)) return pairing;
  }
  throw ParseError("unknown transfer pairing '" + std::string(text) + "'");
}

std::vector<DeviceId> train_devices(ScenarioId id, TransferPairing pairing) {
  if (!is_transfer(id)) {
    return {DeviceId::rpi3, DeviceId::rpi4_1, DeviceId::rpi4_3};
  }
  switch (pairing) {
    case TransferPairing::holdout_rpi4_4gb:
      return {DeviceId::rpi3, DeviceId::rpi4_1};
    case TransferPairing::holdout_rpi4_2gb:
      return {DeviceId::rpi3, DeviceId::rpi4_3};
    case TransferPairing::holdout_rpi3:
      return {DeviceId::rpi4_1, DeviceId::rpi4_3};
  }
  return {};
}

std::vector<DeviceId> eval_devices(ScenarioId id, TransferPairing pairing) {
  if (!is_transfer(id)) {
    return {DeviceId::rpi3, DeviceId::rpi4_1, DeviceId::rpi4_2,
            DeviceId::rpi4_3};
  }
  switch (pairing) {
    case TransferPairing::holdout_rpi4_4gb: return {DeviceId::rpi4_3};
    case TransferPairing::holdout_rpi4_2gb:
      return {DeviceId::rpi4_1, DeviceId::rpi4_2};
    case TransferPairing::holdout_rpi3: return {DeviceId::rpi3};
  }
  return {};
}

CellQuotas quotas_for(ScenarioId id, bool paper_scale) {
  if (!is_anomaly(id)) return {250, 25, 75};
  return paper_scale ? CellQuotas{1500, 150, 75} : CellQuotas{300, 50, 75};
}

BuiltScenario build(const RunPlan& plan) {
  const bool anomaly = is_anomaly(plan.scenario);
  const std::vector<DeviceId> trainers =
      train_devices(plan.scenario, plan.pairing);
  const std::vector<DeviceId> evaluated =
      eval_devices(plan.scenario, plan.pairing);
  const CellQuotas q = quotas_for(plan.scenario, plan.paper_scale);
  const int honest_count = kSlotsPerDevice * static_cast<int>(trainers.size());

  if (plan.adversaries < 0) throw ConfigError("adversary count must not be negative");
  const adv::AttackKind attack =
      plan.adversaries > 0 ? plan.attack : adv::AttackKind::none;
  if (adv::is_data_poisoning(attack) && plan.adversaries > honest_count) {
    throw ConfigError("data poisoning cannot compromise more than the " +
                      std::to_string(honest_count) + " honest participants");
  }
  if (attack == adv::AttackKind::behavior_injection && !anomaly) {
    throw ConfigError("behavior injection targets the anomaly scenarios");
  }
  if (attack == adv::AttackKind::label_flipping && anomaly) {
    throw ConfigError("label flipping targets the binary scenarios");
  }
  std::vector<Behavior> cycle(kInjectable.begin(), kInjectable.end());
  if (!plan.injection_cycle.empty()) {
    cycle = plan.injection_cycle;
    for (const Behavior b : cycle) {
      if (!data::is_attack(b)) {
        throw ConfigError("cannot inject benign behavior '" +
                          std::string(data::to_string(b)) + "'");
      }
    }
  }
  if (adv::is_model_poisoning(attack) &&
      plan.adversaries > kMaxAddedAdversaries) {
    throw ConfigError("model poisoning supports at most " +
                      std::to_string(kMaxAddedAdversaries) + " adversaries");
  }

  const Rng root(plan.federation.seed);

  const int added_val_reserve =
      ((kMaxAddedAdversaries + static_cast<int>(trainers.size()) - 1) /
       static_cast<int>(trainers.size())) *
      q.val;

  // Generation counts are the same regardless of attack kind and adversary
  // count, so a clean run matches the f = 0 point of any sweep exactly.
  std::map<std::pair<DeviceId, Behavior>, int> counts;
  for (const DeviceId device : trainers) {
    counts[{device, Behavior::normal}] +=
        kSlotsPerDevice * (q.train + q.val) + added_val_reserve;
    if (!anomaly) {
      counts[{device, Behavior::delay}] += q.train + q.val;
      counts[{device, Behavior::freeze}] += q.train + q.val;
      counts[{device, Behavior::noise}] += q.train + q.val;
    }
  }
  if (anomaly) {
    // injection reserve for every participant that could be compromised
    for (int i = 0; i < honest_count; ++i) {
      counts[{trainers[i / kSlotsPerDevice], cycle[i % cycle.size()]}] +=
          q.train;
    }
  }
  for (const DeviceId device : evaluated) {
    for (const Behavior b : data::kAllBehaviors) {
      counts[{device, b}] += q.test;
    }
  }

  RecordList generated;
  if (plan.dataset == nullptr) {
    generated =
        data::synthesize_counts(plan.spec, counts, root.split("data").base_seed());
  }
  const RecordList& everything = plan.dataset ? *plan.dataset : generated;

  std::map<DeviceId, RecordList> by_device;
  for (const auto& record : everything) by_device[record.device].push_back(record);

  BuiltScenario built;
  std::vector<WorkingMember> members;
  std::map<DeviceId, RecordList> leftovers;

  for (const DeviceId device : trainers) {
    const bool device_evaluated =
        std::find(evaluated.begin(), evaluated.end(), device) != evaluated.end();
    data::SplitSpec split_spec;
    split_spec.seed = root.split("partition", device_ordinal(device)).base_seed();
    const int test_here = device_evaluated ? q.test : 0;
    split_spec.quotas[Behavior::normal] = {kSlotsPerDevice * q.train,
                                           kSlotsPerDevice * q.val, test_here};
    for (const Behavior b : data::kAllBehaviors) {
      if (b == Behavior::normal) continue;
      const bool slot_trained =
          !anomaly && (b == Behavior::delay || b == Behavior::freeze ||
                       b == Behavior::noise);
      data::SplitQuota quota{0, 0, 0};
      if (slot_trained) {
        quota.train = q.train;
        quota.val = q.val;
      }
      quota.test = test_here;
      split_spec.quotas[b] = quota;
    }
    data::SplitResult split;
    try {
      split = data::split(by_device[device], split_spec);
    } catch (const QuotaError& e) {
      throw QuotaError(std::string(data::to_string(device)) + ": " + e.what());
    }
    leftovers[device] = split.leftover;
    for (const auto& record : split.test) built.test_records.push_back(record);

    for (int slot = 0; slot < kSlotsPerDevice; ++slot) {
      WorkingMember member;
      member.info.device = device;
      member.info.slot = slot;
      if (anomaly) {
        member.train =
            behavior_shard(split.train, Behavior::normal, slot, kSlotsPerDevice);
        member.val =
            behavior_shard(split.val, Behavior::normal, slot, kSlotsPerDevice);
      } else {
        for (const Behavior b : slot_behaviors(slot)) {
          RecordList train_rows =
              b == Behavior::normal
                  ? behavior_shard(split.train, b, slot, kSlotsPerDevice)
                  : behavior_rows(split.train, b);
          RecordList val_rows =
              b == Behavior::normal
                  ? behavior_shard(split.val, b, slot, kSlotsPerDevice)
                  : behavior_rows(split.val, b);
          member.train.insert(member.train.end(), train_rows.begin(),
                              train_rows.end());
          member.val.insert(member.val.end(), val_rows.begin(), val_rows.end());
        }
      }
      members.push_back(std::move(member));
    }
  }

  // Held-out devices contribute only test rows.
  for (const DeviceId device : evaluated) {
    if (std::find(trainers.begin(), trainers.end(), device) != trainers.end()) {
      continue;
    }
    for (const auto& record : by_device[device]) {
      built.test_records.push_back(record);
    }
  }

  // Data poisoning compromises the first adversaries' own datasets.
  if (attack == adv::AttackKind::behavior_injection) {
    for (int i = 0; i < plan.adversaries; ++i) {
      WorkingMember& member = members[i];
      const Behavior injected = cycle[i % cycle.size()];
      Rng sampler = root.split("inject", static_cast<std::uint64_t>(i));
      member.train = adv::inject_behavior(leftovers[member.info.device],
                                          injected, q.train, sampler);
      member.info.compromise = attack;
      member.info.injected = injected;
    }
  } else if (attack == adv::AttackKind::label_flipping) {
    for (int i = 0; i < plan.adversaries; ++i) {
      members[i].info.compromise = attack;
      members[i].info.flipped = adv::flip_targets(i);
    }
  }

  // Model poisoning adds new participants carrying only validation data.
  if (adv::is_model_poisoning(attack)) {
    std::map<DeviceId, int> added_here;
    for (int j = 0; j < plan.adversaries; ++j) {
      added_here[trainers[j % trainers.size()]] += 1;
    }
    std::map<DeviceId, RecordList> drawn;
    for (const auto& [device, how_many] : added_here) {
      Rng sampler = root.split("added_val", device_ordinal(device));
      drawn[device] =
          adv::sample_behavior(leftovers[device], Behavior::normal,
                               static_cast<std::size_t>(how_many) * q.val, sampler);
    }
    std::map<DeviceId, int> used;
    for (int j = 0; j < plan.adversaries; ++j) {
      const DeviceId device = trainers[j % trainers.size()];
      WorkingMember member;
      member.info.device = device;
      member.info.slot = -1;
      member.info.role = attack == adv::AttackKind::model_canceling
                             ? fed::Role::canceling
                             : fed::Role::random_weights;
      member.info.compromise = attack;
      const int offset = used[device]++ * q.val;
      member.val.assign(drawn[device].begin() + offset,
                        drawn[device].begin() + offset + q.val);
      member.weight = q.train;
      members.push_back(std::move(member));
    }
  }

  // Federated preprocessing: every member filters its own rows, the
  // summaries are pooled for the correlation filter, and the min-max plan
  // merges the per-member extrema. Test rows are never filtered.
  std::vector<data::CorrelationSummary> summaries;
  std::vector<RecordList> member_pools(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    auto [train_kept, val_kept] =
        data::zscore_outlier_filter(members[i].train, members[i].val);
    members[i].train = std::move(train_kept.records);
    members[i].val = std::move(val_kept.records);
    RecordList& pool = member_pools[i];
    pool = members[i].train;
    pool.insert(pool.end(), members[i].val.begin(), members[i].val.end());
    if (!pool.empty()) {
      summaries.push_back(data::summarize_for_correlation(pool));
    }
  }
  const std::vector<int> kept =
      data::correlation_filter(data::merge(summaries));
  std::vector<data::MinMaxReport> extrema;
  for (const RecordList& pool : member_pools) {
    if (!pool.empty()) extrema.push_back(data::local_minmax(pool, kept));
  }
  built.feature_plan = data::federated_minmax(kept, extrema);

  for (auto& member : members) {
    fed::Participant participant;
    participant.role = member.info.role;
    participant.overstate = adv::is_model_poisoning(member.info.compromise) &&
                            plan.overstate_thresholds;
    participant.weight = member.weight;
    participant.data.train_x = data::scale_matrix(member.train, built.feature_plan);
    participant.data.val_x = data::scale_matrix(member.val, built.feature_plan);
    if (!anomaly) {
      const std::vector<double> train_labels =
          adv::poisoned_labels(member.train, member.info.flipped);
      const std::vector<double> val_labels =
          adv::poisoned_labels(member.val, member.info.flipped);
      participant.data.train_y = Eigen::Map<const Eigen::MatrixXd>(
          train_labels.data(), train_labels.size(), 1);
      participant.data.val_y = Eigen::Map<const Eigen::MatrixXd>(
          val_labels.data(), val_labels.size(), 1);
    }
    built.participants.push_back(std::move(participant));
    built.members.push_back(member.info);
  }

  built.test_x = data::scale_matrix(built.test_records, built.feature_plan);

  built.federation = plan.federation;
  built.federation.model =
      anomaly ? nn::ModelKind::autoencoder : nn::ModelKind::mlp;
  built.federation.input_dim =
      static_cast<int>(built.feature_plan.kept_indices.size());
  return built;
}

CellResult run_cell(const RunPlan& plan) {
  const BuiltScenario built = build(plan);
  const fed::GlobalModelState state =
      fed::run(built.federation, built.participants);

  eval::Detector detector;
  if (built.federation.model == nn::ModelKind::autoencoder) {
    detector = eval::AnomalyDetector{state.model, state.federated_threshold};
  } else {
    detector = eval::BinaryDetector{state.model};
  }

  CellResult cell;
  cell.rule = built.federation.rule;
  cell.attack = plan.adversaries > 0 ? plan.attack : adv::AttackKind::none;
  cell.adversaries = plan.adversaries;
  cell.federated_threshold = state.federated_threshold;
  cell.reported_thresholds = state.reported_thresholds;
  cell.rounds = state.rounds;
  cell.report = eval::evaluate(detector, built.test_records, built.test_x);
  return cell;
}

CentralizedResult run_centralized(const RunPlan& plan) {
  const BuiltScenario built = build(plan);

  Eigen::Index train_rows = 0;
  Eigen::Index val_rows = 0;
  for (const auto& participant : built.participants) {
    train_rows += participant.data.train_x.rows();
    val_rows += participant.data.val_x.rows();
  }
  const Eigen::Index width = built.federation.input_dim;
  const bool anomaly = built.federation.model == nn::ModelKind::autoencoder;

  fed::ParticipantData pooled;
  pooled.train_x.resize(train_rows, width);
  pooled.val_x.resize(val_rows, width);
  if (!anomaly) {
    pooled.train_y.resize(train_rows, 1);
    pooled.val_y.resize(val_rows, 1);
  }
  Eigen::Index train_at = 0;
  Eigen::Index val_at = 0;
  for (const auto& participant : built.participants) {
    const Eigen::Index t = participant.data.train_x.rows();
    const Eigen::Index v = participant.data.val_x.rows();
    pooled.train_x.middleRows(train_at, t) = participant.data.train_x;
    pooled.val_x.middleRows(val_at, v) = participant.data.val_x;
    if (!anomaly) {
      pooled.train_y.middleRows(train_at, t) = participant.data.train_y;
      pooled.val_y.middleRows(val_at, v) = participant.data.val_y;
    }
    train_at += t;
    val_at += v;
  }

  const Rng root(built.federation.seed);
  Rng init_rng = root.split("init");
  const int hidden =
      built.federation.hidden_dim > 0
          ? built.federation.hidden_dim
          : (anomaly ? nn::kAutoencoderHidden : nn::kMlpHidden);
  const nn::ModelParams start = nn::build_model(
      built.federation.model, built.federation.input_dim, hidden, init_rng);

  fed::FederationConfig solo = built.federation;
  solo.local_epochs = built.federation.rounds * built.federation.local_epochs;
  const fed::ClientUpdateResult trained =
      fed::client_update(start, pooled, solo, root.split("central"));
  const nn::ModelParams model = nn::unflatten(trained.params);

  CentralizedResult result;
  eval::Detector detector;
  if (anomaly) {
    result.threshold = fed::local_threshold(model, pooled.val_x);
    detector = eval::AnomalyDetector{model, result.threshold};
  } else {
    result.threshold = std::numeric_limits<double>::quiet_NaN();
    detector = eval::BinaryDetector{model};
  }
  result.report = eval::evaluate(detector, built.test_records, built.test_x);
  return result;
}

std::vector<CellResult> run_sweep(const SweepSpec& sweep) {
  if (sweep.rules.empty() || sweep.adversary_counts.empty()) {
    throw ConfigError("a sweep needs at least one rule and one adversary count");
  }
  std::vector<CellResult> cells;
  for (const agg::Rule rule : sweep.rules) {
    for (const int adversaries : sweep.adversary_counts) {
      RunPlan plan = sweep.base;
      plan.federation.rule = rule;
      plan.adversaries = adversaries;
      cells.push_back(run_cell(plan));
    }
  }
  return cells;
}

namespace {

nlohmann::json cell_to_json(const CellResult& cell) {
  nlohmann::json doc;
  doc["rule"] = std::string(agg::to_string(cell.rule));
  doc["attack"] = std::string(adv::to_string(cell.attack));
  doc["adversaries"] = cell.adversaries;
  if (std::isnan(cell.federated_threshold)) {
    doc["federated_threshold"] = nullptr;
  } else {
    doc["federated_threshold"] = cell.federated_threshold;
  }
  doc["reported_thresholds"] = cell.reported_thresholds;
  doc["rounds"] = nlohmann::json::array();
  for (const auto& trace : cell.rounds) {
    doc["rounds"].push_back({{"round", trace.round},
                             {"selected", trace.selected},
                             {"mean_val_loss", trace.mean_val_loss},
                             {"update_norm", trace.update_norm}});
  }
  doc["evaluation"] = nlohmann::json::parse(cell.report.to_json_text());
  return doc;
}

// Non-finite doubles serialize as null, which a poisoned run produces
// legitimately.
double double_or_nan(const nlohmann::json& value) {
  return value.is_null() ? std::numeric_limits<double>::quiet_NaN()
                         : value.get<double>();
}

CellResult cell_from_json_doc(const nlohmann::json& doc) {
  CellResult cell;
  cell.rule = agg::rule_from_string(doc.at("rule").get<std::string>());
  cell.attack = adv::attack_from_string(doc.at("attack").get<std::string>());
  cell.adversaries = doc.at("adversaries").get<int>();
  cell.federated_threshold = double_or_nan(doc.at("federated_threshold"));
  for (const auto& entry : doc.at("reported_thresholds")) {
    cell.reported_thresholds.push_back(double_or_nan(entry));
  }
  for (const auto& entry : doc.at("rounds")) {
    fed::RoundTrace trace;
    trace.round = entry.at("round").get<int>();
    trace.selected = entry.at("selected").get<std::vector<int>>();
    trace.mean_val_loss = double_or_nan(entry.at("mean_val_loss"));
    trace.update_norm = double_or_nan(entry.at("update_norm"));
    cell.rounds.push_back(std::move(trace));
  }
  cell.report = eval::EvaluationReport::from_json_text(doc.at("evaluation").dump());
  return cell;
}

}  // namespace

std::string to_json_text(const CellResult& cell) {
  return cell_to_json(cell).dump(2);
}

std::string to_json_text(std::span<const CellResult> cells) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& cell : cells) doc.push_back(cell_to_json(cell));
  return doc.dump(2);
}

CellResult cell_from_json(const std::string& text) {
  try {
    return cell_from_json_doc(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cell result: ") + e.what());
  }
}

}  // namespace fedspectre::scenario
