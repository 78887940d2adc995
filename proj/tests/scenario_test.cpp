#include "fedspectre/scenario.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace fedspectre;
using scenario::RunPlan;
using scenario::ScenarioId;
using scenario::TransferPairing;

namespace {

RunPlan quick_plan(ScenarioId id) {
  RunPlan plan;
  plan.scenario = id;
  plan.federation.rounds = 2;
  plan.federation.local_epochs = 1;
  plan.federation.seed = 11;
  return plan;
}

}  // namespace

TEST_CASE("scenario names round trip") {
  for (const ScenarioId id : scenario::kAllScenarios) {
    CHECK(scenario::scenario_from_string(scenario::to_string(id)) == id);
  }
  for (const TransferPairing pairing : scenario::kAllPairings) {
    CHECK(scenario::pairing_from_string(scenario::to_string(pairing)) == pairing);
  }
  CHECK_THROWS_AS(scenario::scenario_from_string("anomaly"), ParseError);
  CHECK_THROWS_AS(scenario::pairing_from_string("rpi5"), ParseError);

  CHECK(scenario::is_anomaly(ScenarioId::anomaly_transfer));
  CHECK_FALSE(scenario::is_anomaly(ScenarioId::binary_fleet));
  CHECK(scenario::is_transfer(ScenarioId::binary_transfer));
}

TEST_CASE("quotas and device lists") {
  const auto anomaly = scenario::quotas_for(ScenarioId::anomaly_fleet, false);
  CHECK(anomaly.train == 300);
  CHECK(anomaly.val == 50);
  CHECK(anomaly.test == 75);
  const auto full = scenario::quotas_for(ScenarioId::anomaly_transfer, true);
  CHECK(full.train == 1500);
  CHECK(full.val == 150);
  const auto binary = scenario::quotas_for(ScenarioId::binary_fleet, true);
  CHECK(binary.train == 250);
  CHECK(binary.val == 25);
  CHECK(binary.test == 75);

  using data::DeviceId;
  const auto fleet = scenario::train_devices(ScenarioId::anomaly_fleet,
                                             TransferPairing::holdout_rpi3);
  CHECK(fleet == std::vector<DeviceId>{DeviceId::rpi3, DeviceId::rpi4_1,
                                       DeviceId::rpi4_3});
  CHECK(scenario::eval_devices(ScenarioId::binary_fleet,
                               TransferPairing::holdout_rpi3) ==
        std::vector<DeviceId>{DeviceId::rpi3, DeviceId::rpi4_1,
                              DeviceId::rpi4_2, DeviceId::rpi4_3});

  CHECK(scenario::train_devices(ScenarioId::anomaly_transfer,
                                TransferPairing::holdout_rpi4_4gb) ==
        std::vector<DeviceId>{DeviceId::rpi3, DeviceId::rpi4_1});
  CHECK(scenario::eval_devices(ScenarioId::anomaly_transfer,
                               TransferPairing::holdout_rpi4_4gb) ==
        std::vector<DeviceId>{DeviceId::rpi4_3});
  CHECK(scenario::eval_devices(ScenarioId::binary_transfer,
                               TransferPairing::holdout_rpi4_2gb) ==
        std::vector<DeviceId>{DeviceId::rpi4_1, DeviceId::rpi4_2});
  CHECK(scenario::eval_devices(ScenarioId::anomaly_transfer,
                               TransferPairing::holdout_rpi3) ==
        std::vector<DeviceId>{DeviceId::rpi3});
}

TEST_CASE("fleet build shape") {
  const auto built = scenario::build(quick_plan(ScenarioId::anomaly_fleet));

  REQUIRE(built.participants.size() == 12);
  REQUIRE(built.members.size() == 12);
  CHECK(built.feature_plan.kept_indices.size() == 68);
  CHECK(built.federation.model == nn::ModelKind::autoencoder);
  CHECK(built.federation.input_dim == 68);

  std::map<data::DeviceId, int> per_device;
  for (std::size_t i = 0; i < built.members.size(); ++i) {
    const auto& member = built.members[i];
    CHECK(member.role == fed::Role::honest);
    CHECK(member.compromise == adv::AttackKind::none);
    CHECK(member.slot == static_cast<int>(i) % 4);
    per_device[member.device] += 1;

    const auto& participant = built.participants[i];
    // the outlier filter trims a noticeable share of rows
    CHECK(participant.data.train_x.rows() >= 230);
    CHECK(participant.data.train_x.rows() <= 300);
    CHECK(participant.data.val_x.rows() >= 35);
    CHECK(participant.data.val_x.rows() <= 50);
    CHECK(participant.data.train_x.cols() == 68);
    CHECK(participant.data.train_y.size() == 0);
  }
  CHECK(per_device.size() == 3);
  for (const auto& [device, count] : per_device) CHECK(count == 4);

  // all four devices are tested, including the one never trained on
  CHECK(built.test_records.size() == 4 * 10 * 75);
  CHECK(built.test_x.rows() == static_cast<Eigen::Index>(built.test_records.size()));
  CHECK(built.test_x.cols() == 68);

  std::set<data::Behavior> behaviors;
  std::set<data::DeviceId> tested;
  for (const auto& record : built.test_records) {
    behaviors.insert(record.behavior);
    tested.insert(record.device);
  }
  CHECK(behaviors.size() == 10);
  CHECK(tested.size() == 4);
  CHECK(tested.count(data::DeviceId::rpi4_2) == 1);
  CHECK(per_device.count(data::DeviceId::rpi4_2) == 0);
}

TEST_CASE("build is deterministic") {
  const auto a = scenario::build(quick_plan(ScenarioId::anomaly_fleet));
  const auto b = scenario::build(quick_plan(ScenarioId::anomaly_fleet));
  REQUIRE(a.participants.size() == b.participants.size());
  for (std::size_t i = 0; i < a.participants.size(); ++i) {
    CHECK(a.participants[i].data.train_x == b.participants[i].data.train_x);
    CHECK(a.participants[i].data.val_x == b.participants[i].data.val_x);
  }
  CHECK(a.test_x == b.test_x);
  CHECK(a.feature_plan.kept_indices == b.feature_plan.kept_indices);
}

TEST_CASE("binary build labels follow the slot mix") {
  const auto built = scenario::build(quick_plan(ScenarioId::binary_fleet));
  REQUIRE(built.participants.size() == 12);
  CHECK(built.federation.model == nn::ModelKind::mlp);

  for (std::size_t i = 0; i < built.participants.size(); ++i) {
    const auto& participant = built.participants[i];
    const int slot = built.members[i].slot;
    REQUIRE(participant.data.train_y.rows() == participant.data.train_x.rows());
    REQUIRE(participant.data.val_y.rows() == participant.data.val_x.rows());
    const double attack_share =
        participant.data.train_y.sum() / participant.data.train_y.rows();
    if (slot == 0) {
      CHECK(attack_share == 0.0);
      CHECK(participant.data.train_x.rows() <= 250);
    } else {
      // the paired attack behavior roughly doubles the slot's data
      CHECK(attack_share > 0.3);
      CHECK(attack_share < 0.7);
      CHECK(participant.data.train_x.rows() > 350);
    }
  }
}

TEST_CASE("transfer build holds out the evaluation device") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_transfer);
  plan.pairing = TransferPairing::holdout_rpi3;
  const auto built = scenario::build(plan);

  REQUIRE(built.participants.size() == 8);
  for (const auto& member : built.members) {
    CHECK(member.device != data::DeviceId::rpi3);
  }
  CHECK(built.test_records.size() == 10 * 75);
  for (const auto& record : built.test_records) {
    CHECK(record.device == data::DeviceId::rpi3);
  }

  plan.pairing = TransferPairing::holdout_rpi4_2gb;
  const auto wide = scenario::build(plan);
  CHECK(wide.test_records.size() == 2 * 10 * 75);
  std::set<data::DeviceId> seen;
  for (const auto& record : wide.test_records) seen.insert(record.device);
  CHECK(seen == std::set<data::DeviceId>{data::DeviceId::rpi4_1,
                                         data::DeviceId::rpi4_2});
}

TEST_CASE("behavior injection compromises the leading participants") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  plan.attack = adv::AttackKind::behavior_injection;
  plan.adversaries = 3;
  const auto built = scenario::build(plan);

  REQUIRE(built.participants.size() == 12);
  CHECK(built.members[0].compromise == adv::AttackKind::behavior_injection);
  CHECK(built.members[0].injected == data::Behavior::spoof);
  CHECK(built.members[1].injected == data::Behavior::mimic);
  CHECK(built.members[2].injected == data::Behavior::delay);
  CHECK(built.members[3].compromise == adv::AttackKind::none);

  // the poisoned training rows keep honest row counts
  CHECK(built.participants[0].data.train_x.rows() >= 230);
  CHECK(built.participants[0].data.train_x.rows() <= 300);
  // validation stays honest benign data
  CHECK(built.participants[0].data.val_x.rows() >= 35);

  const auto clean = scenario::build(quick_plan(ScenarioId::anomaly_fleet));
  // generation and splits ignore the attack, so the raw test rows match
  REQUIRE(clean.test_records.size() == built.test_records.size());
  for (std::size_t i = 0; i < clean.test_records.size(); ++i) {
    CHECK(clean.test_records[i].features == built.test_records[i].features);
  }
}

TEST_CASE("model canceling adds participants") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  plan.attack = adv::AttackKind::model_canceling;
  plan.adversaries = 6;
  const auto built = scenario::build(plan);

  REQUIRE(built.participants.size() == 18);
  std::map<data::DeviceId, int> added;
  for (std::size_t i = 12; i < 18; ++i) {
    CHECK(built.members[i].slot == -1);
    CHECK(built.members[i].role == fed::Role::canceling);
    CHECK(built.participants[i].role == fed::Role::canceling);
    CHECK(built.participants[i].overstate);
    CHECK(built.participants[i].weight == 300.0);
    CHECK(built.participants[i].data.train_x.rows() == 0);
    CHECK(built.participants[i].data.val_x.rows() >= 35);
    CHECK(built.participants[i].data.val_x.rows() <= 50);
    added[built.members[i].device] += 1;
  }
  CHECK(added.size() == 3);
  for (const auto& [device, count] : added) CHECK(count == 2);

  plan.overstate_thresholds = false;
  const auto honest_reports = scenario::build(plan);
  for (const auto& participant : honest_reports.participants) {
    CHECK_FALSE(participant.overstate);
  }
}

TEST_CASE("attack and scenario mismatches are rejected") {
  RunPlan plan = quick_plan(ScenarioId::binary_fleet);
  plan.attack = adv::AttackKind::behavior_injection;
  plan.adversaries = 1;
  CHECK_THROWS_AS(scenario::build(plan), ConfigError);

  plan = quick_plan(ScenarioId::anomaly_fleet);
  plan.attack = adv::AttackKind::label_flipping;
  plan.adversaries = 1;
  CHECK_THROWS_AS(scenario::build(plan), ConfigError);

  plan = quick_plan(ScenarioId::anomaly_fleet);
  plan.attack = adv::AttackKind::behavior_injection;
  plan.adversaries = 13;
  CHECK_THROWS_AS(scenario::build(plan), ConfigError);

  plan.attack = adv::AttackKind::model_canceling;
  plan.adversaries = 7;
  CHECK_THROWS_AS(scenario::build(plan), ConfigError);

  plan.adversaries = -1;
  CHECK_THROWS_AS(scenario::build(plan), ConfigError);

  // zero adversaries neutralizes the attack kind entirely
  plan.attack = adv::AttackKind::label_flipping;
  plan.adversaries = 0;
  CHECK_NOTHROW(scenario::build(plan));
}

TEST_CASE("a clean cell equals the zero point of a sweep") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  const auto base = scenario::run_cell(plan);

  scenario::SweepSpec sweep;
  sweep.base = plan;
  sweep.base.attack = adv::AttackKind::model_canceling;
  sweep.rules = {agg::Rule::fed_avg};
  sweep.adversary_counts = {0};
  const auto cells = scenario::run_sweep(sweep);

  REQUIRE(cells.size() == 1);
  CHECK(scenario::to_json_text(cells[0]) == scenario::to_json_text(base));
  CHECK(cells[0].attack == adv::AttackKind::none);

  scenario::SweepSpec empty;
  empty.base = plan;
  CHECK_THROWS_AS(scenario::run_sweep(empty), ConfigError);
}

TEST_CASE("anomaly cell produces a usable report") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  const auto cell = scenario::run_cell(plan);

  CHECK(cell.rule == agg::Rule::fed_avg);
  CHECK(cell.adversaries == 0);
  CHECK(std::isfinite(cell.federated_threshold));
  CHECK(cell.federated_threshold > 0.0);
  CHECK(cell.reported_thresholds.size() == 12);
  CHECK(cell.rounds.size() == 2);
  CHECK(cell.rounds[0].selected.size() == 12);

  const auto counts = cell.report.overall();
  CHECK(counts.total() == 4 * 10 * 75);
  for (const data::Behavior behavior : data::kAllBehaviors) {
    CHECK_NOTHROW(cell.report.behavior_accuracy(behavior));
  }
}

TEST_CASE("binary cell reports per-device cells") {
  RunPlan plan = quick_plan(ScenarioId::binary_fleet);
  const auto cell = scenario::run_cell(plan);

  CHECK(std::isnan(cell.federated_threshold));
  CHECK(cell.reported_thresholds.empty());
  CHECK(cell.report.overall().total() == 4 * 10 * 75);
  CHECK_NOTHROW(cell.report.device_f1(data::DeviceId::rpi3));
  CHECK_NOTHROW(cell.report.device_f1(data::DeviceId::rpi4_2));
}

TEST_CASE("centralized twin trains on the pooled data") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  const auto central = scenario::run_centralized(plan);
  CHECK(std::isfinite(central.threshold));
  CHECK(central.threshold > 0.0);
  CHECK(central.report.overall().total() == 4 * 10 * 75);

  const auto again = scenario::run_centralized(plan);
  CHECK(again.threshold == central.threshold);
  CHECK(again.report.to_json_text() == central.report.to_json_text());
}

TEST_CASE("the injection rotation can be overridden") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  plan.attack = adv::AttackKind::behavior_injection;
  plan.adversaries = 2;
  plan.injection_cycle = {data::Behavior::freeze};
  const auto built = scenario::build(plan);
  CHECK(built.members[0].injected == data::Behavior::freeze);
  CHECK(built.members[1].injected == data::Behavior::freeze);

  plan.injection_cycle = {data::Behavior::normal};
  CHECK_THROWS_AS(scenario::build(plan), ConfigError);
}

TEST_CASE("records can come from a prepared dataset") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);

  // mirror the generation counts of a clean fleet build
  const auto trainers = scenario::train_devices(plan.scenario, plan.pairing);
  const auto evaluated = scenario::eval_devices(plan.scenario, plan.pairing);
  const std::array<data::Behavior, 4> rotation = {
      data::Behavior::spoof, data::Behavior::mimic, data::Behavior::delay,
      data::Behavior::disorder};
  std::map<std::pair<data::DeviceId, data::Behavior>, int> counts;
  for (const data::DeviceId device : trainers) {
    counts[{device, data::Behavior::normal}] += 4 * (300 + 50) + 2 * 50;
  }
  for (int i = 0; i < 12; ++i) {
    counts[{trainers[i / 4], rotation[i % 4]}] += 300;
  }
  for (const data::DeviceId device : evaluated) {
    for (const data::Behavior b : data::kAllBehaviors) {
      counts[{device, b}] += 75;
    }
  }
  const Rng root(plan.federation.seed);
  const data::RecordList dataset = data::synthesize_counts(
      plan.spec, counts, root.split("data").base_seed());

  RunPlan from_dataset = plan;
  from_dataset.dataset = &dataset;
  const auto direct = scenario::build(plan);
  const auto loaded = scenario::build(from_dataset);
  REQUIRE(direct.participants.size() == loaded.participants.size());
  for (std::size_t i = 0; i < direct.participants.size(); ++i) {
    CHECK(direct.participants[i].data.train_x ==
          loaded.participants[i].data.train_x);
  }
  CHECK(direct.test_x == loaded.test_x);

  // a dataset that cannot satisfy the quotas names the starved device
  const data::RecordList tiny(dataset.begin(), dataset.begin() + 500);
  RunPlan starved = plan;
  starved.dataset = &tiny;
  CHECK_THROWS_WITH_AS(scenario::build(starved),
                       doctest::Contains("RPi"), QuotaError);
}

TEST_CASE("cell results round trip through json") {
  RunPlan plan = quick_plan(ScenarioId::anomaly_fleet);
  plan.attack = adv::AttackKind::model_canceling;
  plan.adversaries = 2;
  const auto cell = scenario::run_cell(plan);

  const std::string text = scenario::to_json_text(cell);
  const auto parsed = scenario::cell_from_json(text);
  CHECK(parsed.rule == cell.rule);
  CHECK(parsed.attack == adv::AttackKind::model_canceling);
  CHECK(parsed.adversaries == 2);
  CHECK(parsed.reported_thresholds == cell.reported_thresholds);
  CHECK(parsed.rounds.size() == cell.rounds.size());
  CHECK(scenario::to_json_text(parsed) == text);

  const std::vector<scenario::CellResult> cells = {cell, parsed};
  const std::string list_text =
      scenario::to_json_text(std::span<const scenario::CellResult>(cells));
  CHECK(list_text.find("\"adversaries\"") != std::string::npos);

  CHECK_THROWS_AS(scenario::cell_from_json("{]"), ParseError);
  CHECK_THROWS_AS(scenario::cell_from_json("{}"), ParseError);
}
