#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedspectre/adversary.hpp"
#include "fedspectre/evaluation.hpp"
#include "fedspectre/federation.hpp"
#include "fedspectre/synthetic.hpp"

namespace fedspectre::scenario {

/**
 * The four experiment shapes. Fleet runs train four participants on each
 * of RPi3, RPi4_1 and RPi4_3 and evaluate on all four devices, so RPi4_2
 * probes an unseen unit of a seen type; transfer runs train on two devices
 * and evaluate only on the held-out ones. Anomaly runs train the
 * autoencoder on benign traffic; binary runs train the classifier on
 * labeled mixes.
 */
enum class ScenarioId {
  anomaly_fleet,
  anomaly_transfer,
  binary_fleet,
  binary_transfer,
};

inline constexpr std::array<ScenarioId, 4> kAllScenarios = {
    ScenarioId::anomaly_fleet, ScenarioId::anomaly_transfer,
    ScenarioId::binary_fleet, ScenarioId::binary_transfer};

std::string_view to_string(ScenarioId id);
ScenarioId scenario_from_string(std::string_view text);
bool is_anomaly(ScenarioId id);
bool is_transfer(ScenarioId id);

// Which devices a transfer run holds out for evaluation.
enum class TransferPairing { holdout_rpi4_4gb, holdout_rpi4_2gb, holdout_rpi3 };

inline constexpr std::array<TransferPairing, 3> kAllPairings = {
    TransferPairing::holdout_rpi4_4gb, TransferPairing::holdout_rpi4_2gb,
    TransferPairing::holdout_rpi3};

std::string_view to_string(TransferPairing pairing);
TransferPairing pairing_from_string(std::string_view text);

std::vector<data::DeviceId> train_devices(ScenarioId id, TransferPairing pairing);
std::vector<data::DeviceId> eval_devices(ScenarioId id, TransferPairing pairing);

// Per-participant rows for one behavior.
struct CellQuotas {
  int train = 0;
  int val = 0;
  int test = 0;
};

// paper_scale swaps the bench-sized anomaly quotas (300/50/75) for the
// full-sized ones (1500/150/75); the binary quotas are 250/25/75 either way.
CellQuotas quotas_for(ScenarioId id, bool paper_scale);

struct RunPlan {
  ScenarioId scenario = ScenarioId::anomaly_fleet;
  TransferPairing pairing = TransferPairing::holdout_rpi4_4gb;
  adv::AttackKind attack = adv::AttackKind::none;
  int adversaries = 0;
  // Model poisoning adversaries also fabricate their reported thresholds
  // unless this is off.
  bool overstate_thresholds = true;
  bool paper_scale = false;
  // Overrides the default spoof/mimic/delay/disorder injection rotation.
  // Entries must be attack behaviors; policy on stealthy choices (freeze,
  // repeat) is left to the caller.
  std::vector<data::Behavior> injection_cycle;
  data::SyntheticSpec spec = data::SyntheticSpec::desk_default();
  // When set, these records are partitioned instead of synthesizing from
  // the spec. The list must outlive the run.
  const data::RecordList* dataset = nullptr;
  // model, input_dim and hidden_dim are derived from the scenario; the
  // remaining knobs (rounds, epochs, rule, seed, ...) are taken as given.
  fed::FederationConfig federation;
};

// How one federation member was set up; added model poisoning members sit
// after the honest ones with slot -1.
struct MemberInfo {
  data::DeviceId device = data::DeviceId::rpi3;
  int slot = -1;
  fed::Role role = fed::Role::honest;
  adv::AttackKind compromise = adv::AttackKind::none;
  data::Behavior injected = data::Behavior::normal;
  std::vector<data::Behavior> flipped;
};

/**
 * Everything run_cell derives before training: the generated and scaled
 * participant data, the shared feature plan, the finalized federation
 * configuration and the untouched test set.
 */
struct BuiltScenario {
  std::vector<fed::Participant> participants;
  std::vector<MemberInfo> members;
  data::FeaturePlan feature_plan;
  data::RecordList test_records;
  Eigen::MatrixXd test_x;
  fed::FederationConfig federation;
};

BuiltScenario build(const RunPlan& plan);

struct CellResult {
  agg::Rule rule = agg::Rule::fed_avg;
  adv::AttackKind attack = adv::AttackKind::none;
  int adversaries = 0;
  double federated_threshold = 0.0;
  std::vector<double> reported_thresholds;
  std::vector<fed::RoundTrace> rounds;
  eval::EvaluationReport report;
};

// One full pipeline pass: synthesize, poison, preprocess, federate,
// evaluate. A plan without adversaries is byte-identical to the same plan
// inside a sweep.
CellResult run_cell(const RunPlan& plan);

// The same data trained as one pool for rounds * local_epochs epochs from
// the same initial weights, with its own threshold.
struct CentralizedResult {
  double threshold = 0.0;
  eval::EvaluationReport report;
};

CentralizedResult run_centralized(const RunPlan& plan);

struct SweepSpec {
  RunPlan base;
  std::vector<agg::Rule> rules;
  std::vector<int> adversary_counts;
};

// Every (rule, adversary count) combination of the sweep, in order.
std::vector<CellResult> run_sweep(const SweepSpec& sweep);

std::string to_json_text(const CellResult& cell);
std::string to_json_text(std::span<const CellResult> cells);
CellResult cell_from_json(const std::string& text);

}  // namespace fedspectre::scenario
