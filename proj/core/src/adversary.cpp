#include "fedspectre/adversary.hpp"

#include <algorithm>
#include <string>

namespace fedspectre::adv {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::behavior_injection: return "behavior_injection";
    case AttackKind::label_flipping: return "label_flipping";
    case AttackKind::model_canceling: return "model_canceling";
    case AttackKind::random_weights: return "random_weights";
  }
  return "unknown";
}

AttackKind attack_from_string(std::string_view text) {
  for (const AttackKind kind : kAllAttackKinds) {
    if (text == to_string(kind)) return kind;
  }
  throw ParseError("unknown attack kind '" + std::string(text) + "'");
}

bool is_data_poisoning(AttackKind kind) {
  return kind == AttackKind::behavior_injection ||
         kind == AttackKind::label_flipping;
}

bool is_model_poisoning(AttackKind kind) {
  return kind == AttackKind::model_canceling ||
         kind == AttackKind::random_weights;
}

data::Behavior injected_behavior(int adversary_index) {
  static constexpr data::Behavior kCycle[4] = {
      data::Behavior::spoof, data::Behavior::mimic, data::Behavior::delay,
      data::Behavior::disorder};
  return kCycle[adversary_index % 4];
}

std::vector<data::Behavior> flip_targets(int adversary_index) {
  switch (adversary_index % 4) {
    case 0: return {data::Behavior::normal};
    case 1: return {data::Behavior::normal, data::Behavior::delay};
    case 2: return {data::Behavior::normal, data::Behavior::freeze};
    default: return {data::Behavior::normal, data::Behavior::noise};
  }
}

data::RecordList sample_behavior(const data::RecordList& pool,
                                 data::Behavior behavior, std::size_t count,
                                 Rng& rng) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].behavior == behavior) candidates.push_back(i);
  }
  if (candidates.size() < count) {
    throw QuotaError("pool has " + std::to_string(candidates.size()) + " " +
                     std::string(data::to_string(behavior)) +
                     " records, need " + std::to_string(count));
  }
  rng.shuffle(candidates);
  data::RecordList out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(pool[candidates[i]]);
  return out;
}

data::RecordList inject_behavior(const data::RecordList& pool,
                                 data::Behavior behavior, std::size_t count,
                                 Rng& rng) {
  data::RecordList records = sample_behavior(pool, behavior, count, rng);
  for (auto& record : records) record.behavior = data::Behavior::normal;
  return records;
}

std::vector<double> poisoned_labels(const data::RecordList& records,
                                    std::span<const data::Behavior> flipped) {
  std::vector<double> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool honest = data::is_attack(records[i].behavior);
    const bool flip = std::find(flipped.begin(), flipped.end(),
                                records[i].behavior) != flipped.end();
    labels[i] = (honest != flip) ? 1.0 : 0.0;
  }
  return labels;
}

nn::ParameterVector cancel_update(const nn::ParameterVector& global,
                                  int total_clients, int adversaries) {
  if (adversaries <= 0 || adversaries > total_clients) {
    throw ProtocolError("canceling needs 0 < adversaries <= clients");
  }
  const double alpha =
      static_cast<double>(adversaries - total_clients) / adversaries;
  nn::ParameterVector out;
  out.layout = global.layout;
  out.values = alpha * global.values;
  return out;
}

nn::ParameterVector random_update(const nn::ParameterVector& global, Rng& rng) {
  nn::ParameterVector out;
  out.layout = global.layout;
  out.values.resize(global.values.size());
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    out.values[i] = rng.normal(0.0, 3.0);
  }
  return out;
}

double overstate_threshold(Rng& rng) {
  return rng.uniform(1e6, 1e9);
}

}  // namespace fedspectre::adv
