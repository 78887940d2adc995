#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "fedspectre/data.hpp"
#include "fedspectre/nn.hpp"
#include "fedspectre/rng.hpp"

namespace fedspectre::adv {

enum class AttackKind {
  none,
  behavior_injection,
  label_flipping,
  model_canceling,
  random_weights,
};

inline constexpr std::array<AttackKind, 5> kAllAttackKinds = {
    AttackKind::none, AttackKind::behavior_injection, AttackKind::label_flipping,
    AttackKind::model_canceling, AttackKind::random_weights};

std::string_view to_string(AttackKind kind);
AttackKind attack_from_string(std::string_view text);

// The data poisoning attacks replace compromised participants' training
// data; the model poisoning attacks replace their submitted updates and
// are mounted from extra participants joining the federation.
bool is_data_poisoning(AttackKind kind);
bool is_model_poisoning(AttackKind kind);

// Fixed per-adversary assignments, cycling after four.
data::Behavior injected_behavior(int adversary_index);
std::vector<data::Behavior> flip_targets(int adversary_index);

// Draws `count` records of `behavior` from the pool without replacement;
// QuotaError if the pool cannot supply them.
data::RecordList sample_behavior(const data::RecordList& pool,
                                 data::Behavior behavior, std::size_t count,
                                 Rng& rng);

// Sampled attack records presented as normal traffic. An autoencoder
// trained on them learns to reconstruct the attack.
data::RecordList inject_behavior(const data::RecordList& pool,
                                 data::Behavior behavior, std::size_t count,
                                 Rng& rng);

/**
 * Binary labels (1 = attack) with the listed behaviors flipped. An empty
 * flip set yields the honest labels.
 */
std::vector<double> poisoned_labels(const data::RecordList& records,
                                    std::span<const data::Behavior> flipped);

/**
 * Update crafted so that `adversaries` copies of it cancel the honest mass
 * under equally weighted averaging over `total_clients` participants:
 * alpha * w_global with alpha = (f - K) / f.
 */
nn::ParameterVector cancel_update(const nn::ParameterVector& global,
                                  int total_clients, int adversaries);

// Every coordinate drawn from N(0, 3^2).
nn::ParameterVector random_update(const nn::ParameterVector& global, Rng& rng);

// Reported anomaly threshold inflated into [1e6, 1e9].
double overstate_threshold(Rng& rng);

}  // namespace fedspectre::adv
