#pragma once

#include <array>
#include <span>
#include <string_view>

#include "fedspectre/nn.hpp"

namespace fedspectre::agg {

enum class Rule { fed_avg, trimmed_mean_1, trimmed_mean_2, median };

inline constexpr std::array<Rule, 4> kAllRules = {
    Rule::fed_avg, Rule::trimmed_mean_1, Rule::trimmed_mean_2, Rule::median};

std::string_view to_string(Rule rule);
Rule rule_from_string(std::string_view text);

// Updates removed from each end per coordinate (0 for the mean rules).
int trim_count(Rule rule);
// Smallest participant count the rule is defined for.
int min_participants(Rule rule);

/**
 * Weighted coordinate-wise mean, weights proportional to each
 * participant's training row count. ProtocolError on empty input, layout
 * disagreement, or a non-positive weight total.
 */
nn::ParameterVector fed_avg(std::span<const nn::ParameterVector> updates,
                            std::span<const double> weights);

/**
 * Per coordinate: sort the submitted values, drop the `trim` smallest and
 * `trim` largest, average the rest without weights. Needs 2 * trim < n.
 */
nn::ParameterVector trimmed_mean(std::span<const nn::ParameterVector> updates,
                                 int trim);

// Per-coordinate median; an even count averages the two middle values.
nn::ParameterVector coordinate_median(std::span<const nn::ParameterVector> updates);

// Weights are only consulted by the fed_avg rule.
nn::ParameterVector aggregate(Rule rule,
                              std::span<const nn::ParameterVector> updates,
                              std::span<const double> weights);

}  // namespace fedspectre::agg
