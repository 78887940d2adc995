#include "fedspectre/aggregation.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace fedspectre::agg {
namespace {

void check_compatible(std::span<const nn::ParameterVector> updates) {
  if (updates.empty()) throw ProtocolError("no updates to aggregate");
  for (const auto& update : updates) {
    if (!(update.layout == updates[0].layout) ||
        update.values.size() != updates[0].values.size()) {
      throw ProtocolError("updates disagree on the parameter layout");
    }
  }
}

}  // namespace

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::fed_avg: return "fed_avg";
    case Rule::trimmed_mean_1: return "trimmed_mean_1";
    case Rule::trimmed_mean_2: return "trimmed_mean_2";
    case Rule::median: return "median";
  }
  return "unknown";
}

Rule rule_from_string(std::string_view text) {
  for (const Rule rule : kAllRules) {
    if (text == to_string(rule)) return rule;
  }
  throw ParseError("unknown aggregation rule '" + std::string(text) + "'");
}

int trim_count(Rule rule) {
  switch (rule) {
    case Rule::trimmed_mean_1: return 1;
    case Rule::trimmed_mean_2: return 2;
    default: return 0;
  }
}

int min_participants(Rule rule) {
  return 2 * trim_count(rule) + 1;
}

nn::ParameterVector fed_avg(std::span<const nn::ParameterVector> updates,
                            std::span<const double> weights) {
  check_compatible(updates);
  if (weights.size() != updates.size()) {
    throw ProtocolError("need one weight per update");
  }
  double total = 0.0;
  for (const double w : weights) {
    if (w < 0.0) throw ProtocolError("negative aggregation weight");
    total += w;
  }
  if (!(total > 0.0)) throw ProtocolError("aggregation weights sum to zero");

  nn::ParameterVector out;
  out.layout = updates[0].layout;
  out.values = Eigen::VectorXd::Zero(updates[0].values.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    out.values += (weights[i] / total) * updates[i].values;
  }
  return out;
}

nn::ParameterVector trimmed_mean(std::span<const nn::ParameterVector> updates,
                                 int trim) {
  check_compatible(updates);
  if (trim < 0) throw ProtocolError("trim count must not be negative");
  const int n = static_cast<int>(updates.size());
  if (2 * trim >= n) {
    throw ProtocolError("trimming " + std::to_string(trim) +
                        " from each end leaves nothing of " +
                        std::to_string(n) + " updates");
  }

  nn::ParameterVector out;
  out.layout = updates[0].layout;
  out.values.resize(updates[0].values.size());
  std::vector<double> column(updates.size());
  for (Eigen::Index j = 0; j < out.values.size(); ++j) {
    for (int i = 0; i < n; ++i) column[i] = updates[i].values[j];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (int i = trim; i < n - trim; ++i) sum += column[i];
    out.values[j] = sum / (n - 2 * trim);
  }
  return out;
}

nn::ParameterVector coordinate_median(
    std::span<const nn::ParameterVector> updates) {
  check_compatible(updates);
  const int n = static_cast<int>(updates.size());

  nn::ParameterVector out;
  out.layout = updates[0].layout;
  out.values.resize(updates[0].values.size());
  std::vector<double> column(updates.size());
  for (Eigen::Index j = 0; j < out.values.size(); ++j) {
    for (int i = 0; i < n; ++i) column[i] = updates[i].values[j];
    std::sort(column.begin(), column.end());
    out.values[j] = (n % 2 == 1)
                        ? column[n / 2]
                        : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

nn::ParameterVector aggregate(Rule rule,
                              std::span<const nn::ParameterVector> updates,
                              std::span<const double> weights) {
  switch (rule) {
    case Rule::fed_avg: return fed_avg(updates, weights);
    case Rule::trimmed_mean_1: return trimmed_mean(updates, 1);
    case Rule::trimmed_mean_2: return trimmed_mean(updates, 2);
    case Rule::median: return coordinate_median(updates);
  }
  throw ProtocolError("unknown aggregation rule");
}

}  // namespace fedspectre::agg
