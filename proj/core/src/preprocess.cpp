#include "fedspectre/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "fedspectre/rng.hpp"
#include "fedspectre/stats.hpp"

namespace fedspectre::data {

SplitResult split(const RecordList& records, const SplitSpec& spec) {
  std::map<Behavior, std::vector<std::size_t>> by_behavior;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_behavior[records[i].behavior].push_back(i);
  }

  const Rng root(spec.seed);
  SplitResult result;
  for (auto& [behavior, indices] : by_behavior) {
    const auto quota_it = spec.quotas.find(behavior);
    if (quota_it == spec.quotas.end()) {
      for (const std::size_t i : indices) result.leftover.push_back(records[i]);
      continue;
    }
    const SplitQuota& quota = quota_it->second;
    const std::size_t needed =
        static_cast<std::size_t>(quota.train) + quota.val + quota.test;
    if (quota.train < 0 || quota.val < 0 || quota.test < 0 ||
        needed > indices.size()) {
      throw QuotaError(std::string(to_string(behavior)) + ": need " +
                       std::to_string(needed) + " records, have " +
                       std::to_string(indices.size()));
    }

    Rng stream = root.split("split:" + std::string(to_string(behavior)));
    stream.shuffle(indices);

    // Test is drawn first and validation second, so the evaluation sets
    // stay fixed while the training quota varies.
    std::size_t cursor = 0;
    for (int i = 0; i < quota.test; ++i) result.test.push_back(records[indices[cursor++]]);
    for (int i = 0; i < quota.val; ++i) result.val.push_back(records[indices[cursor++]]);
    for (int i = 0; i < quota.train; ++i) result.train.push_back(records[indices[cursor++]]);
    while (cursor < indices.size()) result.leftover.push_back(records[indices[cursor++]]);
  }
  return result;
}

OutlierFilterResult zscore_outlier_filter(const RecordList& records) {
  OutlierFilterResult result;
  if (records.empty()) return result;
  const std::size_t width = records[0].features.size();
  for (const auto& record : records) {
    if (record.features.size() != width) {
      throw ShapeError("ragged records in outlier filter");
    }
  }

  std::vector<double> mean(width, 0.0);
  std::vector<double> sigma(width, 0.0);
  std::vector<double> column(records.size());
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      column[i] = records[i].features[j];
    }
    const MeanStd stats = mean_population_std(column);
    mean[j] = stats.mean;
    sigma[j] = stats.stddev;
  }

  for (const auto& record : records) {
    bool keep = true;
    for (std::size_t j = 0; j < width; ++j) {
      if (sigma[j] == 0.0) continue;
      if (std::abs(record.features[j] - mean[j]) >= 3.0 * sigma[j]) {
        keep = false;
        break;
      }
    }
    if (keep) {
      result.records.push_back(record);
    } else {
      ++result.removed;
    }
  }
  return result;
}

std::pair<OutlierFilterResult, OutlierFilterResult> zscore_outlier_filter(
    const RecordList& train, const RecordList& val) {
  return {zscore_outlier_filter(train), zscore_outlier_filter(val)};
}

CorrelationSummary summarize_for_correlation(const RecordList& records) {
  CorrelationSummary summary;
  if (records.empty()) {
    summary.sum = Eigen::VectorXd::Zero(0);
    summary.cross = Eigen::MatrixXd::Zero(0, 0);
    return summary;
  }
  const Eigen::Index width = static_cast<Eigen::Index>(records[0].features.size());
  Eigen::MatrixXd x(records.size(), width);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (static_cast<Eigen::Index>(records[i].features.size()) != width) {
      throw ShapeError("ragged records in correlation summary");
    }
    for (Eigen::Index j = 0; j < width; ++j) x(i, j) = records[i].features[j];
  }
  summary.n = static_cast<std::int64_t>(records.size());
  summary.sum = x.colwise().sum().transpose();
  summary.cross = x.transpose() * x;
  return summary;
}

CorrelationSummary merge(std::span<const CorrelationSummary> summaries) {
  if (summaries.empty()) throw ProtocolError("no correlation summaries to merge");
  CorrelationSummary total = summaries[0];
  for (std::size_t i = 1; i < summaries.size(); ++i) {
    const auto& next = summaries[i];
    if (next.sum.size() != total.sum.size()) {
      throw ProtocolError("correlation summaries disagree on feature count");
    }
    total.n += next.n;
    total.sum += next.sum;
    total.cross += next.cross;
  }
  return total;
}

std::vector<int> correlation_filter(const CorrelationSummary& pooled,
                                    const CorrelationFilterOptions& options) {
  const Eigen::Index width = pooled.sum.size();
  const double n = static_cast<double>(pooled.n);

  std::vector<double> variance(width);
  std::vector<char> dropped(width, 0);
  for (Eigen::Index j = 0; j < width; ++j) {
    const double scaled = n * pooled.cross(j, j) - pooled.sum[j] * pooled.sum[j];
    variance[j] = scaled;
    // A genuinely constant column only misses zero through rounding.
    if (scaled <= 1e-9 * std::max(1.0, n * std::abs(pooled.cross(j, j)))) {
      dropped[j] = 1;
    }
  }

  for (Eigen::Index i = 0; i < width; ++i) {
    if (dropped[i]) continue;
    for (Eigen::Index j = i + 1; j < width; ++j) {
      if (dropped[j]) continue;
      const double cov = n * pooled.cross(i, j) - pooled.sum[i] * pooled.sum[j];
      const double r = cov / std::sqrt(variance[i] * variance[j]);
      const double strength = options.absolute ? std::abs(r) : r;
      if (strength >= 1.0 - options.tolerance) dropped[j] = 1;
    }
  }

  std::vector<int> kept;
  for (Eigen::Index j = 0; j < width; ++j) {
    if (!dropped[j]) kept.push_back(static_cast<int>(j));
  }
  return kept;
}

std::vector<int> correlation_filter(const RecordList& records,
                                    const CorrelationFilterOptions& options) {
  return correlation_filter(summarize_for_correlation(records), options);
}

MinMaxReport local_minmax(const RecordList& records, const std::vector<int>& kept) {
  if (records.empty()) throw ProtocolError("no records for min-max report");
  MinMaxReport report;
  report.min.resize(kept.size());
  report.max.resize(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const std::size_t j = static_cast<std::size_t>(kept[k]);
    double lo = records[0].features.at(j);
    double hi = lo;
    for (const auto& record : records) {
      const double value = record.features.at(j);
      lo = std::min(lo, value);
      hi = std::max(hi, value);
    }
    report.min[k] = lo;
    report.max[k] = hi;
  }
  return report;
}

FeaturePlan federated_minmax(const std::vector<int>& kept,
                             std::span<const MinMaxReport> reports) {
  if (reports.empty()) throw ProtocolError("no min-max reports");
  for (const auto& report : reports) {
    if (report.min.size() != kept.size() || report.max.size() != kept.size()) {
      throw ProtocolError("min-max report does not match the kept features");
    }
  }

  FeaturePlan plan;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    double lo = reports[0].min[k];
    double hi = reports[0].max[k];
    for (const auto& report : reports) {
      lo = std::min(lo, report.min[k]);
      hi = std::max(hi, report.max[k]);
    }
    if (lo == hi) continue;  // nothing to scale, drop the feature
    plan.kept_indices.push_back(kept[k]);
    plan.min.push_back(lo);
    plan.max.push_back(hi);
  }
  return plan;
}

std::vector<double> scale(const FingerprintRecord& record, const FeaturePlan& plan) {
  std::vector<double> out(plan.kept_indices.size());
  for (std::size_t k = 0; k < plan.kept_indices.size(); ++k) {
    const std::size_t j = static_cast<std::size_t>(plan.kept_indices[k]);
    if (j >= record.features.size()) {
      throw ShapeError("record has " + std::to_string(record.features.size()) +
                       " features, plan needs index " + std::to_string(j));
    }
    out[k] = (record.features[j] - plan.min[k]) / (plan.max[k] - plan.min[k]);
  }
  return out;
}

Eigen::MatrixXd scale_matrix(const RecordList& records, const FeaturePlan& plan) {
  Eigen::MatrixXd out(records.size(), plan.kept_indices.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::vector<double> row = scale(records[i], plan);
    for (std::size_t k = 0; k < row.size(); ++k) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
  }
  return out;
}

}  // namespace fedspectre::data
