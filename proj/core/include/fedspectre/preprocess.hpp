#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "fedspectre/data.hpp"

namespace fedspectre::data {

struct SplitQuota {
  int train = 0;
  int val = 0;
  int test = 0;
};

struct SplitSpec {
  std::map<Behavior, SplitQuota> quotas;
  std::uint64_t seed = 0;
};

/**
 * Seeded per-behavior sampling into three disjoint subsets. Unsampled
 * records are returned as leftover (data poisoning draws from there so it
 * never touches the evaluation sets). QuotaError names the behavior that
 * cannot be satisfied.
 */
struct SplitResult {
  RecordList train;
  RecordList val;
  RecordList test;
  RecordList leftover;
};

SplitResult split(const RecordList& records, const SplitSpec& spec);

/**
 * Removes every record with |x - mean| >= 3 * sigma on any feature, using
 * the mean and population sigma of the set being filtered. Single pass:
 * the statistics are not recomputed after removals. Constant features
 * (sigma = 0) never exclude anything.
 */
struct OutlierFilterResult {
  RecordList records;
  std::size_t removed = 0;
};

OutlierFilterResult zscore_outlier_filter(const RecordList& records);

// The pipeline filters the training and validation sets, each with its own
// statistics; test data is never touched.
std::pair<OutlierFilterResult, OutlierFilterResult> zscore_outlier_filter(
    const RecordList& train, const RecordList& val);

/**
 * Per-participant sufficient statistics for the correlation filter; the
 * coordinator pools them, so no raw rows leave a participant.
 */
struct CorrelationSummary {
  std::int64_t n = 0;
  Eigen::VectorXd sum;    // per feature
  Eigen::MatrixXd cross;  // sum of x_i * x_j
};

CorrelationSummary summarize_for_correlation(const RecordList& records);
CorrelationSummary merge(std::span<const CorrelationSummary> summaries);

struct CorrelationFilterOptions {
  double tolerance = 1e-12;
  // false: drop only r = +1 pairs; true: |r| = 1.
  bool absolute = false;
};

/**
 * Returns the surviving feature indices, ascending. For every perfectly
 * correlated pair the higher-indexed feature is dropped; constant features
 * are dropped as well.
 */
std::vector<int> correlation_filter(const CorrelationSummary& pooled,
                                    const CorrelationFilterOptions& options = {});
std::vector<int> correlation_filter(const RecordList& records,
                                    const CorrelationFilterOptions& options = {});

// Per-participant extrema over the kept indices.
struct MinMaxReport {
  std::vector<double> min;
  std::vector<double> max;
};

MinMaxReport local_minmax(const RecordList& records, const std::vector<int>& kept);

/**
 * Scaling plan shared by the whole federation: surviving feature indices
 * with the global elementwise min/max. Features whose global min equals the
 * global max are dropped here.
 */
struct FeaturePlan {
  std::vector<int> kept_indices;
  std::vector<double> min;
  std::vector<double> max;
};

// ProtocolError if the reports are empty or ragged.
FeaturePlan federated_minmax(const std::vector<int>& kept,
                             std::span<const MinMaxReport> reports);

// (x - min) / (max - min) over the kept indices; deliberately unclipped, so
// unseen data may land outside [0, 1].
std::vector<double> scale(const FingerprintRecord& record, const FeaturePlan& plan);
Eigen::MatrixXd scale_matrix(const RecordList& records, const FeaturePlan& plan);

}  // namespace fedspectre::data
