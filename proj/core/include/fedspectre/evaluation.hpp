#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedspectre/data.hpp"
#include "fedspectre/nn.hpp"
#include "fedspectre/preprocess.hpp"

namespace fedspectre::eval {

// Flags a row as an attack when its reconstruction error exceeds the
// threshold; an error exactly at the threshold counts as normal.
struct AnomalyDetector {
  nn::ModelParams model;
  double threshold = 0.0;
};

// Flags a row as an attack on a strictly positive logit.
struct BinaryDetector {
  nn::ModelParams model;
};

using Detector = std::variant<AnomalyDetector, BinaryDetector>;

std::vector<bool> predict(const Detector& detector, const Eigen::MatrixXd& x);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  std::int64_t correct() const { return tp + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
};

// Attack is the positive class: tp / (tp + (fp + fn) / 2). MetricError
// when no attack rows exist and nothing was flagged.
double f1(const ConfusionCounts& counts);

// correct / total; MetricError on empty counts.
double accuracy(const ConfusionCounts& counts);

/**
 * Confusion counts bucketed per (device, behavior). Rows of an attack
 * behavior can only produce tp or fn, benign rows fp or tn; the derived
 * accessors sum the relevant buckets.
 */
struct EvaluationReport {
  std::map<std::pair<data::DeviceId, data::Behavior>, ConfusionCounts> cells;

  ConfusionCounts overall(bool include_normal_v2 = true) const;
  ConfusionCounts device_counts(data::DeviceId device) const;
  ConfusionCounts behavior_counts(data::Behavior behavior) const;

  // MetricError when the behavior or device has no rows.
  double behavior_accuracy(data::Behavior behavior) const;
  double device_f1(data::DeviceId device) const;
  // F1 over the concatenated test set.
  double overall_f1(bool include_normal_v2 = true) const;

  std::string to_json_text() const;
  static EvaluationReport from_json_text(const std::string& text);
  // device,behavior,tp,fp,tn,fn,accuracy with one row per cell.
  std::string to_csv_text() const;
};

// Rows of x must line up with the records that produced them.
EvaluationReport evaluate(const Detector& detector,
                          const data::RecordList& records,
                          const Eigen::MatrixXd& x);

EvaluationReport evaluate(const Detector& detector,
                          const data::RecordList& records,
                          const data::FeaturePlan& plan);

}  // namespace fedspectre::eval
