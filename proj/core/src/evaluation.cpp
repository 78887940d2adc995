#include "fedspectre/evaluation.hpp"

#include <json.hpp>

#include "fedspectre/federation.hpp"

namespace fedspectre::eval {

std::vector<bool> predict(const Detector& detector, const Eigen::MatrixXd& x) {
  std::vector<bool> flags(x.rows(), false);
  if (x.rows() == 0) return flags;
  if (const auto* anomaly = std::get_if<AnomalyDetector>(&detector)) {
    const std::vector<double> errors =
        fed::reconstruction_errors(anomaly->model, x);
    for (std::size_t i = 0; i < errors.size(); ++i) {
      flags[i] = errors[i] > anomaly->threshold;
    }
  } else {
    const auto& binary = std::get<BinaryDetector>(detector);
    const Eigen::MatrixXd logits = nn::forward_eval(binary.model, x);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      flags[i] = logits(i, 0) > 0.0;
    }
  }
  return flags;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

double f1(const ConfusionCounts& counts) {
  const double denom = counts.tp + 0.5 * (counts.fp + counts.fn);
  if (denom == 0.0) throw MetricError("f1 undefined without any positives");
  return counts.tp / denom;
}

double accuracy(const ConfusionCounts& counts) {
  if (counts.total() == 0) throw MetricError("accuracy undefined on no rows");
  return static_cast<double>(counts.correct()) / counts.total();
}

ConfusionCounts EvaluationReport::overall(bool include_normal_v2) const {
  ConfusionCounts sum;
  for (const auto& [key, counts] : cells) {
    if (!include_normal_v2 && key.second == data::Behavior::normal_v2) continue;
    sum += counts;
  }
  return sum;
}

ConfusionCounts EvaluationReport::device_counts(data::DeviceId device) const {
  ConfusionCounts sum;
  for (const auto& [key, counts] : cells) {
    if (key.first == device) sum += counts;
  }
  return sum;
}

ConfusionCounts EvaluationReport::behavior_counts(data::Behavior behavior) const {
  ConfusionCounts sum;
  for (const auto& [key, counts] : cells) {
    if (key.second == behavior) sum += counts;
  }
  return sum;
}

double EvaluationReport::behavior_accuracy(data::Behavior behavior) const {
  const ConfusionCounts counts = behavior_counts(behavior);
  if (counts.total() == 0) {
    throw MetricError("no rows for behavior " +
                      std::string(data::to_string(behavior)));
  }
  return accuracy(counts);
}

double EvaluationReport::device_f1(data::DeviceId device) const {
  const ConfusionCounts counts = device_counts(device);
  if (counts.total() == 0) {
    throw MetricError("no rows for device " +
                      std::string(data::to_string(device)));
  }
  return f1(counts);
}

double EvaluationReport::overall_f1(bool include_normal_v2) const {
  return f1(overall(include_normal_v2));
}

std::string EvaluationReport::to_json_text() const {
  nlohmann::json doc;
  doc["cells"] = nlohmann::json::array();
  for (const auto& [key, counts] : cells) {
    doc["cells"].push_back({{"device", std::string(data::to_string(key.first))},
                            {"behavior", std::string(data::to_string(key.second))},
                            {"tp", counts.tp},
                            {"fp", counts.fp},
                            {"tn", counts.tn},
                            {"fn", counts.fn}});
  }
  return doc.dump(2);
}

EvaluationReport EvaluationReport::from_json_text(const std::string& text) {
  EvaluationReport report;
  try {
    const nlohmann::json doc = nlohmann::json::parse(text);
    for (const auto& cell : doc.at("cells")) {
      const auto device =
          data::device_from_string(cell.at("device").get<std::string>());
      const auto behavior =
          data::behavior_from_string(cell.at("behavior").get<std::string>());
      ConfusionCounts counts;
      counts.tp = cell.at("tp").get<std::int64_t>();
      counts.fp = cell.at("fp").get<std::int64_t>();
      counts.tn = cell.at("tn").get<std::int64_t>();
      counts.fn = cell.at("fn").get<std::int64_t>();
      report.cells[{device, behavior}] = counts;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("evaluation report: ") + e.what());
  }
  return report;
}

std::string EvaluationReport::to_csv_text() const {
  std::string out = "device,behavior,tp,fp,tn,fn,accuracy\n";
  for (const auto& [key, counts] : cells) {
    out += std::string(data::to_string(key.first)) + "," +
           std::string(data::to_string(key.second)) + "," +
           std::to_string(counts.tp) + "," + std::to_string(counts.fp) + "," +
           std::to_string(counts.tn) + "," + std::to_string(counts.fn) + "," +
           std::to_string(accuracy(counts)) + "\n";
  }
  return out;
}

EvaluationReport evaluate(const Detector& detector,
                          const data::RecordList& records,
                          const Eigen::MatrixXd& x) {
  if (static_cast<Eigen::Index>(records.size()) != x.rows()) {
    throw ShapeError("evaluation rows do not line up with the records");
  }
  const std::vector<bool> flags = predict(detector, x);
  EvaluationReport report;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ConfusionCounts& cell =
        report.cells[{records[i].device, records[i].behavior}];
    const bool attack = data::is_attack(records[i].behavior);
    if (attack) {
      if (flags[i]) ++cell.tp; else ++cell.fn;
    } else {
      if (flags[i]) ++cell.fp; else ++cell.tn;
    }
  }
  return report;
}

EvaluationReport evaluate(const Detector& detector,
                          const data::RecordList& records,
                          const data::FeaturePlan& plan) {
  return evaluate(detector, records, data::scale_matrix(records, plan));
}

}  // namespace fedspectre::eval
