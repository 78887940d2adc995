#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedspectre/aggregation.hpp"
#include "fedspectre/nn.hpp"
#include "fedspectre/rng.hpp"

namespace fedspectre::fed {

// Per-participant matrices, already feature-scaled. Rows are samples. The
// label columns are only consulted for the binary classifier; the
// autoencoder reconstructs its inputs.
struct ParticipantData {
  Eigen::MatrixXd train_x;
  Eigen::MatrixXd train_y;
  Eigen::MatrixXd val_x;
  Eigen::MatrixXd val_y;
};

enum class Role { honest, canceling, random_weights };

struct Participant {
  ParticipantData data;
  Role role = Role::honest;
  // Reports a fabricated anomaly threshold instead of the measured one.
  bool overstate = false;
  // Training rows claimed towards the weighted average; 0 means use the
  // actual row count.
  double weight = 0.0;
};

struct FederationConfig {
  nn::ModelKind model = nn::ModelKind::autoencoder;
  int input_dim = 0;
  int hidden_dim = 0;  // 0 picks the architecture default
  int rounds = 15;
  int local_epochs = 5;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double client_fraction = 1.0;
  // Local training stops early when validation loss improves by less than
  // this between epochs.
  double early_stop_delta = 1e-4;
  agg::Rule rule = agg::Rule::fed_avg;
  // Reported thresholds outside this many population sigmas are ignored.
  double threshold_z_limit = 1.5;
  std::uint64_t seed = 0;
};

struct ClientUpdateResult {
  nn::ParameterVector params;
  double weight = 0.0;
  double val_loss = 0.0;
  int epochs_run = 0;
};

/**
 * Minibatch SGD from `start` on one participant's data, with per-epoch
 * early stopping against the best validation loss seen this call. Batches
 * of a single row are dropped. Without validation rows all epochs run and
 * the reported loss is NaN.
 */
ClientUpdateResult client_update(const nn::ModelParams& start,
                                 const ParticipantData& data,
                                 const FederationConfig& config, Rng rng);

// Mean over features of the squared reconstruction error, one value per row.
std::vector<double> reconstruction_errors(const nn::ModelParams& model,
                                          const Eigen::MatrixXd& batch);

// Mean plus three population sigmas of the per-row reconstruction error.
double local_threshold(const nn::ModelParams& model, const Eigen::MatrixXd& val);

/**
 * Coordinator-side merge of the reported thresholds: values more than
 * `z_limit` population sigmas from the mean are dropped, and the largest
 * survivor wins. A zero sigma keeps everything.
 */
double federated_threshold(std::span<const double> reported, double z_limit);

struct RoundTrace {
  int round = 0;
  std::vector<int> selected;  // participant indices in draw order
  double mean_val_loss = 0.0;
  double update_norm = 0.0;  // parameter movement caused by the round
};

struct GlobalModelState {
  nn::ModelParams model;
  // NaN for the binary classifier, which needs no threshold.
  double federated_threshold = 0.0;
  std::vector<double> reported_thresholds;
  std::vector<RoundTrace> rounds;
};

/**
 * Runs the whole federation: seeded client selection each round, local
 * updates on the selected participants (model poisoning roles substitute
 * their crafted vectors), aggregation under the configured rule, and after
 * the final round the threshold exchange. Client updates are independent
 * of each other, so the result does not depend on how many worker threads
 * the FEDSPECTRE_THREADS environment variable requests.
 */
GlobalModelState run(const FederationConfig& config,
                     std::span<const Participant> participants);

}  // namespace fedspectre::fed
