#include "fedspectre/federation.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "fedspectre/adversary.hpp"
#include "fedspectre/stats.hpp"

namespace fedspectre::fed {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t stream_key(int round, int participant) {
  return (static_cast<std::uint64_t>(round) << 32) |
         static_cast<std::uint32_t>(participant);
}

void check_labels(const ParticipantData& data) {
  if (data.train_y.rows() != data.train_x.rows() ||
      (data.train_x.rows() > 0 && data.train_y.cols() != 1)) {
    throw ParticipantError("classifier training labels do not match the rows");
  }
  if (data.val_y.rows() != data.val_x.rows() ||
      (data.val_x.rows() > 0 && data.val_y.cols() != 1)) {
    throw ParticipantError("classifier validation labels do not match the rows");
  }
}

int resolve_threads(int jobs) {
  int n = 0;
  if (const char* env = std::getenv("FEDSPECTRE_THREADS")) {
    n = std::atoi(env);
  }
  if (n < 1) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  return std::min(n, jobs);
}

// Runs fn(0..jobs-1), possibly across threads. Results must be written to
// disjoint slots; the first exception is rethrown on the caller.
template <class Fn>
void parallel_for(int jobs, const Fn& fn) {
  const int threads = resolve_threads(jobs);
  if (threads <= 1) {
    for (int j = 0; j < jobs; ++j) fn(j);
    return;
  }
  std::atomic<int> next(0);
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const int j = next.fetch_add(1);
        if (j >= jobs) return;
        try {
          fn(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& worker : pool) worker.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

ClientUpdateResult client_update(const nn::ModelParams& start,
                                 const ParticipantData& data,
                                 const FederationConfig& config, Rng rng) {
  if (config.batch_size < 2) {
    throw ConfigError("batch size must be at least 2");
  }
  if (config.local_epochs < 0) {
    throw ConfigError("local epoch count must not be negative");
  }
  const bool reconstructing = start.layout.kind == nn::ModelKind::autoencoder;
  if (!reconstructing) check_labels(data);
  const nn::LossKind loss =
      reconstructing ? nn::LossKind::mse : nn::LossKind::bce_logits;

  nn::ModelParams model = start;
  nn::OptimizerState optimizer =
      nn::OptimizerState::make(model, config.learning_rate, config.momentum);

  const auto validation_loss = [&]() {
    if (data.val_x.rows() == 0) return kNaN;
    const Eigen::MatrixXd out = nn::forward_eval(model, data.val_x);
    return nn::compute_loss(loss, out, reconstructing ? data.val_x : data.val_y);
  };

  ClientUpdateResult result;
  const Eigen::Index n = data.train_x.rows();
  if (n >= 2 && config.local_epochs > 0) {
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
      rng.shuffle(order);
      for (Eigen::Index at = 0; at < n; at += config.batch_size) {
        const Eigen::Index rows = std::min<Eigen::Index>(config.batch_size, n - at);
        if (rows < 2) continue;  // batch statistics need company
        Eigen::MatrixXd x(rows, data.train_x.cols());
        Eigen::MatrixXd y(rows, reconstructing ? 0 : 1);
        for (Eigen::Index r = 0; r < rows; ++r) {
          x.row(r) = data.train_x.row(order[at + r]);
          if (!reconstructing) y.row(r) = data.train_y.row(order[at + r]);
        }
        const nn::ForwardCache cache = nn::forward_train(model, x);
        const Eigen::MatrixXd& target = reconstructing ? x : y;
        const Eigen::VectorXd gradient =
            nn::backward(model, cache, loss, target);
        nn::sgd_step(model, gradient, optimizer);
      }
      ++result.epochs_run;
      const double val = validation_loss();
      result.val_loss = val;
      if (!std::isnan(val)) {
        if (best - val < config.early_stop_delta) break;
        best = val;
      }
    }
  } else {
    result.val_loss = validation_loss();
  }

  result.params = nn::flatten(model);
  result.weight = static_cast<double>(n);
  return result;
}

std::vector<double> reconstruction_errors(const nn::ModelParams& model,
                                          const Eigen::MatrixXd& batch) {
  if (batch.rows() == 0) return {};
  const Eigen::MatrixXd out = nn::forward_eval(model, batch);
  std::vector<double> errors(batch.rows());
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    errors[i] = (out.row(i) - batch.row(i)).squaredNorm() / batch.cols();
  }
  return errors;
}

double local_threshold(const nn::ModelParams& model, const Eigen::MatrixXd& val) {
  const std::vector<double> errors = reconstruction_errors(model, val);
  if (errors.empty()) {
    throw ThresholdError("no validation rows to derive a threshold from");
  }
  const MeanStd stats = mean_population_std(errors);
  return stats.mean + 3.0 * stats.stddev;
}

double federated_threshold(std::span<const double> reported, double z_limit) {
  if (reported.empty()) throw ThresholdError("no thresholds reported");
  const MeanStd stats = mean_population_std(reported);
  double best = -std::numeric_limits<double>::infinity();
  for (const double value : reported) {
    if (stats.stddev > 0.0 &&
        std::abs(value - stats.mean) > z_limit * stats.stddev) {
      continue;
    }
    best = std::max(best, value);
  }
  return best;
}

GlobalModelState run(const FederationConfig& config,
                     std::span<const Participant> participants) {
  if (participants.empty()) throw ProtocolError("no participants");
  if (config.input_dim <= 0) throw ConfigError("input dimension must be positive");
  if (config.rounds < 0) throw ConfigError("round count must not be negative");
  if (!(config.client_fraction > 0.0) || config.client_fraction > 1.0) {
    throw ConfigError("client fraction must be in (0, 1]");
  }

  const int total = static_cast<int>(participants.size());
  int canceling = 0;
  for (const auto& p : participants) {
    if (p.role == Role::canceling) ++canceling;
  }

  const int per_round = std::max(
      static_cast<int>(std::ceil(config.client_fraction * total)), 1);
  if (per_round < agg::min_participants(config.rule)) {
    throw ProtocolError(std::string(agg::to_string(config.rule)) + " needs " +
                        std::to_string(agg::min_participants(config.rule)) +
                        " participants per round, selection yields " +
                        std::to_string(per_round));
  }

  const int hidden =
      config.hidden_dim > 0
          ? config.hidden_dim
          : (config.model == nn::ModelKind::autoencoder ? nn::kAutoencoderHidden
                                                        : nn::kMlpHidden);
  const Rng root(config.seed);
  Rng init_rng = root.split("init");
  nn::ModelParams global =
      nn::build_model(config.model, config.input_dim, hidden, init_rng);

  GlobalModelState state;
  for (int round = 1; round <= config.rounds; ++round) {
    std::vector<int> ids(total);
    std::iota(ids.begin(), ids.end(), 0);
    Rng selector = root.split("select", static_cast<std::uint64_t>(round));
    selector.shuffle(ids);
    ids.resize(per_round);

    const nn::ParameterVector before = nn::flatten(global);
    std::vector<nn::ParameterVector> updates(per_round);
    std::vector<double> weights(per_round);
    std::vector<double> val_losses(per_round, kNaN);

    parallel_for(per_round, [&](int j) {
      const int id = ids[j];
      const Participant& p = participants[id];
      switch (p.role) {
        case Role::honest: {
          const ClientUpdateResult result = client_update(
              global, p.data, config, root.split("client", stream_key(round, id)));
          updates[j] = result.params;
          weights[j] = p.weight > 0.0 ? p.weight : result.weight;
          val_losses[j] = result.val_loss;
          break;
        }
        case Role::canceling: {
          updates[j] = adv::cancel_update(before, total, canceling);
          weights[j] = p.weight > 0.0 ? p.weight : 1.0;
          break;
        }
        case Role::random_weights: {
          Rng chaos = root.split("chaos", stream_key(round, id));
          updates[j] = adv::random_update(before, chaos);
          weights[j] = p.weight > 0.0 ? p.weight : 1.0;
          break;
        }
      }
    });

    const nn::ParameterVector merged =
        agg::aggregate(config.rule, updates, weights);
    global = nn::unflatten(merged);

    RoundTrace trace;
    trace.round = round;
    trace.selected = ids;
    trace.update_norm = (merged.values - before.values).norm();
    double loss_sum = 0.0;
    int loss_count = 0;
    for (const double loss : val_losses) {
      if (!std::isnan(loss)) {
        loss_sum += loss;
        ++loss_count;
      }
    }
    trace.mean_val_loss = loss_count > 0 ? loss_sum / loss_count : kNaN;
    state.rounds.push_back(std::move(trace));
  }

  if (config.model == nn::ModelKind::autoencoder) {
    for (int id = 0; id < total; ++id) {
      const Participant& p = participants[id];
      if (p.overstate) {
        Rng overstater = root.split("threshold", static_cast<std::uint64_t>(id));
        state.reported_thresholds.push_back(adv::overstate_threshold(overstater));
      } else {
        state.reported_thresholds.push_back(
            local_threshold(global, p.data.val_x));
      }
    }
    state.federated_threshold =
        federated_threshold(state.reported_thresholds, config.threshold_z_limit);
  } else {
    state.federated_threshold = kNaN;
  }
  state.model = std::move(global);
  return state;
}

}  // namespace fedspectre::fed
