#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <variant>
#include <vector>

#include "fedspectre/errors.hpp"
#include "fedspectre/rng.hpp"

namespace fedspectre::nn {

enum class ModelKind { autoencoder, mlp };
enum class Mode { train, eval };
enum class LossKind { mse, bce_logits };

enum class LayerKind { dense, batchnorm, gelu, identity };

struct LayerSpec {
  LayerKind kind = LayerKind::identity;
  int in_dim = 0;
  int out_dim = 0;
};

// Throws ArchitectureError unless dims are positive and, for
// batchnorm/gelu/identity, in_dim == out_dim.
void validate(const LayerSpec& spec);

// y = x * weight + bias, with weight sized in_dim x out_dim.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct BatchNormLayer {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  double eps = 1e-5;
  // running <- (1 - momentum) * running + momentum * batch statistic
  double momentum = 0.1;
};

struct GeluLayer {};
struct IdentityLayer {};

using LayerParams = std::variant<DenseLayer, BatchNormLayer, GeluLayer, IdentityLayer>;

/**
 * Identifies a parameter layout: two flattened vectors are compatible for
 * aggregation exactly when their layouts compare equal. hidden_dim is kept
 * explicit so tests can build scaled-down variants of both architectures.
 */
struct ParamLayout {
  ModelKind kind = ModelKind::autoencoder;
  int input_dim = 0;
  int hidden_dim = 0;
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

struct ModelParams {
  ParamLayout layout;
  std::vector<LayerParams> layers;

  int input_dim() const { return layout.input_dim; }
  std::size_t learnable_size() const;
  std::size_t running_stat_size() const;
  std::size_t full_size() const { return learnable_size() + running_stat_size(); }
};

// Derived structural view; positions mirror ModelParams::layers.
std::vector<LayerSpec> layer_specs(const ModelParams& model);

inline constexpr int kAutoencoderHidden = 32;
inline constexpr int kMlpHidden = 256;

/**
 * dense(input -> hidden), batchnorm, gelu, dense(hidden -> input), gelu.
 * Dense weights and biases are initialized U(-1/sqrt(fan_in), +1/sqrt(fan_in))
 * from the given stream; batchnorm starts at gamma=1, beta=0, running mean 0,
 * running variance 1.
 */
ModelParams build_autoencoder(int input_dim, Rng& rng);

// dense(input -> hidden), batchnorm, gelu, dense(hidden -> 1); no output
// activation, the loss works on raw logits.
ModelParams build_mlp(int input_dim, Rng& rng);

// Same architectures with an explicit hidden width (tests use 4/8).
ModelParams build_model(ModelKind kind, int input_dim, int hidden_dim, Rng& rng);

// All-zero parameter shell with the canonical structure for `layout`;
// used to rebuild models from flattened vectors.
ModelParams make_model_shell(const ParamLayout& layout);

// Exact erf-based GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

struct LayerCache {
  Eigen::MatrixXd input;
  // batchnorm, train mode only:
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;  // population
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd x_hat;
};

struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd output;
};

/**
 * Runs the network on a batch (rows are samples). Pure: never touches the
 * model. Train mode normalizes with batch statistics and requires at least
 * two rows (BatchError otherwise); eval mode uses the running statistics.
 * Width mismatches throw ShapeError.
 */
ForwardCache forward(const ModelParams& model, const Eigen::MatrixXd& batch, Mode mode);

// Folds the batch statistics of a train-mode cache into the running stats.
void commit_running_stats(ModelParams& model, const ForwardCache& cache);

// forward(train) + commit_running_stats, the shape the training loop uses.
ForwardCache forward_train(ModelParams& model, const Eigen::MatrixXd& batch);

Eigen::MatrixXd forward_eval(const ModelParams& model, const Eigen::MatrixXd& batch);

// Mean over all entries of the squared difference.
double loss_mse(const Eigen::MatrixXd& output, const Eigen::MatrixXd& target);

// Numerically stable binary cross-entropy on logits,
// mean of max(z,0) - z*y + log1p(exp(-|z|)). Labels must be exactly 0 or 1.
double loss_bce_logits(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& labels);

double compute_loss(LossKind kind, const Eigen::MatrixXd& output,
                    const Eigen::MatrixXd& target);

/**
 * Gradient of loss_scale * loss w.r.t. every learnable parameter, in the
 * canonical flattening order (running statistics excluded). Requires a
 * train-mode cache produced from this model; eval caches throw CacheError.
 */
Eigen::VectorXd backward(const ModelParams& model, const ForwardCache& cache,
                         LossKind loss, const Eigen::MatrixXd& target,
                         double loss_scale = 1.0);

/**
 * Classical momentum:
 *   velocity <- momentum * velocity + gradient
 *   param    <- param - learning_rate * velocity
 */
struct OptimizerState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  Eigen::VectorXd velocity;

  static OptimizerState make(const ModelParams& model, double learning_rate = 1e-3,
                             double momentum = 0.9);
};

void sgd_step(ModelParams& model, const Eigen::VectorXd& gradient, OptimizerState& state);

/**
 * Flattened model parameters, the unit the aggregation rules operate on.
 * Canonical order: layers front to back; dense contributes weight entries
 * row-major then the bias; batchnorm contributes gamma, beta and then (full
 * flattening only) running mean and running variance.
 */
struct ParameterVector {
  ParamLayout layout;
  Eigen::VectorXd values;
};

Eigen::VectorXd flatten_learnable(const ModelParams& model);
void load_learnable(ModelParams& model, const Eigen::VectorXd& values);

// Full flattening including batchnorm running statistics.
ParameterVector flatten(const ModelParams& model);
ModelParams unflatten(const ParameterVector& params);

}  // namespace fedspectre::nn
