#include "fedspectre/nn.hpp"

#include <cmath>
#include <string>

namespace fedspectre::nn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::string dim_text(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

int out_dim_of(const LayerParams& layer, int current) {
  if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
    return static_cast<int>(dense->weight.cols());
  }
  return current;
}

DenseLayer init_dense(int in_dim, int out_dim, Rng& rng) {
  DenseLayer layer;
  layer.weight.resize(in_dim, out_dim);
  layer.bias.resize(out_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (int i = 0; i < in_dim; ++i) {
    for (int j = 0; j < out_dim; ++j) {
      layer.weight(i, j) = rng.uniform(-bound, bound);
    }
  }
  for (int j = 0; j < out_dim; ++j) layer.bias(j) = rng.uniform(-bound, bound);
  return layer;
}

BatchNormLayer init_batchnorm(int dim) {
  BatchNormLayer layer;
  layer.gamma = Eigen::VectorXd::Ones(dim);
  layer.beta = Eigen::VectorXd::Zero(dim);
  layer.running_mean = Eigen::VectorXd::Zero(dim);
  layer.running_var = Eigen::VectorXd::Ones(dim);
  return layer;
}

struct LayerGrads {
  // Mirrors the learnable blocks of one layer.
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
};

}  // namespace

void validate(const LayerSpec& spec) {
  if (spec.in_dim <= 0 || spec.out_dim <= 0) {
    throw ArchitectureError("layer dims must be positive, got " +
                            dim_text(spec.in_dim, spec.out_dim));
  }
  if (spec.kind != LayerKind::dense && spec.in_dim != spec.out_dim) {
    throw ArchitectureError("non-dense layers preserve width, got " +
                            dim_text(spec.in_dim, spec.out_dim));
  }
}

std::vector<LayerSpec> layer_specs(const ModelParams& model) {
  std::vector<LayerSpec> specs;
  specs.reserve(model.layers.size());
  int width = model.layout.input_dim;
  for (const auto& layer : model.layers) {
    LayerSpec spec;
    spec.in_dim = width;
    if (std::holds_alternative<DenseLayer>(layer)) {
      spec.kind = LayerKind::dense;
    } else if (std::holds_alternative<BatchNormLayer>(layer)) {
      spec.kind = LayerKind::batchnorm;
    } else if (std::holds_alternative<GeluLayer>(layer)) {
      spec.kind = LayerKind::gelu;
    } else {
      spec.kind = LayerKind::identity;
    }
    width = out_dim_of(layer, width);
    spec.out_dim = width;
    specs.push_back(spec);
  }
  return specs;
}

std::size_t ModelParams::learnable_size() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      n += static_cast<std::size_t>(dense->weight.size() + dense->bias.size());
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      n += static_cast<std::size_t>(bn->gamma.size() + bn->beta.size());
    }
  }
  return n;
}

std::size_t ModelParams::running_stat_size() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      n += static_cast<std::size_t>(bn->running_mean.size() + bn->running_var.size());
    }
  }
  return n;
}

ModelParams build_model(ModelKind kind, int input_dim, int hidden_dim, Rng& rng) {
  if (input_dim <= 0) {
    throw ArchitectureError("input_dim must be positive, got " +
                            std::to_string(input_dim));
  }
  if (hidden_dim <= 0) {
    throw ArchitectureError("hidden_dim must be positive, got " +
                            std::to_string(hidden_dim));
  }
  ModelParams model;
  model.layout = {kind, input_dim, hidden_dim};
  model.layers.push_back(init_dense(input_dim, hidden_dim, rng));
  model.layers.push_back(init_batchnorm(hidden_dim));
  model.layers.push_back(GeluLayer{});
  if (kind == ModelKind::autoencoder) {
    model.layers.push_back(init_dense(hidden_dim, input_dim, rng));
    model.layers.push_back(GeluLayer{});
  } else {
    model.layers.push_back(init_dense(hidden_dim, 1, rng));
  }
  return model;
}

ModelParams build_autoencoder(int input_dim, Rng& rng) {
  return build_model(ModelKind::autoencoder, input_dim, kAutoencoderHidden, rng);
}

ModelParams build_mlp(int input_dim, Rng& rng) {
  return build_model(ModelKind::mlp, input_dim, kMlpHidden, rng);
}

ModelParams make_model_shell(const ParamLayout& layout) {
  Rng zero(0);
  ModelParams model = build_model(layout.kind, layout.input_dim, layout.hidden_dim, zero);
  for (auto& layer : model.layers) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      dense->weight.setZero();
      dense->bias.setZero();
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      bn->gamma.setZero();
      bn->beta.setZero();
      bn->running_mean.setZero();
      bn->running_var.setZero();
    }
  }
  return model;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
  const double phi_cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi_cdf + x * phi_pdf;
}

ForwardCache forward(const ModelParams& model, const Eigen::MatrixXd& batch, Mode mode) {
  if (batch.cols() != model.layout.input_dim) {
    throw ShapeError("forward: batch width " + std::to_string(batch.cols()) +
                     " does not match input_dim " +
                     std::to_string(model.layout.input_dim));
  }
  if (batch.rows() == 0) throw BatchError("forward: empty batch");
  if (mode == Mode::train && batch.rows() < 2) {
    throw BatchError("forward: train mode requires at least 2 rows, got " +
                     std::to_string(batch.rows()));
  }

  ForwardCache cache;
  cache.mode = mode;
  cache.layers.resize(model.layers.size());

  Eigen::MatrixXd x = batch;
  const double n = static_cast<double>(x.rows());
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    LayerCache& lc = cache.layers[li];
    lc.input = x;
    if (const auto* dense = std::get_if<DenseLayer>(&model.layers[li])) {
      if (x.cols() != dense->weight.rows()) {
        throw ShapeError("forward: dense layer " + std::to_string(li) +
                         " expects width " + std::to_string(dense->weight.rows()));
      }
      x = (x * dense->weight).rowwise() + dense->bias.transpose();
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&model.layers[li])) {
      if (x.cols() != bn->gamma.size()) {
        throw ShapeError("forward: batchnorm layer " + std::to_string(li) +
                         " expects width " + std::to_string(bn->gamma.size()));
      }
      Eigen::VectorXd mean, var;
      if (mode == Mode::train) {
        mean = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
        var = centered.array().square().colwise().sum() / n;
        lc.batch_mean = mean;
        lc.batch_var = var;
      } else {
        mean = bn->running_mean;
        var = bn->running_var;
      }
      Eigen::VectorXd inv_std = (var.array() + bn->eps).sqrt().inverse();
      Eigen::MatrixXd x_hat =
          (x.rowwise() - mean.transpose()).array().rowwise() *
          inv_std.transpose().array();
      if (mode == Mode::train) {
        lc.inv_std = inv_std;
        lc.x_hat = x_hat;
      }
      x = (x_hat.array().rowwise() * bn->gamma.transpose().array()).rowwise() +
          bn->beta.transpose().array();
    } else if (std::holds_alternative<GeluLayer>(model.layers[li])) {
      x = x.unaryExpr([](double v) { return gelu(v); });
    }
    // identity: fall through unchanged
  }
  cache.output = x;
  return cache;
}

void commit_running_stats(ModelParams& model, const ForwardCache& cache) {
  if (cache.mode != Mode::train) {
    throw CacheError("commit_running_stats: needs a train-mode cache");
  }
  if (cache.layers.size() != model.layers.size()) {
    throw CacheError("commit_running_stats: cache does not match model");
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    if (auto* bn = std::get_if<BatchNormLayer>(&model.layers[li])) {
      const LayerCache& lc = cache.layers[li];
      bn->running_mean =
          (1.0 - bn->momentum) * bn->running_mean + bn->momentum * lc.batch_mean;
      bn->running_var =
          (1.0 - bn->momentum) * bn->running_var + bn->momentum * lc.batch_var;
    }
  }
}

ForwardCache forward_train(ModelParams& model, const Eigen::MatrixXd& batch) {
  ForwardCache cache = forward(model, batch, Mode::train);
  commit_running_stats(model, cache);
  return cache;
}

Eigen::MatrixXd forward_eval(const ModelParams& model, const Eigen::MatrixXd& batch) {
  return forward(model, batch, Mode::eval).output;
}

double loss_mse(const Eigen::MatrixXd& output, const Eigen::MatrixXd& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw ShapeError("loss_mse: output " + dim_text(output.rows(), output.cols()) +
                     " vs target " + dim_text(target.rows(), target.cols()));
  }
  if (output.size() == 0) throw ShapeError("loss_mse: empty input");
  return (output - target).array().square().mean();
}

double loss_bce_logits(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw ShapeError("loss_bce_logits: logits " +
                     dim_text(logits.rows(), logits.cols()) + " vs labels " +
                     dim_text(labels.rows(), labels.cols()));
  }
  if (logits.size() == 0) throw ShapeError("loss_bce_logits: empty input");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double y = labels(i, j);
      if (y != 0.0 && y != 1.0) {
        throw LabelError("loss_bce_logits: label must be 0 or 1, got " +
                         std::to_string(y));
      }
      const double z = logits(i, j);
      sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
  }
  return sum / static_cast<double>(logits.size());
}

double compute_loss(LossKind kind, const Eigen::MatrixXd& output,
                    const Eigen::MatrixXd& target) {
  return kind == LossKind::mse ? loss_mse(output, target)
                               : loss_bce_logits(output, target);
}

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Eigen::VectorXd backward(const ModelParams& model, const ForwardCache& cache,
                         LossKind loss, const Eigen::MatrixXd& target,
                         double loss_scale) {
  if (cache.mode != Mode::train) {
    throw CacheError("backward: gradients need a train-mode cache");
  }
  if (cache.layers.size() != model.layers.size()) {
    throw CacheError("backward: cache does not match model");
  }
  if (cache.output.rows() != target.rows() || cache.output.cols() != target.cols()) {
    throw ShapeError("backward: output " +
                     dim_text(cache.output.rows(), cache.output.cols()) +
                     " vs target " + dim_text(target.rows(), target.cols()));
  }

  const double count = static_cast<double>(cache.output.size());
  Eigen::MatrixXd grad;
  if (loss == LossKind::mse) {
    grad = (2.0 * loss_scale / count) * (cache.output - target);
  } else {
    grad = cache.output.unaryExpr([](double z) { return stable_sigmoid(z); });
    for (Eigen::Index i = 0; i < target.rows(); ++i) {
      for (Eigen::Index j = 0; j < target.cols(); ++j) {
        const double y = target(i, j);
        if (y != 0.0 && y != 1.0) {
          throw LabelError("backward: label must be 0 or 1, got " + std::to_string(y));
        }
      }
    }
    grad = (loss_scale / count) * (grad - target);
  }

  std::vector<LayerGrads> grads(model.layers.size());
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const LayerCache& lc = cache.layers[li];
    if (const auto* dense = std::get_if<DenseLayer>(&model.layers[li])) {
      grads[li].weight = lc.input.transpose() * grad;
      grads[li].bias = grad.colwise().sum();
      grad = grad * dense->weight.transpose();
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&model.layers[li])) {
      const double n = static_cast<double>(lc.input.rows());
      grads[li].gamma = (grad.array() * lc.x_hat.array()).colwise().sum();
      grads[li].beta = grad.colwise().sum();
      Eigen::MatrixXd dxhat =
          grad.array().rowwise() * bn->gamma.transpose().array();
      Eigen::VectorXd sum_dxhat = dxhat.colwise().sum();
      Eigen::VectorXd sum_dxhat_xhat =
          (dxhat.array() * lc.x_hat.array()).colwise().sum();
      Eigen::MatrixXd term =
          n * dxhat.array() - (Eigen::MatrixXd::Ones(lc.input.rows(), 1) *
                               sum_dxhat.transpose())
                                  .array() -
          lc.x_hat.array().rowwise() * sum_dxhat_xhat.transpose().array();
      grad = (term.array().rowwise() * lc.inv_std.transpose().array()) / n;
    } else if (std::holds_alternative<GeluLayer>(model.layers[li])) {
      grad = grad.array() *
             lc.input.unaryExpr([](double v) { return gelu_grad(v); }).array();
    }
    // identity: gradient passes through unchanged
  }

  Eigen::VectorXd flat(model.learnable_size());
  Eigen::Index pos = 0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    if (std::holds_alternative<DenseLayer>(model.layers[li])) {
      const auto& g = grads[li];
      for (Eigen::Index i = 0; i < g.weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.weight.cols(); ++j) flat(pos++) = g.weight(i, j);
      }
      for (Eigen::Index j = 0; j < g.bias.size(); ++j) flat(pos++) = g.bias(j);
    } else if (std::holds_alternative<BatchNormLayer>(model.layers[li])) {
      const auto& g = grads[li];
      for (Eigen::Index j = 0; j < g.gamma.size(); ++j) flat(pos++) = g.gamma(j);
      for (Eigen::Index j = 0; j < g.beta.size(); ++j) flat(pos++) = g.beta(j);
    }
  }
  return flat;
}

OptimizerState OptimizerState::make(const ModelParams& model, double learning_rate,
                                    double momentum) {
  OptimizerState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  state.velocity = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.learnable_size()));
  return state;
}

void sgd_step(ModelParams& model, const Eigen::VectorXd& gradient, OptimizerState& state) {
  const auto learnable = static_cast<Eigen::Index>(model.learnable_size());
  if (gradient.size() != learnable) {
    throw ShapeError("sgd_step: gradient size " + std::to_string(gradient.size()) +
                     " vs learnable " + std::to_string(learnable));
  }
  if (state.velocity.size() != learnable) {
    throw ShapeError("sgd_step: velocity size " + std::to_string(state.velocity.size()) +
                     " vs learnable " + std::to_string(learnable));
  }
  state.velocity = state.momentum * state.velocity + gradient;
  Eigen::VectorXd params = flatten_learnable(model);
  params -= state.learning_rate * state.velocity;
  load_learnable(model, params);
}

Eigen::VectorXd flatten_learnable(const ModelParams& model) {
  Eigen::VectorXd flat(model.learnable_size());
  Eigen::Index pos = 0;
  for (const auto& layer : model.layers) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (Eigen::Index i = 0; i < dense->weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < dense->weight.cols(); ++j) {
          flat(pos++) = dense->weight(i, j);
        }
      }
      for (Eigen::Index j = 0; j < dense->bias.size(); ++j) flat(pos++) = dense->bias(j);
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      for (Eigen::Index j = 0; j < bn->gamma.size(); ++j) flat(pos++) = bn->gamma(j);
      for (Eigen::Index j = 0; j < bn->beta.size(); ++j) flat(pos++) = bn->beta(j);
    }
  }
  return flat;
}

void load_learnable(ModelParams& model, const Eigen::VectorXd& values) {
  if (values.size() != static_cast<Eigen::Index>(model.learnable_size())) {
    throw ShapeError("load_learnable: size " + std::to_string(values.size()) +
                     " vs learnable " + std::to_string(model.learnable_size()));
  }
  Eigen::Index pos = 0;
  for (auto& layer : model.layers) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (Eigen::Index i = 0; i < dense->weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < dense->weight.cols(); ++j) {
          dense->weight(i, j) = values(pos++);
        }
      }
      for (Eigen::Index j = 0; j < dense->bias.size(); ++j) dense->bias(j) = values(pos++);
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      for (Eigen::Index j = 0; j < bn->gamma.size(); ++j) bn->gamma(j) = values(pos++);
      for (Eigen::Index j = 0; j < bn->beta.size(); ++j) bn->beta(j) = values(pos++);
    }
  }
}

ParameterVector flatten(const ModelParams& model) {
  ParameterVector out;
  out.layout = model.layout;
  out.values.resize(static_cast<Eigen::Index>(model.full_size()));
  Eigen::Index pos = 0;
  for (const auto& layer : model.layers) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (Eigen::Index i = 0; i < dense->weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < dense->weight.cols(); ++j) {
          out.values(pos++) = dense->weight(i, j);
        }
      }
      for (Eigen::Index j = 0; j < dense->bias.size(); ++j) {
        out.values(pos++) = dense->bias(j);
      }
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      for (Eigen::Index j = 0; j < bn->gamma.size(); ++j) out.values(pos++) = bn->gamma(j);
      for (Eigen::Index j = 0; j < bn->beta.size(); ++j) out.values(pos++) = bn->beta(j);
      for (Eigen::Index j = 0; j < bn->running_mean.size(); ++j) {
        out.values(pos++) = bn->running_mean(j);
      }
      for (Eigen::Index j = 0; j < bn->running_var.size(); ++j) {
        out.values(pos++) = bn->running_var(j);
      }
    }
  }
  return out;
}

ModelParams unflatten(const ParameterVector& params) {
  ModelParams model = make_model_shell(params.layout);
  if (params.values.size() != static_cast<Eigen::Index>(model.full_size())) {
    throw ShapeError("unflatten: vector size " + std::to_string(params.values.size()) +
                     " vs layout size " + std::to_string(model.full_size()));
  }
  Eigen::Index pos = 0;
  for (auto& layer : model.layers) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (Eigen::Index i = 0; i < dense->weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < dense->weight.cols(); ++j) {
          dense->weight(i, j) = params.values(pos++);
        }
      }
      for (Eigen::Index j = 0; j < dense->bias.size(); ++j) {
        dense->bias(j) = params.values(pos++);
      }
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      for (Eigen::Index j = 0; j < bn->gamma.size(); ++j) bn->gamma(j) = params.values(pos++);
      for (Eigen::Index j = 0; j < bn->beta.size(); ++j) bn->beta(j) = params.values(pos++);
      for (Eigen::Index j = 0; j < bn->running_mean.size(); ++j) {
        bn->running_mean(j) = params.values(pos++);
      }
      for (Eigen::Index j = 0; j < bn->running_var.size(); ++j) {
        bn->running_var(j) = params.values(pos++);
      }
    }
  }
  return model;
}

}  // namespace fedspectre::nn
