// Copyright 2026 The idealmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "idealmix/model.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "idealmix/dual.hpp"
#include "idealmix/rng.hpp"

namespace idealmix {

ModelSpec ModelSpec::logistic(Index features, Index classes, double l2_reg) {
  ModelSpec spec;
  spec.layers = {{features, classes}};
  spec.activation = Activation::kNone;
  spec.l2_reg = l2_reg;
  return spec;
}

ModelSpec ModelSpec::mlp(Index features, const std::vector<Index>& hidden, Index classes,
                         Activation activation, double l2_reg) {
  ModelSpec spec;
  Index in = features;
  for (Index h : hidden) {
    spec.layers.push_back({in, h});
    in = h;
  }
  spec.layers.push_back({in, classes});
  spec.activation = activation;
  spec.l2_reg = l2_reg;
  return spec;
}

Index ModelSpec::layer_offset(std::size_t l) const {
  Index offset = 0;
  for (std::size_t i = 0; i < l; ++i) offset += layer_param_count(i);
  return offset;
}

Index ModelSpec::num_params() const { return layer_offset(layers.size()); }

void ModelSpec::validate() const {
  require(!layers.empty(), ErrorKind::kInvalidInput, "model spec has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    require(layers[l].in > 0 && layers[l].out > 0, ErrorKind::kInvalidInput,
            "layer " + std::to_string(l) + " has a zero dimension");
    if (l + 1 < layers.size())
      require(layers[l].out == layers[l + 1].in, ErrorKind::kInvalidInput,
              "layer " + std::to_string(l) + " output does not chain into layer " +
                  std::to_string(l + 1));
  }
  require(num_classes() >= 2, ErrorKind::kInvalidInput, "need at least 2 classes");
  require(std::isfinite(l2_reg) && l2_reg >= 0.0, ErrorKind::kInvalidInput,
          "l2_reg must be finite and nonnegative");
}

ModelState ModelState::zeros(const ModelSpec& spec) {
  spec.validate();
  ModelState state;
  state.spec = spec;
  for (std::size_t l = 0; l < spec.num_layers(); ++l)
    state.weights.push_back(MatrixXd::Zero(spec.weight_rows(l), spec.weight_cols(l)));
  return state;
}

ModelState ModelState::from_flat(const ModelSpec& spec, const VectorXd& flat) {
  ModelState state = zeros(spec);
  require(flat.size() == spec.num_params(), ErrorKind::kDimensionMismatch,
          "flat parameter vector has length " + std::to_string(flat.size()) +
              ", model expects " + std::to_string(spec.num_params()));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Index rows = spec.weight_rows(l), cols = spec.weight_cols(l);
    state.weights[l] = Eigen::Map<const MatrixXd>(flat.data() + spec.layer_offset(l), rows, cols);
  }
  return state;
}

VectorXd ModelState::flat() const {
  VectorXd out(spec.num_params());
  for (std::size_t l = 0; l < weights.size(); ++l)
    out.segment(spec.layer_offset(l), weights[l].size()) =
        Eigen::Map<const VectorXd>(weights[l].data(), weights[l].size());
  return out;
}

namespace {

void check_batch(const ModelSpec& spec, const Batch& batch) {
  require(batch.size() > 0, ErrorKind::kInvalidInput, "empty dataset");
  require(batch.features.rows() == spec.input_dim(), ErrorKind::kDimensionMismatch,
          "feature length " + std::to_string(batch.features.rows()) +
              " does not match model input " + std::to_string(spec.input_dim()));
  require(batch.labels.size() == batch.size() && batch.weights.size() == batch.size(),
          ErrorKind::kInvalidInput, "batch labels/weights length mismatch");
  for (Index n = 0; n < batch.size(); ++n)
    require(batch.labels(n) >= 0 && batch.labels(n) < spec.num_classes(),
            ErrorKind::kInvalidInput,
            "label " + std::to_string(batch.labels(n)) + " out of range");
}

template <typename Scalar>
Scalar activate(Activation act, const Scalar& z) {
  using std::tanh;
  switch (act) {
    case Activation::kTanh: return tanh(z);
    case Activation::kRelu: return z > Scalar(0) ? z : Scalar(0);
    case Activation::kNone: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation z.
template <typename Scalar>
Scalar activate_deriv(Activation act, const Scalar& z) {
  using std::tanh;
  switch (act) {
    case Activation::kTanh: {
      const Scalar t = tanh(z);
      return Scalar(1) - t * t;
    }
    case Activation::kRelu: return z > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::kNone: return Scalar(1);
  }
  return Scalar(1);
}

template <typename Scalar>
Matrix<Scalar> with_bias_row(const ModelSpec& spec, Matrix<Scalar> a) {
  if (spec.bias != BiasMode::kFolded) return a;
  a.conservativeResize(a.rows() + 1, Eigen::NoChange);
  a.row(a.rows() - 1).setConstant(Scalar(1));
  return a;
}

// Objective value of the batch; fills per-layer gradients and, for double,
// per-example captures when requested. Reductions run in a fixed order.
template <typename Scalar>
Scalar evaluate(const ModelSpec& spec, const std::vector<Matrix<Scalar>>& w,
                const Batch& batch, Regularization reg,
                std::vector<Matrix<Scalar>>* grads, std::vector<LayerCapture>* captures) {
  using std::exp;
  using std::log;
  const std::size_t num_layers = spec.num_layers();
  const Index n = batch.size();

  std::vector<Matrix<Scalar>> inputs(num_layers);
  std::vector<Matrix<Scalar>> pre(num_layers);
  inputs[0] = with_bias_row<Scalar>(spec, batch.features.template cast<Scalar>());
  for (std::size_t l = 0; l < num_layers; ++l) {
    pre[l] = w[l] * inputs[l];
    if (l + 1 < num_layers) {
      const Activation act = spec.activation;
      Matrix<Scalar> a = pre[l].unaryExpr([act](const Scalar& z) { return activate(act, z); });
      inputs[l + 1] = with_bias_row<Scalar>(spec, std::move(a));
    }
  }

  const Matrix<Scalar>& logits = pre.back();
  Matrix<Scalar> err(logits.rows(), n);  // softmax minus one-hot
  Scalar data_term(0);
  for (Index c = 0; c < n; ++c) {
    Scalar peak = logits(0, c);
    for (Index k = 1; k < logits.rows(); ++k)
      if (logits(k, c) > peak) peak = logits(k, c);
    Scalar total(0);
    for (Index k = 0; k < logits.rows(); ++k) total += exp(logits(k, c) - peak);
    const Scalar lse = peak + log(total);
    const int y = batch.labels(c);
    data_term += Scalar(batch.weights(c)) * (lse - logits(y, c));
    for (Index k = 0; k < logits.rows(); ++k) err(k, c) = exp(logits(k, c) - lse);
    err(y, c) -= Scalar(1);
  }

  Scalar objective = data_term;
  const bool regularize = reg == Regularization::kInclude && spec.l2_reg > 0.0;
  if (regularize) {
    Scalar sq(0);
    for (const auto& m : w) sq += m.squaredNorm();
    objective += Scalar(0.5 * spec.l2_reg) * sq;
  }
  if (grads == nullptr && captures == nullptr) return objective;

  if (grads) grads->assign(num_layers, Matrix<Scalar>());
  if constexpr (std::is_same_v<Scalar, double>) {
    if (captures) captures->assign(num_layers, LayerCapture{});
  }
  const Vector<Scalar> wts = batch.weights.template cast<Scalar>();
  for (std::size_t l = num_layers; l-- > 0;) {
    if (grads) {
      Matrix<Scalar> g = (err * wts.asDiagonal()) * inputs[l].transpose();
      if (regularize) g += Scalar(spec.l2_reg) * w[l];
      (*grads)[l] = std::move(g);
    }
    if constexpr (std::is_same_v<Scalar, double>) {
      if (captures) (*captures)[l] = LayerCapture{l, inputs[l], err};
    }
    if (l > 0) {
      Matrix<Scalar> back = w[l].transpose() * err;
      if (spec.bias == BiasMode::kFolded) back.conservativeResize(back.rows() - 1, Eigen::NoChange);
      const Activation act = spec.activation;
      err = back.cwiseProduct(
          pre[l - 1].unaryExpr([act](const Scalar& z) { return activate_deriv(act, z); }));
    }
  }
  return objective;
}

VectorXd flatten(const ModelSpec& spec, const std::vector<MatrixXd>& mats) {
  VectorXd out(spec.num_params());
  for (std::size_t l = 0; l < mats.size(); ++l)
    out.segment(spec.layer_offset(l), mats[l].size()) =
        Eigen::Map<const VectorXd>(mats[l].data(), mats[l].size());
  return out;
}

}  // namespace

Batch make_batch(ExampleSpan examples) {
  const auto n = static_cast<Index>(examples.size());
  return make_batch(examples, VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0));
}

Batch make_batch(ExampleSpan examples, const VectorXd& weights) {
  require(!examples.empty(), ErrorKind::kInvalidInput, "empty dataset");
  require(weights.size() == static_cast<Index>(examples.size()), ErrorKind::kInvalidInput,
          "weights length does not match example count");
  const Index dim = examples.front().x.size();
  Batch batch;
  batch.features.resize(dim, static_cast<Index>(examples.size()));
  batch.labels.resize(static_cast<Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    require(examples[i].x.size() == dim, ErrorKind::kDimensionMismatch,
            "example " + std::to_string(i) + " has feature length " +
                std::to_string(examples[i].x.size()) + ", expected " + std::to_string(dim));
    batch.features.col(static_cast<Index>(i)) = examples[i].x;
    batch.labels(static_cast<Index>(i)) = examples[i].y;
  }
  batch.weights = weights;
  return batch;
}

VectorXd forward(const ModelState& model, const VectorXd& x) {
  require(x.size() == model.spec.input_dim(), ErrorKind::kInvalidInput,
          "forward: input length " + std::to_string(x.size()) + ", expected " +
              std::to_string(model.spec.input_dim()));
  MatrixXd a = with_bias_row<double>(model.spec, MatrixXd(x));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    MatrixXd z = model.weights[l] * a;
    if (l + 1 == model.weights.size()) {
      VectorXd logits = z.col(0);
      VectorXd p = (logits.array() - logits.maxCoeff()).exp();
      return p / p.sum();
    }
    const Activation act = model.spec.activation;
    a = with_bias_row<double>(model.spec,
                              z.unaryExpr([act](double v) { return activate(act, v); }));
  }
  return {};
}

double loss(const ModelState& model, const Batch& batch, Regularization reg) {
  check_batch(model.spec, batch);
  return evaluate<double>(model.spec, model.weights, batch, reg, nullptr, nullptr);
}

double loss(const ModelState& model, ExampleSpan data, Regularization reg) {
  return loss(model, make_batch(data), reg);
}

Gradient grad(const ModelState& model, const Batch& batch, Regularization reg) {
  check_batch(model.spec, batch);
  std::vector<MatrixXd> grads;
  Gradient out;
  evaluate<double>(model.spec, model.weights, batch, reg, &grads, &out.captures);
  out.flat = flatten(model.spec, grads);
  return out;
}

Gradient grad(const ModelState& model, ExampleSpan data, Regularization reg) {
  return grad(model, make_batch(data), reg);
}

MatrixXd exact_hessian(const ModelState& model, const Batch& batch, Index max_params) {
  const ModelSpec& spec = model.spec;
  const Index params = spec.num_params();
  require(params <= max_params, ErrorKind::kSizeGuard,
          "exact_hessian: model has " + std::to_string(params) +
              " parameters, guard is " + std::to_string(max_params));
  check_batch(spec, batch);

  using D = Dual<double>;
  std::vector<Matrix<D>> w;
  for (const auto& m : model.weights) w.push_back(m.cast<D>());

  MatrixXd hessian(params, params);
  std::vector<Matrix<D>> grads;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    for (Index k = 0; k < w[l].size(); ++k) {
      w[l].data()[k].d = 1.0;
      evaluate<D>(spec, w, batch, Regularization::kInclude, &grads, nullptr);
      w[l].data()[k].d = 0.0;
      const Index col = spec.layer_offset(l) + k;
      for (std::size_t g = 0; g < grads.size(); ++g)
        for (Index i = 0; i < grads[g].size(); ++i)
          hessian(spec.layer_offset(g) + i, col) = grads[g].data()[i].d;
    }
  }
  return (hessian + hessian.transpose()) / 2.0;
}

MatrixXd exact_hessian(const ModelState& model, ExampleSpan data, Index max_params) {
  return exact_hessian(model, make_batch(data), max_params);
}

ModelState initialize(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  VectorXd flat(spec.num_params());
  for (Index i = 0; i < flat.size(); ++i) flat(i) = rng.uniform(-0.05, 0.05);
  return ModelState::from_flat(spec, flat);
}

ModelState train_to_convergence(const ModelSpec& spec, const Batch& batch,
                                const TrainConfig& cfg) {
  spec.validate();
  check_batch(spec, batch);
  require(cfg.learning_rate > 0.0 && cfg.tol >= 0.0 && cfg.max_iters >= 0,
          ErrorKind::kInvalidInput, "invalid training configuration");

  ModelState state = initialize(spec, cfg.seed);
  VectorXd theta = state.flat();
  std::vector<MatrixXd> grads;

  auto eval = [&](const VectorXd& params, VectorXd* gradient) {
    const ModelState probe = ModelState::from_flat(spec, params);
    const double f = evaluate<double>(spec, probe.weights, batch, Regularization::kInclude,
                                      gradient ? &grads : nullptr, nullptr);
    if (gradient) *gradient = flatten(spec, grads);
    return f;
  };

  VectorXd g;
  double f = eval(theta, &g);
  require(std::isfinite(f), ErrorKind::kNumericalFailure,
          "non-finite loss at iteration 0");

  const bool loose = cfg.fixed_iterations > 0;
  const long budget = loose ? cfg.fixed_iterations : cfg.max_iters;
  double step = cfg.learning_rate;
  long it = 0;
  for (; it < budget; ++it) {
    if (!loose && g.lpNorm<Eigen::Infinity>() <= cfg.tol) break;
    const double g_sq = g.squaredNorm();
    if (g_sq == 0.0) break;

    double t = step;
    bool accepted = false;
    VectorXd trial, trial_g;
    double trial_f = 0.0;
    for (int k = 0; k < 80; ++k, t *= 0.5) {
      trial = theta - t * g;
      trial_f = eval(trial, &trial_g);
      if (!std::isfinite(trial_f)) continue;
      const bool armijo = trial_f <= f - 1e-4 * t * g_sq;
      // Near the optimum loss differences drop below roundoff; fall back to
      // requiring a smaller gradient at a loss that is equal up to roundoff.
      const bool flat = trial_f - f <= 8.0 * std::numeric_limits<double>::epsilon() *
                                           std::max(1.0, std::abs(f)) &&
                        trial_g.squaredNorm() < g_sq;
      if (armijo || flat) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Roundoff floor: no representable descent left along -g.
      require(std::isfinite(trial_f), ErrorKind::kNumericalFailure,
              "non-finite loss at iteration " + std::to_string(it + 1));
      break;
    }

    const VectorXd s = trial - theta;
    const VectorXd y = trial_g - g;
    const double sy = s.dot(y);
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : 2.0 * t;

    theta = std::move(trial);
    g = std::move(trial_g);
    f = trial_f;
  }

  state = ModelState::from_flat(spec, theta);
  state.meta.grad_norm = g.lpNorm<Eigen::Infinity>();
  state.meta.iterations = it;
  state.meta.converged = state.meta.grad_norm <= cfg.tol;
  return state;
}

ModelState train_to_convergence(const ModelSpec& spec, ExampleSpan data,
                                const TrainConfig& cfg) {
  return train_to_convergence(spec, make_batch(data), cfg);
}

}  // namespace idealmix
