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

#ifndef IDEALMIX_MODEL_HPP_
#define IDEALMIX_MODEL_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "idealmix/linalg.hpp"

namespace idealmix {

enum class Activation { kTanh, kRelu, kNone };
enum class BiasMode { kFolded, kNone };

struct LayerDims {
  Index in = 0;
  Index out = 0;
};

/// Dense feed-forward classifier with a softmax head. A single layer is
/// multinomial logistic regression. With BiasMode::kFolded every layer input
/// gets a trailing constant-1 feature, so layer l owns an
/// out × (in + 1) weight matrix.
struct ModelSpec {
  std::vector<LayerDims> layers;
  Activation activation = Activation::kNone;
  double l2_reg = 0.0;
  BiasMode bias = BiasMode::kFolded;

  static ModelSpec logistic(Index features, Index classes, double l2_reg);
  static ModelSpec mlp(Index features, const std::vector<Index>& hidden, Index classes,
                       Activation activation, double l2_reg);

  Index input_dim() const { return layers.front().in; }
  Index num_classes() const { return layers.back().out; }
  std::size_t num_layers() const { return layers.size(); }
  Index weight_rows(std::size_t l) const { return layers[l].out; }
  Index weight_cols(std::size_t l) const {
    return layers[l].in + (bias == BiasMode::kFolded ? 1 : 0);
  }
  Index layer_param_count(std::size_t l) const { return weight_rows(l) * weight_cols(l); }
  Index layer_offset(std::size_t l) const;
  Index num_params() const;

  /// Throws kInvalidInput unless layer dims chain, classes >= 2, l2_reg >= 0.
  void validate() const;
};

struct TrainMeta {
  double grad_norm = 0.0;
  long iterations = 0;
  bool converged = false;
};

struct ModelState {
  ModelSpec spec;
  std::vector<MatrixXd> weights;
  TrainMeta meta;

  static ModelState zeros(const ModelSpec& spec);
  static ModelState from_flat(const ModelSpec& spec, const VectorXd& flat);
  /// Concatenation of the column-major vec of each layer's weight matrix.
  VectorXd flat() const;
};

/// One labelled example. `tag` is the source-domain index for reference
/// examples and -1 elsewhere; it never influences training.
struct Example {
  VectorXd x;
  int y = 0;
  int tag = -1;
};

using ExampleSpan = std::span<const Example>;

/// Column-per-example design matrix with per-example objective weights.
/// The data term of the objective is sum_n weights[n] * loss_n.
struct Batch {
  MatrixXd features;
  Eigen::VectorXi labels;
  VectorXd weights;

  Index size() const { return features.cols(); }
};

/// Uniform weights 1/n, i.e. the per-example mean.
Batch make_batch(ExampleSpan examples);
Batch make_batch(ExampleSpan examples, const VectorXd& weights);

/// Inputs (with the folded constant-1 row) and per-example output errors
/// dloss_n/dz for one layer; column n belongs to example n. The per-example
/// weight gradient of the layer is errors.col(n) * inputs.col(n)ᵀ.
struct LayerCapture {
  std::size_t layer_index = 0;
  MatrixXd inputs;
  MatrixXd errors;
};

struct Gradient {
  VectorXd flat;
  std::vector<LayerCapture> captures;
};

enum class Regularization { kInclude, kExclude };

VectorXd forward(const ModelState& model, const VectorXd& x);

/// Weighted cross-entropy plus (l2_reg / 2) ||theta||^2 when included.
double loss(const ModelState& model, const Batch& batch,
            Regularization reg = Regularization::kInclude);
double loss(const ModelState& model, ExampleSpan data,
            Regularization reg = Regularization::kInclude);

Gradient grad(const ModelState& model, const Batch& batch,
              Regularization reg = Regularization::kInclude);
Gradient grad(const ModelState& model, ExampleSpan data,
              Regularization reg = Regularization::kInclude);

inline constexpr Index kHessianParamGuard = 4000;

/// Exact Hessian of the (regularized) objective via forward-over-reverse
/// differentiation, one Hessian-vector product per parameter.
MatrixXd exact_hessian(const ModelState& model, const Batch& batch,
                       Index max_params = kHessianParamGuard);
MatrixXd exact_hessian(const ModelState& model, ExampleSpan data,
                       Index max_params = kHessianParamGuard);

struct TrainConfig {
  double learning_rate = 1.0;  // first trial step
  long max_iters = 50000;
  double tol = 1e-6;           // on ||grad||_inf
  std::uint64_t seed = 0;      // initialization
  long fixed_iterations = 0;   // > 0: loose mode, run exactly this many steps
};

/// Seeded uniform(-0.05, 0.05) initialization in flat parameter order.
ModelState initialize(const ModelSpec& spec, std::uint64_t seed);

/// Full-batch gradient descent with Armijo backtracking. The first trial step
/// of each iteration is the Barzilai-Borwein step from the previous move.
ModelState train_to_convergence(const ModelSpec& spec, const Batch& batch,
                                const TrainConfig& cfg);
ModelState train_to_convergence(const ModelSpec& spec, ExampleSpan data,
                                const TrainConfig& cfg);

}  // namespace idealmix

#endif  // IDEALMIX_MODEL_HPP_
