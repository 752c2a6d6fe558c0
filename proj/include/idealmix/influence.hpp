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

#ifndef IDEALMIX_INFLUENCE_HPP_
#define IDEALMIX_INFLUENCE_HPP_

#include <span>
#include <string>
#include <vector>

#include "idealmix/linalg.hpp"
#include "idealmix/model.hpp"
#include "idealmix/rng.hpp"

namespace idealmix {

enum class Method { kExact, kKfac };

/// How layers are ranked when only a fraction of them is kept. kMean
/// (mean corrected eigenvalue, ascending) is the default; kSpread ranks by
/// the standard deviation of the corrected eigenvalues, kTrailing by the
/// smallest one.
enum class LayerRanking { kMean, kSpread, kTrailing };

const char* to_string(Method method);
const char* to_string(LayerRanking ranking);
Method method_from_string(const std::string& name);
LayerRanking ranking_from_string(const std::string& name);

/// lambda = max(floor, relative * mean(corrected eigenvalues of used layers)).
struct DampingPolicy {
  double floor = 1e-4;
  double relative = 0.1;
};

/// Eigenvalue-corrected Kronecker-factored curvature of one dense layer.
///
/// For per-example layer gradients g = x ⊗ delta (vec of delta xᵀ):
///   input_factor  X     = mean x xᵀ
///   error_factor  Delta = mean delta deltaᵀ
///   lambda_corrected[i] = mean ((Q_X ⊗ Q_Delta)ᵀ g)_i²
/// so the block is approximated by (Q_X ⊗ Q_Delta) diag(lambda) (Q_X ⊗ Q_Delta)ᵀ.
struct CurvatureBlock {
  std::size_t layer_index = 0;
  MatrixXd input_factor;
  MatrixXd error_factor;
  EigenPair<double> input_eig;
  EigenPair<double> error_eig;
  VectorXd lambda_corrected;
  double damping = 0.0;

  Index rows() const { return error_factor.rows(); }
  Index cols() const { return input_factor.rows(); }
  Index param_count() const { return rows() * cols(); }
};

struct DomainGradient {
  VectorXd gradient;                       // data term only, mean over the sample
  std::vector<LayerCapture> captures;
  std::vector<std::size_t> sample;         // indices into the domain, ascending
};

/// Mean data-loss gradient over ceil(sample_factor * |domain|) examples drawn
/// without replacement. sample_factor == 1 uses the whole domain in order.
DomainGradient domain_gradient(const ModelState& model, ExampleSpan domain,
                               double sample_factor, Rng& rng);

/// Builds one block per layer from captures pooled over every source in
/// `capture_sets` (each entry is one per-layer capture list, e.g. one domain
/// sample). Damping is set from `policy` over all layers.
std::vector<CurvatureBlock> build_kfac(std::span<const std::vector<LayerCapture>> capture_sets,
                                       const DampingPolicy& policy = {});

double resolve_damping(std::span<const CurvatureBlock> blocks,
                       std::span<const std::size_t> layers, const DampingPolicy& policy);

/// Blocks must cover layers 0..L-1 in order. Slices of unused layers are zero.
VectorXd ihvp_kfac(std::span<const CurvatureBlock> blocks, const VectorXd& v,
                   std::span<const std::size_t> layers_used);

/// Solves (hessian + damping I) u = v by Cholesky; indefinite systems raise
/// kNumericalFailure with the minimum eigenvalue of the shifted matrix.
VectorXd ihvp_exact(const MatrixXd& hessian, double damping, const VectorXd& v);

std::vector<std::size_t> select_layers(std::span<const CurvatureBlock> blocks, double fraction,
                                       LayerRanking ranking = LayerRanking::kMean);

struct InfluenceConfig {
  Method method = Method::kKfac;
  double sample_factor = 0.5;
  double layer_fraction = 1.0;
  LayerRanking ranking = LayerRanking::kMean;
  DampingPolicy damping;
  double exact_damping = 1e-6;
};

struct Hypergradient {
  VectorXd alpha;
  double damping = 0.0;
  std::vector<std::size_t> layers_used;
};

/// d(reference loss)/d(beta_j) at beta = 0 for every domain j:
///
///   alpha_j = -(|D_j| / N) * grad_ref(theta)ᵀ (H + lambda I)^-1 grad_j(theta)
///
/// where beta_j duplicates a fraction beta_j of domain j, so it adds
/// beta_j |D_j| / N times the domain's mean loss to the mean training
/// objective. grad_ref and grad_j are data-term gradients (no regularizer);
/// H is the Hessian of the regularized training objective, exact or K-FAC.
/// For K-FAC the regularizer's l2_reg I is added to the damping shift.
Hypergradient dq_dbeta(const ModelState& model, ExampleSpan reference,
                       std::span<const std::vector<Example>> domains,
                       const InfluenceConfig& cfg, Rng& rng);

struct ScaledBeta {
  double gamma = 0.0;
  VectorXd beta;
  bool degenerate = false;
};

/// gamma = m / max|alpha|, beta = -gamma * alpha. Degenerate (gamma = 0,
/// beta = 0) when max|alpha| < 1e-15.
ScaledBeta scale_beta(const VectorXd& alpha, double m);

struct InfluenceReport {
  Method method = Method::kKfac;
  double m = 0.15;
  double sample_factor = 0.5;
  double damping = 0.0;
  std::vector<std::size_t> layers_used;
  VectorXd alpha;
  double gamma = 0.0;
  VectorXd beta;
  bool degenerate = false;
};

InfluenceReport compute_influence(const ModelState& model, ExampleSpan reference,
                                  std::span<const std::vector<Example>> domains,
                                  const InfluenceConfig& cfg, double m, Rng& rng);

}  // namespace idealmix

#endif  // IDEALMIX_INFLUENCE_HPP_
