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

#ifndef IDEALMIX_ORACLE_HPP_
#define IDEALMIX_ORACLE_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "idealmix/mixture.hpp"
#include "idealmix/model.hpp"

namespace idealmix {

/// Training batch over the union of domains with domain i's examples
/// weighted (1 + beta_i) / N, the loss-weighting form of resampling.
Batch reweighted_batch(const MixtureState& state, const VectorXd& beta);

/// Retrains with the reweighted objective at beta = +-epsilon e_j and
/// returns the reference loss at both optima with their centered difference.
struct OracleResult {
  std::size_t domain = 0;
  double epsilon = 0.0;
  double q_plus = 0.0;
  double q_minus = 0.0;
  double fd_alpha = 0.0;
  TrainMeta meta_plus;
  TrainMeta meta_minus;
};

/// Requires a strictly convex family (single layer, l2_reg > 0) and
/// epsilon in [1e-3, 1e-1]. A retrain that does not converge raises
/// kOracleInvalid naming the domain; the oracle never returns a value
/// computed from a non-converged model.
OracleResult fd_influence(const MixtureState& state, const ModelSpec& spec,
                          const TrainConfig& cfg, std::size_t domain, double epsilon);

struct GridPoint {
  VectorXd beta;
  double q = 0.0;
  bool converged = false;
  TrainMeta meta;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::optional<std::size_t> argmin;  // among converged points
};

inline constexpr std::size_t kMaxGridPoints = 200;
inline constexpr std::size_t kMaxGridDomains = 3;

/// Reference loss at every beta in the grid (reweighting form). Points
/// whose training did not converge are kept and flagged, never dropped.
GridResult brute_mixture_eval(const MixtureState& state, const ModelSpec& spec,
                              const TrainConfig& cfg, std::span<const VectorXd> grid);

/// Spearman rank correlation with average ranks for ties. Returns NaN when
/// either input is constant.
double spearman(const VectorXd& a, const VectorXd& b);

}  // namespace idealmix

#endif  // IDEALMIX_ORACLE_HPP_
