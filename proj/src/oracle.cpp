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

#include "idealmix/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace idealmix {

Batch reweighted_batch(const MixtureState& state, const VectorXd& beta) {
  require(beta.size() == static_cast<Index>(state.domains.size()), ErrorKind::kInvalidInput,
          "reweighted_batch: beta length does not match domain count");
  const std::vector<Example> all = state.union_examples();
  const double n = static_cast<double>(all.size());
  VectorXd weights(static_cast<Index>(all.size()));
  Index k = 0;
  for (std::size_t i = 0; i < state.domains.size(); ++i) {
    const double b = beta(static_cast<Index>(i));
    require(std::isfinite(b) && b > -1.0, ErrorKind::kInvalidInput,
            "reweighted_batch: beta must be > -1");
    for (std::size_t e = 0; e < state.domains[i].size(); ++e) weights(k++) = (1.0 + b) / n;
  }
  return make_batch(all, weights);
}

OracleResult fd_influence(const MixtureState& state, const ModelSpec& spec,
                          const TrainConfig& cfg, std::size_t domain, double epsilon) {
  require(spec.num_layers() == 1 && spec.l2_reg > 0.0, ErrorKind::kInvalidInput,
          "fd_influence needs a strictly convex model (logistic, l2_reg > 0)");
  require(epsilon >= 1e-3 && epsilon <= 1e-1, ErrorKind::kInvalidInput,
          "fd_influence: epsilon must lie in [1e-3, 1e-1]");
  require(domain < state.domains.size(), ErrorKind::kInvalidInput,
          "fd_influence: domain index out of range");

  const auto retrain = [&](double shift, TrainMeta& meta) {
    VectorXd beta = VectorXd::Zero(static_cast<Index>(state.domains.size()));
    beta(static_cast<Index>(domain)) = shift;
    const ModelState model = train_to_convergence(spec, reweighted_batch(state, beta), cfg);
    meta = model.meta;
    require(model.meta.converged, ErrorKind::kOracleInvalid,
            "oracle retrain for domain '" + state.domains[domain].name +
                "' did not converge (grad norm " + std::to_string(model.meta.grad_norm) +
                " after " + std::to_string(model.meta.iterations) + " iterations)");
    return loss(model, state.reference.examples, Regularization::kExclude);
  };

  OracleResult out;
  out.domain = domain;
  out.epsilon = epsilon;
  out.q_plus = retrain(epsilon, out.meta_plus);
  out.q_minus = retrain(-epsilon, out.meta_minus);
  out.fd_alpha = (out.q_plus - out.q_minus) / (2.0 * epsilon);
  require(std::isfinite(out.fd_alpha), ErrorKind::kOracleInvalid,
          "oracle for domain '" + state.domains[domain].name + "' is not finite");
  return out;
}

GridResult brute_mixture_eval(const MixtureState& state, const ModelSpec& spec,
                              const TrainConfig& cfg, std::span<const VectorXd> grid) {
  require(grid.size() <= kMaxGridPoints, ErrorKind::kInvalidInput,
          "brute_mixture_eval: grid larger than " + std::to_string(kMaxGridPoints));
  require(state.domains.size() <= kMaxGridDomains, ErrorKind::kInvalidInput,
          "brute_mixture_eval: at most " + std::to_string(kMaxGridDomains) + " domains");
  GridResult out;
  double best = std::numeric_limits<double>::infinity();
  for (const VectorXd& beta : grid) {
    GridPoint point;
    point.beta = beta;
    const ModelState model = train_to_convergence(spec, reweighted_batch(state, beta), cfg);
    point.meta = model.meta;
    point.converged = model.meta.converged;
    point.q = loss(model, state.reference.examples, Regularization::kExclude);
    if (point.converged && point.q < best) {
      best = point.q;
      out.argmin = out.points.size();
    }
    out.points.push_back(std::move(point));
  }
  return out;
}

namespace {

VectorXd average_ranks(const VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) {
    return v(static_cast<Index>(a)) < v(static_cast<Index>(b));
  });
  VectorXd ranks(v.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v(static_cast<Index>(order[j + 1])) == v(static_cast<Index>(order[i]))) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks(static_cast<Index>(order[k])) = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const VectorXd& a, const VectorXd& b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorKind::kInvalidInput,
          "spearman: need two equal-length vectors of length >= 2");
  const VectorXd ra = average_ranks(a), rb = average_ranks(b);
  const VectorXd ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return ca.dot(cb) / denom;
}

}  // namespace idealmix
