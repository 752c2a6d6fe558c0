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

#include "idealmix/influence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idealmix {

const char* to_string(Method method) {
  return method == Method::kExact ? "exact" : "kfac";
}

const char* to_string(LayerRanking ranking) {
  switch (ranking) {
    case LayerRanking::kMean: return "mean";
    case LayerRanking::kSpread: return "spread";
    case LayerRanking::kTrailing: return "trailing";
  }
  return "mean";
}

Method method_from_string(const std::string& name) {
  if (name == "exact") return Method::kExact;
  if (name == "kfac") return Method::kKfac;
  fail(ErrorKind::kSchema, "unknown method '" + name + "' (expected exact|kfac)");
}

LayerRanking ranking_from_string(const std::string& name) {
  if (name == "mean") return LayerRanking::kMean;
  if (name == "spread") return LayerRanking::kSpread;
  if (name == "trailing") return LayerRanking::kTrailing;
  fail(ErrorKind::kSchema, "unknown layer ranking '" + name + "'");
}

DomainGradient domain_gradient(const ModelState& model, ExampleSpan domain,
                               double sample_factor, Rng& rng) {
  require(sample_factor > 0.0 && sample_factor <= 1.0, ErrorKind::kInvalidInput,
          "sample factor must lie in (0, 1]");
  require(!domain.empty(), ErrorKind::kInvalidInput, "domain_gradient: empty domain");
  const std::size_t n = domain.size();
  const auto count = static_cast<std::size_t>(
      std::ceil(sample_factor * static_cast<double>(n) - 1e-9));
  require(count > 0, ErrorKind::kInvalidInput, "domain_gradient: empty sample");

  DomainGradient out;
  if (count >= n) {
    out.sample.resize(n);
    std::iota(out.sample.begin(), out.sample.end(), std::size_t{0});
    Gradient g = grad(model, domain, Regularization::kExclude);
    out.gradient = std::move(g.flat);
    out.captures = std::move(g.captures);
    return out;
  }
  out.sample = rng.sample_without_replacement(n, count);
  std::vector<Example> picked;
  picked.reserve(count);
  for (std::size_t i : out.sample) picked.push_back(domain[i]);
  Gradient g = grad(model, picked, Regularization::kExclude);
  out.gradient = std::move(g.flat);
  out.captures = std::move(g.captures);
  return out;
}

std::vector<CurvatureBlock> build_kfac(std::span<const std::vector<LayerCapture>> capture_sets,
                                       const DampingPolicy& policy) {
  require(!capture_sets.empty() && !capture_sets.front().empty(), ErrorKind::kInvalidInput,
          "build_kfac: no captures");
  const std::size_t num_layers = capture_sets.front().size();
  std::vector<CurvatureBlock> blocks;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const Index in = capture_sets.front()[l].inputs.rows();
    const Index out = capture_sets.front()[l].errors.rows();
    Index examples = 0;
    for (const auto& set : capture_sets) {
      require(set.size() == num_layers && set[l].inputs.rows() == in &&
                  set[l].errors.rows() == out &&
                  set[l].inputs.cols() == set[l].errors.cols(),
              ErrorKind::kInvalidInput, "build_kfac: inconsistent capture shapes");
      require(set[l].inputs.allFinite() && set[l].errors.allFinite(),
              ErrorKind::kNumericalFailure, "build_kfac: non-finite capture");
      examples += set[l].inputs.cols();
    }
    require(examples >= 2, ErrorKind::kInvalidInput,
            "build_kfac: need at least 2 examples, got " + std::to_string(examples));

    CurvatureBlock block;
    block.layer_index = l;
    block.input_factor = MatrixXd::Zero(in, in);
    block.error_factor = MatrixXd::Zero(out, out);
    for (const auto& set : capture_sets) {
      block.input_factor.noalias() += set[l].inputs * set[l].inputs.transpose();
      block.error_factor.noalias() += set[l].errors * set[l].errors.transpose();
    }
    const double inv = 1.0 / static_cast<double>(examples);
    block.input_factor *= inv;
    block.error_factor *= inv;
    require(block.input_factor.allFinite() && block.error_factor.allFinite(),
            ErrorKind::kNumericalFailure,
            "build_kfac: non-finite curvature in layer " + std::to_string(l));
    block.input_eig = sym_eig(block.input_factor);
    block.error_eig = sym_eig(block.error_factor);

    // Project each per-example gradient onto the Kronecker eigenbasis.
    const MatrixXd qx_t = block.input_eig.vectors.transpose();
    const MatrixXd qd_t = block.error_eig.vectors.transpose();
    block.lambda_corrected = VectorXd::Zero(in * out);
    for (const auto& set : capture_sets) {
      for (Index n = 0; n < set[l].inputs.cols(); ++n) {
        const MatrixXd outer = set[l].errors.col(n) * set[l].inputs.col(n).transpose();
        const Eigen::Map<const VectorXd> example_grad(outer.data(), outer.size());
        block.lambda_corrected += kron_matvec(qx_t, qd_t, example_grad).cwiseAbs2();
      }
    }
    block.lambda_corrected *= inv;
    require(block.lambda_corrected.allFinite(), ErrorKind::kNumericalFailure,
            "build_kfac: non-finite curvature in layer " + std::to_string(l));
    blocks.push_back(std::move(block));
  }

  std::vector<std::size_t> all(num_layers);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const double damping = resolve_damping(blocks, all, policy);
  for (auto& b : blocks) b.damping = damping;
  return blocks;
}

double resolve_damping(std::span<const CurvatureBlock> blocks,
                       std::span<const std::size_t> layers, const DampingPolicy& policy) {
  double total = 0.0;
  Index count = 0;
  for (std::size_t l : layers) {
    require(l < blocks.size(), ErrorKind::kInvalidInput, "resolve_damping: bad layer index");
    total += blocks[l].lambda_corrected.sum();
    count += blocks[l].lambda_corrected.size();
  }
  const double mean = count > 0 ? total / static_cast<double>(count) : 0.0;
  return std::max(policy.floor, policy.relative * mean);
}

VectorXd ihvp_kfac(std::span<const CurvatureBlock> blocks, const VectorXd& v,
                   std::span<const std::size_t> layers_used) {
  Index total = 0;
  std::vector<Index> offsets;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    require(blocks[l].layer_index == l, ErrorKind::kInvalidInput,
            "ihvp_kfac: blocks must be ordered by layer");
    offsets.push_back(total);
    total += blocks[l].param_count();
  }
  require(v.size() == total, ErrorKind::kInvalidInput,
          "ihvp_kfac: vector length " + std::to_string(v.size()) + ", expected " +
              std::to_string(total));

  VectorXd out = VectorXd::Zero(total);
  for (std::size_t l : layers_used) {
    require(l < blocks.size(), ErrorKind::kInvalidInput,
            "ihvp_kfac: layer " + std::to_string(l) + " not available");
    const CurvatureBlock& b = blocks[l];
    const VectorXd denom = b.lambda_corrected.array() + b.damping;
    require(denom.minCoeff() > 0.0, ErrorKind::kNumericalFailure,
            "ihvp_kfac: non-positive curvature in layer " + std::to_string(l));
    const MatrixXd& qx = b.input_eig.vectors;
    const MatrixXd& qd = b.error_eig.vectors;
    Eigen::Map<const MatrixXd> slice(v.data() + offsets[l], b.rows(), b.cols());
    MatrixXd rotated = qd.transpose() * slice * qx;
    rotated.array() /= Eigen::Map<const MatrixXd>(denom.data(), b.rows(), b.cols()).array();
    const MatrixXd back = qd * rotated * qx.transpose();
    out.segment(offsets[l], b.param_count()) =
        Eigen::Map<const VectorXd>(back.data(), back.size());
  }
  return out;
}

VectorXd ihvp_exact(const MatrixXd& hessian, double damping, const VectorXd& v) {
  require(hessian.rows() == hessian.cols() && hessian.rows() == v.size(),
          ErrorKind::kInvalidInput, "ihvp_exact: dimension mismatch");
  require(damping > 0.0 && std::isfinite(damping), ErrorKind::kInvalidInput,
          "ihvp_exact: damping must be positive");
  require(hessian.allFinite() && v.allFinite(), ErrorKind::kInvalidInput,
          "ihvp_exact: non-finite input");
  const double asym = (hessian - hessian.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-9 * std::max(1.0, hessian.cwiseAbs().maxCoeff()),
          ErrorKind::kInvalidInput, "ihvp_exact: hessian is not symmetric");

  MatrixXd shifted = hessian;
  shifted.diagonal().array() += damping;
  Eigen::LLT<MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(shifted, Eigen::EigenvaluesOnly);
    fail(ErrorKind::kNumericalFailure,
         "ihvp_exact: H + lambda I is not positive definite (minimum eigenvalue " +
             std::to_string(solver.eigenvalues().minCoeff()) + ")");
  }
  VectorXd u = llt.solve(v);
  u += llt.solve(v - shifted * u);  // one refinement step
  return u;
}

std::vector<std::size_t> select_layers(std::span<const CurvatureBlock> blocks, double fraction,
                                       LayerRanking ranking) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kInvalidInput,
          "layer fraction must lie in (0, 1]");
  std::vector<double> score(blocks.size());
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const VectorXd& lam = blocks[l].lambda_corrected;
    const double mean = lam.size() ? lam.mean() : 0.0;
    switch (ranking) {
      case LayerRanking::kMean: score[l] = mean; break;
      case LayerRanking::kSpread:
        score[l] = lam.size() ? std::sqrt((lam.array() - mean).square().mean()) : 0.0;
        break;
      case LayerRanking::kTrailing: score[l] = lam.size() ? lam.minCoeff() : 0.0; break;
    }
  }
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&score](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(blocks.size()) - 1e-9));
  order.resize(std::clamp<std::size_t>(keep, 1, blocks.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Hypergradient dq_dbeta(const ModelState& model, ExampleSpan reference,
                       std::span<const std::vector<Example>> domains,
                       const InfluenceConfig& cfg, Rng& rng) {
  require(!domains.empty(), ErrorKind::kInvalidInput, "dq_dbeta: no domains");
  require(!reference.empty(), ErrorKind::kInvalidInput, "dq_dbeta: empty reference");
  std::size_t total = 0;
  for (const auto& d : domains) {
    require(!d.empty(), ErrorKind::kInvalidInput, "dq_dbeta: empty domain");
    total += d.size();
  }

  const VectorXd ref_grad = grad(model, reference, Regularization::kExclude).flat;
  std::vector<DomainGradient> parts;
  parts.reserve(domains.size());
  for (const auto& d : domains)
    parts.push_back(domain_gradient(model, d, cfg.sample_factor, rng));

  Hypergradient out;
  VectorXd solved;
  if (cfg.method == Method::kExact) {
    std::vector<Example> sampled;
    for (std::size_t j = 0; j < domains.size(); ++j)
      for (std::size_t i : parts[j].sample) sampled.push_back(domains[j][i]);
    const MatrixXd hessian = exact_hessian(model, sampled);
    out.damping = cfg.exact_damping;
    out.layers_used.resize(model.spec.num_layers());
    std::iota(out.layers_used.begin(), out.layers_used.end(), std::size_t{0});
    solved = ihvp_exact(hessian, out.damping, ref_grad);
  } else {
    std::vector<std::vector<LayerCapture>> captures;
    for (auto& p : parts) captures.push_back(std::move(p.captures));
    std::vector<CurvatureBlock> blocks = build_kfac(captures, cfg.damping);
    out.layers_used = select_layers(blocks, cfg.layer_fraction, cfg.ranking);
    out.damping = resolve_damping(blocks, out.layers_used, cfg.damping);
    for (auto& b : blocks) b.damping = out.damping + model.spec.l2_reg;
    solved = ihvp_kfac(blocks, ref_grad, out.layers_used);
  }

  out.alpha.resize(static_cast<Index>(domains.size()));
  for (std::size_t j = 0; j < domains.size(); ++j) {
    const double share = static_cast<double>(domains[j].size()) / static_cast<double>(total);
    out.alpha(static_cast<Index>(j)) = -share * solved.dot(parts[j].gradient);
  }
  return out;
}

ScaledBeta scale_beta(const VectorXd& alpha, double m) {
  require(m > 0.0 && std::isfinite(m), ErrorKind::kInvalidInput, "scale cap m must be positive");
  require(alpha.allFinite(), ErrorKind::kInvalidInput, "scale_beta: non-finite alpha");
  ScaledBeta out;
  const double peak = alpha.size() ? alpha.cwiseAbs().maxCoeff() : 0.0;
  if (peak < 1e-15) {
    out.beta = VectorXd::Zero(alpha.size());
    out.degenerate = true;
    return out;
  }
  out.gamma = m / peak;
  out.beta = -out.gamma * alpha;
  // Pin the extreme coordinates so max|beta| == m holds bit-exactly.
  for (Index i = 0; i < alpha.size(); ++i)
    if (std::abs(alpha(i)) == peak) out.beta(i) = alpha(i) > 0.0 ? -m : m;
  return out;
}

InfluenceReport compute_influence(const ModelState& model, ExampleSpan reference,
                                  std::span<const std::vector<Example>> domains,
                                  const InfluenceConfig& cfg, double m, Rng& rng) {
  const Hypergradient h = dq_dbeta(model, reference, domains, cfg, rng);
  const ScaledBeta scaled = scale_beta(h.alpha, m);
  InfluenceReport report;
  report.method = cfg.method;
  report.m = m;
  report.sample_factor = cfg.sample_factor;
  report.damping = h.damping;
  report.layers_used = h.layers_used;
  report.alpha = h.alpha;
  report.gamma = scaled.gamma;
  report.beta = scaled.beta;
  report.degenerate = scaled.degenerate;
  return report;
}

}  // namespace idealmix
