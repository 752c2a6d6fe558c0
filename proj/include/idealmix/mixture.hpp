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

#ifndef IDEALMIX_MIXTURE_HPP_
#define IDEALMIX_MIXTURE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idealmix/model.hpp"

namespace idealmix {

enum class ProvenanceKind { kFile, kSynthetic, kResampled };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::kSynthetic;
  std::string source;        // file path, scenario name, or parent domain
  std::uint64_t seed = 0;
};

struct DomainDataset {
  std::string name;
  std::vector<Example> examples;
  Provenance provenance;

  std::size_t size() const { return examples.size(); }
};

/// Training domains at one step of the reweighting loop, plus the held-out
/// reference set whose examples carry their source-domain index in `tag`.
struct MixtureState {
  int iteration = 0;
  Index feature_dim = 0;
  Index classes = 0;
  std::vector<DomainDataset> domains;
  std::vector<VectorXd> beta_history;
  DomainDataset reference;

  std::vector<std::size_t> sizes() const;
  std::size_t total() const;
  std::vector<Example> union_examples() const;
  std::vector<std::vector<Example>> domain_examples() const;
  int domain_index(const std::string& name) const;  // -1 when absent

  /// Nonempty domains, consistent feature length, labels in range and a
  /// reference set sharing no example with any domain.
  void validate() const;
};

/// max(1, round-half-up((1 + beta) * size)).
std::size_t resampled_size(std::size_t size, double beta);

/// Resizes every domain by its beta: growth keeps all examples and appends
/// uniform draws with replacement, shrinkage keeps a uniform subset without
/// replacement (original order preserved). Domain i draws from the stream
/// derive_seed(seed, i, 0).
MixtureState apply_beta(const MixtureState& state, const VectorXd& beta, std::uint64_t seed);

/// Manifest JSON: {"feature_dim": n, "classes": k,
///   "domains": [{"name": s, "path": p}, ...], "reference": {"path": p}};
/// relative paths resolve against the manifest's directory.
MixtureState load_manifest(const std::filesystem::path& path);

/// Writes manifest.json, <domain>.jsonl per domain and reference.jsonl into
/// `dir`. Returns the paths written, manifest first.
std::vector<std::filesystem::path> write_manifest(const MixtureState& state,
                                                  const std::filesystem::path& dir);

/// JSON-lines, one {"x": [...], "y": k} object per line; reference lines
/// may carry "domain": i.
std::vector<Example> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples);

enum class ScenarioKind { kConflict, kSkewedReference, kBenign };

const char* to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(const std::string& name);

struct ScenarioOptions {
  Index feature_dim = 4;
  Index classes = 3;
  std::size_t reference_size = 600;
  double reference_skew = 0.7;  // share of domain 0 in a skewed reference
};

/// Gaussian-cluster classification domains. Every domain i has a center
/// mu_i, isotropic spread s and a label rule R_i (classes × features);
/// x = mu_i + s * N(0, I) and y ~ softmax(R_i x). A shared rule S has
/// N(0, 2²) entries.
///
///   conflict:         mu_i ~ N(0, 0.75²) per coordinate, s = 1,
///                     R_i = S + E_i with E_i ~ N(0, 2²): overlapping
///                     regions, partially contradictory rules.
///   skewed-reference: domains as in conflict; the reference draws a
///                     `reference_skew` share from domain 0, the rest
///                     evenly from the others.
///   benign:           mu_i = ±4 e_(i mod d), s = 0.75, R_i = S:
///                     disjoint regions, one consistent rule.
///
/// conflict and benign split the reference evenly across domains.
MixtureState synth_scenario(ScenarioKind kind, const std::vector<std::size_t>& sizes,
                            std::uint64_t seed, const ScenarioOptions& options = {});

}  // namespace idealmix

#endif  // IDEALMIX_MIXTURE_HPP_
