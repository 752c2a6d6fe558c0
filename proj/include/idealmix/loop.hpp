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

#ifndef IDEALMIX_LOOP_HPP_
#define IDEALMIX_LOOP_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "idealmix/influence.hpp"
#include "idealmix/json_io.hpp"
#include "idealmix/mixture.hpp"

namespace idealmix {

enum class Strategy { kIdeal, kJoint, kRandom, kSpecific };

struct ModelConfig {
  std::vector<Index> hidden;  // empty: multinomial logistic regression
  Activation activation = Activation::kTanh;
  double l2_reg = 1e-2;

  ModelSpec build(Index features, Index classes) const;
};

struct RunConfig {
  double m = 0.15;
  double sigma = 0.5;
  Method method = Method::kKfac;
  double rho = 1.0;
  LayerRanking layer_ranking = LayerRanking::kMean;
  DampingPolicy damping;
  double exact_damping = 1e-6;
  int T = 3;
  double stop_tol = 1e-3;
  TrainConfig train;  // train.seed is ignored; see init_seed()
  ModelConfig model;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kIdeal;
  std::string specific_domain;

  void validate() const;
  InfluenceConfig influence() const;
  /// Seed of the shared initial model M0; identical for every retrain.
  std::uint64_t init_seed() const;
  TrainConfig train_config() const;
};

/// Strict parse: unknown keys and type mismatches raise kSchema.
RunConfig run_config_from_json(const Json& j);
Json run_config_to_json(const RunConfig& cfg);
std::string strategy_name(const RunConfig& cfg);

struct IterationRecord {
  int t = 0;
  std::vector<std::size_t> sizes_before;
  std::vector<std::size_t> sizes_after;
  VectorXd beta;
  double gamma = 0.0;
  bool degenerate = false;
  double q = 0.0;              // mean reference cross-entropy, no regularizer
  VectorXd slice_losses;       // per source domain of the reference; NaN if empty
  TrainMeta train_meta;
  double wall_seconds = 0.0;
};

struct RunResult {
  Strategy strategy = Strategy::kIdeal;
  std::vector<IterationRecord> records;
  std::vector<ModelState> models;            // one per record
  std::vector<InfluenceReport> influences;   // one per record (ideal only)
  std::vector<MixtureState> mixtures;        // mixture trained at each record
  MixtureState final_state;
  std::optional<ModelState> best_model;
  int best_t = 0;
  std::string stop_reason;
  std::optional<std::string> error;          // set when the run aborted
};

struct StopDecision {
  bool stop = false;
  std::string reason;
};

/// Stop at t = T, on relative reference-loss improvement below stop_tol,
/// or on a degenerate beta.
StopDecision stopping(const std::vector<IterationRecord>& records, int max_iterations,
                      double stop_tol);

/// Reference loss Q and the per-domain reference slices for a model.
double reference_loss(const ModelState& model, const MixtureState& state);
VectorXd reference_slices(const ModelState& model, const MixtureState& state);

RunResult run_ideal(const MixtureState& state, const RunConfig& cfg);
RunResult run_baseline(const MixtureState& state, const RunConfig& cfg);
RunResult run_strategy(const MixtureState& state, const RunConfig& cfg);

Json record_to_json(const IterationRecord& record);
/// report.json content; wall times are left out so reruns are byte-identical.
Json report_to_json(const RunResult& result, const RunConfig& cfg, const MixtureState& initial);

/// config.json, iter_<t>/model.json, iter_<t>/influence.json,
/// datasets/iter_<t>/ (mixture trained at t), datasets/final/ (mixture after
/// the last resample),
/// report.json, timing.json.
std::vector<std::filesystem::path> write_run_directory(const RunResult& result,
                                                       const RunConfig& cfg,
                                                       const MixtureState& initial,
                                                       const std::filesystem::path& dir);

}  // namespace idealmix

#endif  // IDEALMIX_LOOP_HPP_
