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

#include "idealmix/loop.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "idealmix/rng.hpp"

namespace idealmix {

namespace fs = std::filesystem;

namespace {

// Purpose tags for derive_seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kPurposeInit = 1;
constexpr std::uint64_t kPurposeInfluence = 2;
constexpr std::uint64_t kPurposeResample = 3;
constexpr std::uint64_t kPurposeRandomBeta = 4;

}  // namespace

ModelSpec ModelConfig::build(Index features, Index classes) const {
  ModelSpec spec = hidden.empty() ? ModelSpec::logistic(features, classes, l2_reg)
                                  : ModelSpec::mlp(features, hidden, classes, activation, l2_reg);
  spec.validate();
  return spec;
}

void RunConfig::validate() const {
  require(T >= 1, ErrorKind::kSchema, "T must be >= 1");
  require(sigma > 0.0 && sigma <= 1.0, ErrorKind::kSchema, "sigma must lie in (0, 1]");
  require(m > 0.0 && std::isfinite(m), ErrorKind::kSchema, "m must be positive");
  require(m < 1.0, ErrorKind::kSchema, "m must be < 1 so that every beta stays above -1");
  require(stop_tol >= 0.0, ErrorKind::kSchema, "stop_tol must be >= 0");
  require(rho > 0.0 && rho <= 1.0, ErrorKind::kSchema, "rho must lie in (0, 1]");
  require(damping.floor > 0.0 && damping.relative >= 0.0, ErrorKind::kSchema,
          "damping_floor must be > 0 and damping_relative >= 0");
  require(exact_damping > 0.0, ErrorKind::kSchema, "exact_damping must be > 0");
  require(train.learning_rate > 0.0 && train.max_iters >= 0 && train.tol >= 0.0 &&
              train.fixed_iterations >= 0,
          ErrorKind::kSchema, "invalid train settings");
  require(model.l2_reg >= 0.0, ErrorKind::kSchema, "l2_reg must be >= 0");
  for (Index h : model.hidden) require(h > 0, ErrorKind::kSchema, "hidden widths must be > 0");
  require(strategy != Strategy::kSpecific || !specific_domain.empty(), ErrorKind::kSchema,
          "specific strategy needs a domain name");
}

InfluenceConfig RunConfig::influence() const {
  InfluenceConfig ic;
  ic.method = method;
  ic.sample_factor = sigma;
  ic.layer_fraction = rho;
  ic.ranking = layer_ranking;
  ic.damping = damping;
  ic.exact_damping = exact_damping;
  return ic;
}

std::uint64_t RunConfig::init_seed() const {
  return derive_seed(seed, kInitStream, kPurposeInit);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = init_seed();
  return t;
}

std::string strategy_name(const RunConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::kIdeal: return "ideal";
    case Strategy::kJoint: return "joint";
    case Strategy::kRandom: return "random";
    case Strategy::kSpecific: return "specific:" + cfg.specific_domain;
  }
  return "ideal";
}

namespace {

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "none") return Activation::kNone;
  fail(ErrorKind::kSchema, "unknown activation '" + s + "'");
}

const char* activation_str(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kNone: return "none";
  }
  return "none";
}

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::kSchema, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.contains(it.key()), ErrorKind::kSchema,
            "unknown key '" + it.key() + "' in " + where);
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"m", "sigma", "method", "rho", "layer_ranking", "damping_floor",
                  "damping_relative", "exact_damping", "T", "stop_tol", "train", "model", "seed",
                  "strategy"},
                 "config");
  RunConfig cfg;
  try {
    if (j.contains("m")) cfg.m = j.at("m").get<double>();
    if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<double>();
    if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("rho")) cfg.rho = j.at("rho").get<double>();
    if (j.contains("layer_ranking"))
      cfg.layer_ranking = ranking_from_string(j.at("layer_ranking").get<std::string>());
    if (j.contains("damping_floor")) cfg.damping.floor = j.at("damping_floor").get<double>();
    if (j.contains("damping_relative"))
      cfg.damping.relative = j.at("damping_relative").get<double>();
    if (j.contains("exact_damping")) cfg.exact_damping = j.at("exact_damping").get<double>();
    if (j.contains("T")) {
      require(j.at("T").is_number_integer(), ErrorKind::kSchema, "T must be an integer");
      cfg.T = j.at("T").get<int>();
    }
    if (j.contains("stop_tol")) cfg.stop_tol = j.at("stop_tol").get<double>();
    if (j.contains("seed")) {
      require(j.at("seed").is_number_unsigned(), ErrorKind::kSchema,
              "seed must be a nonnegative integer");
      cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      reject_unknown(t, {"learning_rate", "max_iters", "tol", "fixed_iterations"}, "config.train");
      if (t.contains("learning_rate")) cfg.train.learning_rate = t.at("learning_rate").get<double>();
      if (t.contains("max_iters")) cfg.train.max_iters = t.at("max_iters").get<long>();
      if (t.contains("tol")) cfg.train.tol = t.at("tol").get<double>();
      if (t.contains("fixed_iterations"))
        cfg.train.fixed_iterations = t.at("fixed_iterations").get<long>();
    }
    if (j.contains("model")) {
      const Json& mdl = j.at("model");
      reject_unknown(mdl, {"hidden", "activation", "l2_reg"}, "config.model");
      if (mdl.contains("hidden")) cfg.model.hidden = mdl.at("hidden").get<std::vector<Index>>();
      if (mdl.contains("activation"))
        cfg.model.activation = activation_from(mdl.at("activation").get<std::string>());
      if (mdl.contains("l2_reg")) cfg.model.l2_reg = mdl.at("l2_reg").get<double>();
    }
    if (j.contains("strategy")) {
      const std::string s = j.at("strategy").get<std::string>();
      if (s == "ideal") cfg.strategy = Strategy::kIdeal;
      else if (s == "joint") cfg.strategy = Strategy::kJoint;
      else if (s == "random") cfg.strategy = Strategy::kRandom;
      else if (s.rfind("specific:", 0) == 0) {
        cfg.strategy = Strategy::kSpecific;
        cfg.specific_domain = s.substr(9);
      } else {
        fail(ErrorKind::kSchema, "unknown strategy '" + s +
                                     "' (expected ideal|joint|random|specific:<domain>)");
      }
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Json run_config_to_json(const RunConfig& cfg) {
  return {{"m", cfg.m},
          {"sigma", cfg.sigma},
          {"method", to_string(cfg.method)},
          {"rho", cfg.rho},
          {"layer_ranking", to_string(cfg.layer_ranking)},
          {"damping_floor", cfg.damping.floor},
          {"damping_relative", cfg.damping.relative},
          {"exact_damping", cfg.exact_damping},
          {"T", cfg.T},
          {"stop_tol", cfg.stop_tol},
          {"train",
           {{"learning_rate", cfg.train.learning_rate},
            {"max_iters", cfg.train.max_iters},
            {"tol", cfg.train.tol},
            {"fixed_iterations", cfg.train.fixed_iterations}}},
          {"model",
           {{"hidden", cfg.model.hidden},
            {"activation", activation_str(cfg.model.activation)},
            {"l2_reg", cfg.model.l2_reg}}},
          {"seed", cfg.seed},
          {"strategy", strategy_name(cfg)}};
}

StopDecision stopping(const std::vector<IterationRecord>& records, int max_iterations,
                      double stop_tol) {
  require(!records.empty(), ErrorKind::kInvalidInput, "stopping: no records");
  const IterationRecord& last = records.back();
  if (last.t >= max_iterations) return {true, "max-iterations"};
  if (last.degenerate) return {true, "degenerate-beta"};
  if (records.size() >= 2) {
    const double prev = records[records.size() - 2].q;
    const double improvement = (prev - last.q) / prev;
    if (improvement < stop_tol) return {true, "no-improvement"};
  }
  return {false, ""};
}

double reference_loss(const ModelState& model, const MixtureState& state) {
  return loss(model, state.reference.examples, Regularization::kExclude);
}

VectorXd reference_slices(const ModelState& model, const MixtureState& state) {
  VectorXd out(static_cast<Index>(state.domains.size()));
  for (std::size_t i = 0; i < state.domains.size(); ++i) {
    std::vector<Example> slice;
    for (const auto& e : state.reference.examples)
      if (e.tag == static_cast<int>(i)) slice.push_back(e);
    out(static_cast<Index>(i)) = slice.empty()
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : loss(model, slice, Regularization::kExclude);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

ModelState train_on(const std::vector<Example>& data, const MixtureState& state,
                    const RunConfig& cfg) {
  const ModelSpec spec = cfg.model.build(state.feature_dim, state.classes);
  return train_to_convergence(spec, data, cfg.train_config());
}

void finish_best(RunResult& result) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    if (result.records[i].q < best) {
      best = result.records[i].q;
      result.best_t = result.records[i].t;
      result.best_model = result.models[i];
    }
  }
}

}  // namespace

RunResult run_ideal(const MixtureState& initial, const RunConfig& cfg) {
  cfg.validate();
  require(cfg.strategy == Strategy::kIdeal, ErrorKind::kInvalidInput,
          "run_ideal needs strategy ideal");
  initial.validate();

  RunResult result;
  result.strategy = Strategy::kIdeal;
  MixtureState state = initial;
  for (int t = 1; t <= cfg.T; ++t) {
    const auto start = Clock::now();
    ModelState model;
    try {
      model = train_on(state.union_examples(), state, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumericalFailure) throw;
      result.error = "iteration " + std::to_string(t) + ": " + e.what();
      result.stop_reason = "training-failure";
      break;
    }

    IterationRecord rec;
    rec.t = t;
    rec.sizes_before = state.sizes();
    rec.q = reference_loss(model, state);
    rec.slice_losses = reference_slices(model, state);
    rec.train_meta = model.meta;

    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t), kPurposeInfluence));
    const auto domains = state.domain_examples();
    InfluenceReport influence;
    MixtureState next;
    try {
      influence =
          compute_influence(model, state.reference.examples, domains, cfg.influence(), cfg.m, rng);
      next = apply_beta(state, influence.beta,
                        derive_seed(cfg.seed, static_cast<std::uint64_t>(t), kPurposeResample));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumericalFailure) throw;
      result.error = "iteration " + std::to_string(t) + ": " + e.what();
      result.stop_reason = "influence-failure";
      break;
    }

    rec.beta = influence.beta;
    rec.gamma = influence.gamma;
    rec.degenerate = influence.degenerate;
    rec.sizes_after = next.sizes();
    rec.wall_seconds = seconds_since(start);

    result.records.push_back(rec);
    result.models.push_back(std::move(model));
    result.influences.push_back(std::move(influence));
    result.mixtures.push_back(state);
    state = std::move(next);

    const StopDecision decision = stopping(result.records, cfg.T, cfg.stop_tol);
    if (decision.stop) {
      result.stop_reason = decision.reason;
      break;
    }
  }
  result.final_state = std::move(state);
  finish_best(result);
  return result;
}

RunResult run_baseline(const MixtureState& initial, const RunConfig& cfg) {
  cfg.validate();
  require(cfg.strategy != Strategy::kIdeal, ErrorKind::kInvalidInput,
          "run_baseline needs a baseline strategy");
  initial.validate();

  RunResult result;
  result.strategy = cfg.strategy;
  const auto start = Clock::now();
  IterationRecord rec;
  rec.t = 1;
  rec.sizes_before = initial.sizes();
  rec.beta = VectorXd::Zero(static_cast<Index>(initial.domains.size()));

  MixtureState trained = initial;
  std::vector<Example> data;
  switch (cfg.strategy) {
    case Strategy::kJoint:
      data = initial.union_examples();
      break;
    case Strategy::kRandom: {
      Rng rng(derive_seed(cfg.seed, 1, kPurposeRandomBeta));
      for (Index i = 0; i < rec.beta.size(); ++i) rec.beta(i) = rng.uniform(-cfg.m, cfg.m);
      trained = apply_beta(initial, rec.beta, derive_seed(cfg.seed, 1, kPurposeResample));
      data = trained.union_examples();
      break;
    }
    case Strategy::kSpecific: {
      const int idx = initial.domain_index(cfg.specific_domain);
      require(idx >= 0, ErrorKind::kInvalidInput,
              "unknown domain '" + cfg.specific_domain + "' for specific strategy");
      for (std::size_t i = 0; i < trained.domains.size(); ++i)
        if (static_cast<int>(i) != idx) trained.domains[i].examples.clear();
      data = initial.domains[static_cast<std::size_t>(idx)].examples;
      break;
    }
    case Strategy::kIdeal:
      break;
  }
  rec.sizes_after = trained.sizes();

  ModelState model;
  try {
    model = train_on(data, initial, cfg);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumericalFailure) throw;
    result.error = e.what();
    result.stop_reason = "training-failure";
    result.final_state = trained;
    return result;
  }
  rec.q = reference_loss(model, initial);
  rec.slice_losses = reference_slices(model, initial);
  rec.train_meta = model.meta;
  rec.wall_seconds = seconds_since(start);

  result.records.push_back(rec);
  result.models.push_back(std::move(model));
  result.mixtures.push_back(trained);
  result.final_state = std::move(trained);
  result.stop_reason = "baseline";
  finish_best(result);
  return result;
}

RunResult run_strategy(const MixtureState& state, const RunConfig& cfg) {
  return cfg.strategy == Strategy::kIdeal ? run_ideal(state, cfg) : run_baseline(state, cfg);
}

namespace {

Json sizes_json(const std::vector<std::size_t>& sizes) {
  Json arr = Json::array();
  for (std::size_t s : sizes) arr.push_back(s);
  return arr;
}

Json names_json(const MixtureState& state) {
  Json arr = Json::array();
  for (const auto& d : state.domains) arr.push_back(d.name);
  return arr;
}

}  // namespace

Json record_to_json(const IterationRecord& r) {
  return {{"t", r.t},
          {"sizes_before", sizes_json(r.sizes_before)},
          {"sizes_after", sizes_json(r.sizes_after)},
          {"beta", to_json(r.beta)},
          {"gamma", r.gamma},
          {"degenerate", r.degenerate},
          {"q", r.q},
          {"slice_losses", to_json(r.slice_losses)},
          {"train_meta",
           {{"grad_norm", r.train_meta.grad_norm},
            {"iterations", r.train_meta.iterations},
            {"converged", r.train_meta.converged}}}};
}

Json report_to_json(const RunResult& result, const RunConfig& cfg, const MixtureState& initial) {
  Json records = Json::array();
  for (const auto& r : result.records) records.push_back(record_to_json(r));
  Json beta_history = Json::array();
  for (const auto& b : result.final_state.beta_history) beta_history.push_back(to_json(b));
  Json out = {{"format", "idealmix-report"},
              {"version", 1},
              {"strategy", strategy_name(cfg)},
              {"domains", names_json(initial)},
              {"records", records},
              {"beta_history", beta_history},
              {"final_sizes", sizes_json(result.final_state.sizes())},
              {"best_t", result.best_t},
              {"stop_reason", result.stop_reason},
              {"status", result.error ? "failed" : "ok"}};
  if (result.error) out["error"] = *result.error;
  return out;
}

std::vector<fs::path> write_run_directory(const RunResult& result, const RunConfig& cfg,
                                          const MixtureState& initial, const fs::path& dir) {
  std::vector<fs::path> written;
  auto emit = [&written](const fs::path& p, const Json& j) {
    write_json_file(p, j);
    written.push_back(p);
  };
  auto emit_datasets = [&written](const fs::path& sub, const MixtureState& mix) {
    for (const auto& d : mix.domains) {
      const fs::path p = sub / (d.name + ".jsonl");
      write_jsonl(p, d.examples);
      written.push_back(p);
    }
  };

  emit(dir / "config.json", run_config_to_json(cfg));
  Json timing = Json::array();
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const fs::path iter = dir / ("iter_" + std::to_string(result.records[i].t));
    emit(iter / "model.json", model_to_json(result.models[i]));
    if (i < result.influences.size())
      emit(iter / "influence.json", influence_to_json(result.influences[i]));
    if (i < result.mixtures.size())
      emit_datasets(dir / "datasets" / ("iter_" + std::to_string(result.records[i].t)),
                    result.mixtures[i]);
    timing.push_back({{"t", result.records[i].t}, {"wall_seconds", result.records[i].wall_seconds}});
  }
  emit_datasets(dir / "datasets" / "final", result.final_state);
  emit(dir / "timing.json", timing);
  emit(dir / "report.json", report_to_json(result, cfg, initial));
  return written;
}

}  // namespace idealmix
