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

#include "idealmix/cli.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"

#include "idealmix/json_io.hpp"
#include "idealmix/loop.hpp"
#include "idealmix/mixture.hpp"
#include "idealmix/oracle.hpp"
#include "idealmix/rng.hpp"

namespace idealmix::cli {

namespace {

constexpr std::uint64_t kPurposeSweep = 7;

int exit_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumericalFailure:
    case ErrorKind::kOracleInvalid:
    case ErrorKind::kSizeGuard:
      return 1;
    default:
      return 2;
  }
}

CommandOutcome failure(const Error& e, std::ostream& log) {
  log << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
  return {exit_status_for(e.kind()), {}, e.what()};
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed,
                      const std::optional<std::string>& strategy) {
  Json j = path.empty() ? Json::object() : read_json_file(path);
  require(j.is_object(), ErrorKind::kSchema, "config must be a JSON object");
  if (seed) j["seed"] = *seed;
  if (strategy) j["strategy"] = *strategy;
  return run_config_from_json(j);
}

std::string format_sizes(const std::vector<std::size_t>& sizes) {
  std::string s;
  for (std::size_t i = 0; i < sizes.size(); ++i) s += (i ? "," : "") + std::to_string(sizes[i]);
  return s;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_records(const RunResult& result, const MixtureState& state, std::ostream& log) {
  log << std::left << std::setw(4) << "t" << std::setw(28) << "sizes" << std::setw(18)
      << "max|beta| domain" << "Q\n";
  for (const auto& r : result.records) {
    std::string lead = "-";
    if (r.beta.size() > 0 && r.beta.cwiseAbs().maxCoeff() > 0.0) {
      Index arg = 0;
      r.beta.cwiseAbs().maxCoeff(&arg);
      lead = state.domains[static_cast<std::size_t>(arg)].name;
    }
    log << std::setw(4) << r.t << std::setw(28) << format_sizes(r.sizes_before) << std::setw(18)
        << lead << std::setprecision(8) << r.q << "\n";
  }
}

CommandOutcome run_into(const MixtureState& state, const RunConfig& cfg, const fs::path& out,
                        std::ostream& log) {
  const RunResult result = run_strategy(state, cfg);
  CommandOutcome outcome;
  outcome.artifacts = write_run_directory(result, cfg, state, out);
  print_records(result, state, log);
  if (result.error) {
    outcome.exit_status = 1;
    outcome.summary = "run failed: " + *result.error;
  } else {
    outcome.summary = strategy_name(cfg) + ": " + std::to_string(result.records.size()) +
                      " iteration(s), best Q " + csv_number(result.records[static_cast<std::size_t>(
                                                     result.best_t - 1)].q) +
                      " at t=" + std::to_string(result.best_t);
  }
  return outcome;
}

}  // namespace

CommandOutcome cmd_synth(const SynthArgs& args, std::ostream& log) {
  try {
    require(!args.out.empty(), ErrorKind::kInvalidInput, "--out is required");
    ScenarioOptions opts;
    opts.feature_dim = args.feature_dim;
    opts.classes = args.classes;
    opts.reference_size = args.reference_size;
    const MixtureState state =
        synth_scenario(scenario_from_string(args.kind), args.sizes, args.seed, opts);
    CommandOutcome outcome;
    outcome.artifacts = write_manifest(state, args.out);
    outcome.summary = "wrote " + args.kind + " scenario with " +
                      std::to_string(state.domains.size()) + " domains to " + args.out.string();
    return outcome;
  } catch (const Error& e) {
    return failure(e, log);
  }
}

CommandOutcome cmd_run(const RunArgs& args, std::ostream& log) {
  try {
    require(!args.out.empty(), ErrorKind::kInvalidInput, "--out is required");
    const RunConfig cfg = load_config(args.config, args.seed, args.strategy);
    const MixtureState state = load_manifest(args.manifest);
    return run_into(state, cfg, args.out, log);
  } catch (const Error& e) {
    return failure(e, log);
  }
}

CommandOutcome cmd_oracle_check(const OracleArgs& args, std::ostream& log) {
  try {
    require(!args.out.empty(), ErrorKind::kInvalidInput, "--out is required");
    const RunConfig cfg = load_config(args.config, args.seed, std::nullopt);
    const MixtureState state = load_manifest(args.manifest);
    const ModelSpec spec = cfg.model.build(state.feature_dim, state.classes);
    require(spec.num_layers() == 1 && spec.l2_reg > 0.0, ErrorKind::kInvalidInput,
            "oracle-check needs a strictly convex model (no hidden layers, l2_reg > 0)");
    require(spec.num_params() <= kHessianParamGuard, ErrorKind::kSizeGuard,
            "oracle-check: model has " + std::to_string(spec.num_params()) +
                " parameters, exact Hessian guard is " + std::to_string(kHessianParamGuard));
    const TrainConfig tcfg = cfg.train_config();
    const fs::path oracle_path = args.out / "oracle.json";
    const std::size_t n = state.domains.size();

    Json doc = {{"epsilon", args.epsilon}, {"thresholds", {{"rel_error", 0.05}, {"spearman", 0.8}}}};
    auto invalid = [&](const std::string& what, const std::string& domain) {
      doc["status"] = "oracle-invalid";
      doc["error"] = what;
      if (!domain.empty()) doc["failing_domain"] = domain;
      doc["pass"] = false;
      write_json_file(oracle_path, doc);
      log << "oracle-invalid: " << what << "\n";
      return CommandOutcome{1, {oracle_path}, "oracle-invalid: " + what};
    };

    std::vector<OracleResult> results;
    for (std::size_t j = 0; j < n; ++j) {
      try {
        results.push_back(fd_influence(state, spec, tcfg, j, args.epsilon));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kOracleInvalid) throw;
        return invalid(e.what(), state.domains[j].name);
      }
    }

    const ModelState model = train_to_convergence(spec, state.union_examples(), tcfg);
    if (!model.meta.converged)
      return invalid("base model did not converge (grad norm " +
                         std::to_string(model.meta.grad_norm) + ")",
                     "");

    const auto domains = state.domain_examples();
    InfluenceConfig ic = cfg.influence();
    ic.sample_factor = 1.0;
    ic.method = Method::kExact;
    Rng rng_exact(derive_seed(cfg.seed, 0, 11));
    const VectorXd exact = dq_dbeta(model, state.reference.examples, domains, ic, rng_exact).alpha;
    ic.method = Method::kKfac;
    Rng rng_kfac(derive_seed(cfg.seed, 0, 12));
    const VectorXd kfac = dq_dbeta(model, state.reference.examples, domains, ic, rng_kfac).alpha;

    Json rows = Json::array();
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const OracleResult& o = results[j];
      const auto jj = static_cast<Index>(j);
      const double rel = std::abs(o.fd_alpha - exact(jj)) / std::abs(o.fd_alpha);
      worst = std::max(worst, std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity());
      rows.push_back({{"domain", state.domains[j].name},
                      {"fd_alpha", o.fd_alpha},
                      {"q_plus", o.q_plus},
                      {"q_minus", o.q_minus},
                      {"exact_alpha", exact(jj)},
                      {"kfac_alpha", kfac(jj)},
                      {"rel_error_exact", rel},
                      {"rel_error_kfac", std::abs(o.fd_alpha - kfac(jj)) / std::abs(o.fd_alpha)}});
    }

    Index lead = 0;
    exact.cwiseAbs().maxCoeff(&lead);
    const bool sign_ok = (exact(lead) > 0.0) == (kfac(lead) > 0.0);
    const double rank = n >= 2 ? spearman(kfac, exact) : std::numeric_limits<double>::quiet_NaN();
    const bool rank_gated = n >= 5;
    const bool rank_ok = !rank_gated || (std::isfinite(rank) && rank >= 0.8);
    const bool pass = worst <= 0.05 && sign_ok && rank_ok;

    doc["status"] = "ok";
    doc["domains"] = rows;
    doc["max_rel_error_exact"] = worst;
    doc["spearman_kfac_exact"] = rank;
    doc["spearman_gated"] = rank_gated;
    doc["lead_sign_agrees"] = sign_ok;
    doc["pass"] = pass;
    doc["base_train_meta"] = {{"grad_norm", model.meta.grad_norm},
                              {"iterations", model.meta.iterations},
                              {"converged", model.meta.converged}};
    write_json_file(oracle_path, doc);

    std::ostringstream summary;
    summary << "oracle-check " << (pass ? "passed" : "FAILED") << ": max relative error "
            << worst << ", spearman " << rank << ", lead sign " << (sign_ok ? "agrees" : "differs");
    return {pass ? 0 : 1, {oracle_path}, summary.str()};
  } catch (const Error& e) {
    return failure(e, log);
  }
}

CommandOutcome cmd_report(const ReportArgs& args, std::ostream& log) {
  try {
    require(!args.run_dirs.empty(), ErrorKind::kInvalidInput, "no run directories given");
    require(args.format == "csv" || args.format == "json", ErrorKind::kInvalidInput,
            "unknown format '" + args.format + "' (expected csv|json)");

    struct Loaded {
      std::string dir;
      Json report;
    };
    std::vector<Loaded> runs;
    std::vector<std::string> names;
    for (const auto& dir : args.run_dirs) {
      const fs::path p = dir / "report.json";
      require(fs::exists(p), ErrorKind::kIo, "missing " + p.string());
      Json r = read_json_file(p);
      require(r.is_object() && r.value("format", "") == "idealmix-report" &&
                  r.contains("records") && r.contains("domains") && r.contains("strategy"),
              ErrorKind::kSchema, "corrupt report " + p.string());
      for (const auto& name : r.at("domains")) {
        const auto s = name.get<std::string>();
        if (std::find(names.begin(), names.end(), s) == names.end()) names.push_back(s);
      }
      runs.push_back({dir.string(), std::move(r)});
    }

    std::string text;
    Json rows = Json::array();
    if (args.format == "csv") {
      text = "run,strategy,t,q,gamma";
      for (const auto& n : names) text += ",size_" + n + ",beta_" + n + ",slice_" + n;
      text += "\n";
    }
    for (const auto& run : runs) {
      const Json& r = run.report;
      const Json& domains = r.at("domains");
      for (const auto& rec : r.at("records")) {
        try {
          Json sizes = Json::object(), betas = Json::object(), slices = Json::object();
          for (std::size_t i = 0; i < domains.size(); ++i) {
            const auto name = domains[i].get<std::string>();
            sizes[name] = rec.at("sizes_before").at(i);
            betas[name] = rec.at("beta").at(i);
            slices[name] = rec.at("slice_losses").at(i);
          }
          const std::string strategy = r.at("strategy").get<std::string>();
          const double q = rec.at("q").get<double>();
          const double gamma = rec.at("gamma").get<double>();
          const int t = rec.at("t").get<int>();
          rows.push_back({{"run", run.dir}, {"strategy", strategy}, {"t", t}, {"q", q},
                          {"gamma", gamma}, {"sizes", sizes}, {"beta", betas},
                          {"slice_losses", slices}});
          if (args.format == "csv") {
            text += run.dir + "," + strategy + "," + std::to_string(t) + "," + csv_number(q) +
                    "," + csv_number(gamma);
            for (const auto& n : names) {
              if (!sizes.contains(n)) {
                text += ",,,";
                continue;
              }
              text += "," + std::to_string(sizes[n].get<std::size_t>()) + "," +
                      csv_number(betas[n].get<double>()) + "," +
                      (slices[n].is_number() ? csv_number(slices[n].get<double>()) : "");
            }
            text += "\n";
          }
        } catch (const Json::exception& e) {
          fail(ErrorKind::kSchema, "corrupt record in " + run.dir + ": " + e.what());
        }
      }
    }
    if (args.format == "json")
      text = dump_json({{"format", "idealmix-comparison"}, {"version", 1}, {"domains", names},
                        {"rows", rows}});

    CommandOutcome outcome;
    if (args.out.empty()) {
      log << text;
    } else {
      write_text_file(args.out, text);
      outcome.artifacts.push_back(args.out);
    }
    outcome.summary = "compared " + std::to_string(runs.size()) + " run(s)";
    return outcome;
  } catch (const Error& e) {
    return failure(e, log);
  }
}

CommandOutcome cmd_sweep(const SweepArgs& args, std::ostream& log) {
  try {
    require(!args.run.out.empty(), ErrorKind::kInvalidInput, "--out is required");
    require(args.param == "m" || args.param == "sigma", ErrorKind::kInvalidInput,
            "sweep parameter must be m or sigma");
    require(!args.values.empty(), ErrorKind::kInvalidInput, "sweep needs values");
    const RunConfig base = load_config(args.run.config, args.run.seed, args.run.strategy);
    const MixtureState state = load_manifest(args.run.manifest);

    CommandOutcome outcome;
    Json points = Json::array();
    int status = 0;
    for (std::size_t i = 0; i < args.values.size(); ++i) {
      RunConfig cfg = base;
      (args.param == "m" ? cfg.m : cfg.sigma) = args.values[i];
      cfg.seed = derive_seed(base.seed, i, kPurposeSweep);
      cfg.validate();
      const fs::path dir = args.run.out / (args.param + "_" + format_value(args.values[i]));
      log << "== " << args.param << " = " << format_value(args.values[i]) << "\n";
      const RunResult result = run_strategy(state, cfg);
      const auto written = write_run_directory(result, cfg, state, dir);
      outcome.artifacts.insert(outcome.artifacts.end(), written.begin(), written.end());
      print_records(result, state, log);
      if (result.error) status = 1;

      Json qs = Json::array();
      Json sizes = Json::array();
      double swing = 0.0;
      for (const auto& r : result.records) {
        qs.push_back(r.q);
        Json row = Json::array();
        for (std::size_t s : r.sizes_before) row.push_back(s);
        sizes.push_back(row);
        for (std::size_t d = 0; d < r.sizes_before.size(); ++d)
          swing += std::abs(static_cast<double>(r.sizes_after[d]) -
                            static_cast<double>(r.sizes_before[d]));
      }
      if (!result.records.empty()) swing /= static_cast<double>(result.records.size());
      points.push_back({{"value", args.values[i]},
                        {"dir", dir.filename().string()},
                        {"seed", cfg.seed},
                        {"q", qs},
                        {"sizes", sizes},
                        {"final_sizes", result.final_state.sizes()},
                        {"mean_abs_size_change", swing},
                        {"status", result.error ? "failed" : "ok"}});
    }
    const fs::path summary_path = args.run.out / "sweep.json";
    write_json_file(summary_path, {{"param", args.param}, {"points", points}});
    outcome.artifacts.push_back(summary_path);
    outcome.exit_status = status;
    outcome.summary = "swept " + args.param + " over " + std::to_string(args.values.size()) +
                      " value(s)";
    return outcome;
  } catch (const Error& e) {
    return failure(e, log);
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"idealmix: influence-driven data mixture reweighting"};
  app.require_subcommand(1);

  SynthArgs synth;
  std::string sizes_text = "500,500,500";
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-domain scenario");
  synth_cmd->add_option("--kind", synth.kind, "conflict | skewed-reference | benign")
      ->check(CLI::IsMember({"conflict", "skewed-reference", "benign"}));
  synth_cmd->add_option("--sizes", sizes_text, "comma-separated domain sizes");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--reference-size", synth.reference_size, "reference set size");
  synth_cmd->add_option("--feature-dim", synth.feature_dim, "feature dimension");
  synth_cmd->add_option("--classes", synth.classes, "class count");

  RunArgs run;
  std::uint64_t seed_value = 0;
  std::string strategy_value;
  auto add_run_flags = [&](CLI::App* cmd, RunArgs& target) {
    cmd->add_option("--manifest", target.manifest, "manifest JSON")->required();
    cmd->add_option("--config", target.config, "run config JSON");
    cmd->add_option("--out", target.out, "output directory")->required();
    cmd->add_option("--seed", seed_value, "root seed (overrides config)");
    cmd->add_option("--strategy", strategy_value,
                    "ideal | joint | random | specific:<domain> (overrides config)");
  };
  auto* run_cmd = app.add_subcommand("run", "run influence-guided reweighting or a baseline strategy");
  add_run_flags(run_cmd, run);

  OracleArgs oracle;
  auto* oracle_cmd =
      app.add_subcommand("oracle-check", "compare hypergradients with retraining differences");
  oracle_cmd->add_option("--manifest", oracle.manifest, "manifest JSON")->required();
  oracle_cmd->add_option("--config", oracle.config, "run config JSON");
  oracle_cmd->add_option("--out", oracle.out, "output directory")->required();
  oracle_cmd->add_option("--seed", seed_value, "root seed (overrides config)");
  oracle_cmd->add_option("--epsilon", oracle.epsilon, "perturbation size");

  ReportArgs report;
  std::vector<std::string> run_dirs;
  auto* report_cmd = app.add_subcommand("report", "tabulate run directories");
  report_cmd->add_option("run_dirs", run_dirs, "run directories");
  report_cmd->add_option("--format", report.format, "csv | json");
  report_cmd->add_option("--out", report.out, "output file (default stdout)");

  SweepArgs sweep;
  std::string values_text = "0.1,0.15,0.3";
  auto* sweep_cmd = app.add_subcommand("sweep", "repeat a run over values of m or sigma");
  add_run_flags(sweep_cmd, sweep.run);
  sweep_cmd->add_option("--param", sweep.param, "m | sigma")->check(CLI::IsMember({"m", "sigma"}));
  sweep_cmd->add_option("--values", values_text, "comma-separated values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  auto split = [](const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    return parts;
  };

  CommandOutcome outcome;
  try {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    if (app.got_subcommand("run") || app.got_subcommand("sweep") ||
        app.got_subcommand("oracle-check")) {
      CLI::App* cmd = app.get_subcommands().front();
      if (cmd->count("--seed")) seed = seed_value;
      if (cmd->get_option_no_throw("--strategy") && cmd->count("--strategy"))
        strategy = strategy_value;
    }
    if (synth_cmd->parsed()) {
      synth.sizes.clear();
      for (const auto& s : split(sizes_text)) synth.sizes.push_back(std::stoul(s));
      outcome = cmd_synth(synth, err);
    } else if (run_cmd->parsed()) {
      run.seed = seed;
      run.strategy = strategy;
      outcome = cmd_run(run, out);
    } else if (oracle_cmd->parsed()) {
      oracle.seed = seed;
      outcome = cmd_oracle_check(oracle, err);
    } else if (report_cmd->parsed()) {
      for (const auto& d : run_dirs) report.run_dirs.emplace_back(d);
      outcome = cmd_report(report, out);
    } else if (sweep_cmd->parsed()) {
      sweep.run.seed = seed;
      sweep.run.strategy = strategy;
      sweep.values.clear();
      for (const auto& v : split(values_text)) sweep.values.push_back(std::stod(v));
      outcome = cmd_sweep(sweep, out);
    }
  } catch (const std::invalid_argument& e) {
    err << "error: malformed list argument\n" << app.help();
    return 2;
  } catch (const std::out_of_range& e) {
    err << "error: list argument out of range\n";
    return 2;
  }
  if (!outcome.summary.empty()) err << outcome.summary << "\n";
  return outcome.exit_status;
}

}  // namespace idealmix::cli
