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

#ifndef IDEALMIX_CLI_HPP_
#define IDEALMIX_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace idealmix::cli {

namespace fs = std::filesystem;

/// Exit status is 0 on success, 1 on runtime failures (numerical failure,
/// oracle-invalid, failed thresholds) and 2 on usage, schema or IO errors.
struct CommandOutcome {
  int exit_status = 0;
  std::vector<fs::path> artifacts;
  std::string summary;
};

struct SynthArgs {
  std::string kind = "conflict";
  std::vector<std::size_t> sizes{500, 500, 500};
  std::uint64_t seed = 0;
  fs::path out;
  std::size_t reference_size = 600;
  long feature_dim = 4;
  long classes = 3;
};

struct RunArgs {
  fs::path manifest;
  fs::path config;  // empty: defaults
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
};

struct OracleArgs {
  fs::path manifest;
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  double epsilon = 1e-2;
};

struct ReportArgs {
  std::vector<fs::path> run_dirs;
  std::string format = "csv";
  fs::path out;  // empty: write to the log stream
};

struct SweepArgs {
  RunArgs run;
  std::string param = "m";
  std::vector<double> values{0.1, 0.15, 0.3};
};

CommandOutcome cmd_synth(const SynthArgs& args, std::ostream& log);
CommandOutcome cmd_run(const RunArgs& args, std::ostream& log);
CommandOutcome cmd_oracle_check(const OracleArgs& args, std::ostream& log);
CommandOutcome cmd_report(const ReportArgs& args, std::ostream& log);
CommandOutcome cmd_sweep(const SweepArgs& args, std::ostream& log);

/// Parses argv and dispatches to one of the commands above.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace idealmix::cli

#endif  // IDEALMIX_CLI_HPP_
