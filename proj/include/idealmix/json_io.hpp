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

#ifndef IDEALMIX_JSON_IO_HPP_
#define IDEALMIX_JSON_IO_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"

#include "idealmix/influence.hpp"
#include "idealmix/model.hpp"

namespace idealmix {

using Json = nlohmann::json;

/// Deterministic rendering: keys sorted, floats with 17 significant digits
/// ("%.17g"), non-finite floats as null, two-space indentation, trailing
/// newline. `indent < 0` renders a single line without the newline.
std::string dump_json(const Json& value, int indent = 2);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const Json& value);

Json to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);

inline constexpr int kModelFormatVersion = 1;

Json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const Json& j);

/// Checkpoint: {"format": "idealmix-model", "version": 1, "spec": ...,
/// "weights": [[layer 0 column-major]...], "train_meta": {...}}.
Json model_to_json(const ModelState& model);
ModelState model_from_json(const Json& j);

/// {method, m, sigma, lambda, layers_used, alpha, gamma, beta, degenerate_flag}
Json influence_to_json(const InfluenceReport& report);

}  // namespace idealmix

#endif  // IDEALMIX_JSON_IO_HPP_
