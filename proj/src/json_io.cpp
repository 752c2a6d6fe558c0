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

#include "idealmix/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace idealmix {

namespace {

void render(const Json& value, int indent, int depth, std::string& out) {
  const bool pretty = indent >= 0;
  auto newline = [&](int level) {
    if (!pretty) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * level), ' ');
  };
  switch (value.type()) {
    case Json::value_t::object: {
      if (value.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {  // std::map: sorted
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += pretty ? ": " : ":";
        render(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (value.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& item : value) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        render(item, indent, depth + 1, out);
      }
      newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double d = value.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", d);
      out += buf;
      return;
    }
    default:
      out += value.dump();
  }
}

}  // namespace

std::string dump_json(const Json& value, int indent) {
  std::string out;
  render(value, indent, 0, out);
  if (indent >= 0) out += '\n';
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    require(!ec, ErrorKind::kIo, "cannot create directory " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

void write_json_file(const std::filesystem::path& path, const Json& value) {
  write_text_file(path, dump_json(value));
}

Json to_json(const VectorXd& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

VectorXd vector_from_json(const Json& j) {
  require(j.is_array(), ErrorKind::kSchema, "expected a numeric array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), ErrorKind::kSchema, "expected a numeric array");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

namespace {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kNone: return "none";
  }
  return "none";
}

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "none") return Activation::kNone;
  fail(ErrorKind::kSchema, "unknown activation '" + s + "'");
}

}  // namespace

Json spec_to_json(const ModelSpec& spec) {
  Json layers = Json::array();
  for (const auto& l : spec.layers) layers.push_back({{"in", l.in}, {"out", l.out}});
  return {{"layers", layers},
          {"activation", activation_name(spec.activation)},
          {"l2_reg", spec.l2_reg},
          {"bias", spec.bias == BiasMode::kFolded ? "folded" : "none"}};
}

ModelSpec spec_from_json(const Json& j) {
  try {
    ModelSpec spec;
    for (const auto& l : j.at("layers"))
      spec.layers.push_back({l.at("in").get<Index>(), l.at("out").get<Index>()});
    spec.activation = activation_from(j.at("activation").get<std::string>());
    spec.l2_reg = j.at("l2_reg").get<double>();
    const std::string bias = j.at("bias").get<std::string>();
    require(bias == "folded" || bias == "none", ErrorKind::kSchema, "unknown bias mode");
    spec.bias = bias == "folded" ? BiasMode::kFolded : BiasMode::kNone;
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, std::string("model spec: ") + e.what());
  }
}

Json model_to_json(const ModelState& model) {
  Json weights = Json::array();
  for (const auto& w : model.weights)
    weights.push_back(to_json(Eigen::Map<const VectorXd>(w.data(), w.size())));
  return {{"format", "idealmix-model"},
          {"version", kModelFormatVersion},
          {"spec", spec_to_json(model.spec)},
          {"weights", weights},
          {"train_meta",
           {{"grad_norm", model.meta.grad_norm},
            {"iterations", model.meta.iterations},
            {"converged", model.meta.converged}}}};
}

ModelState model_from_json(const Json& j) {
  try {
    require(j.at("format") == "idealmix-model", ErrorKind::kSchema, "not a model checkpoint");
    require(j.at("version") == kModelFormatVersion, ErrorKind::kSchema,
            "unsupported checkpoint version");
    ModelState state = ModelState::zeros(spec_from_json(j.at("spec")));
    const Json& weights = j.at("weights");
    require(weights.size() == state.weights.size(), ErrorKind::kSchema,
            "checkpoint layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const VectorXd flat = vector_from_json(weights[l]);
      require(flat.size() == state.weights[l].size(), ErrorKind::kSchema,
              "checkpoint weight shape mismatch in layer " + std::to_string(l));
      require(flat.allFinite(), ErrorKind::kSchema, "non-finite checkpoint weight");
      state.weights[l] = Eigen::Map<const MatrixXd>(flat.data(), state.weights[l].rows(),
                                                    state.weights[l].cols());
    }
    const Json& meta = j.at("train_meta");
    state.meta.grad_norm = meta.at("grad_norm").is_null() ? NAN : meta.at("grad_norm").get<double>();
    state.meta.iterations = meta.at("iterations").get<long>();
    state.meta.converged = meta.at("converged").get<bool>();
    return state;
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, std::string("model checkpoint: ") + e.what());
  }
}

Json influence_to_json(const InfluenceReport& r) {
  Json layers = Json::array();
  for (std::size_t l : r.layers_used) layers.push_back(l);
  return {{"method", to_string(r.method)},
          {"m", r.m},
          {"sigma", r.sample_factor},
          {"lambda", r.damping},
          {"layers_used", layers},
          {"alpha", to_json(r.alpha)},
          {"gamma", r.gamma},
          {"beta", to_json(r.beta)},
          {"degenerate_flag", r.degenerate}};
}

}  // namespace idealmix
