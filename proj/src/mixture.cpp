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

#include "idealmix/mixture.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "idealmix/json_io.hpp"
#include "idealmix/rng.hpp"

namespace idealmix {

namespace fs = std::filesystem;

namespace {

std::string example_key(const Example& e) {
  std::string key(sizeof(int) + sizeof(double) * static_cast<std::size_t>(e.x.size()), '\0');
  std::memcpy(key.data(), &e.y, sizeof(int));
  std::memcpy(key.data() + sizeof(int), e.x.data(), sizeof(double) * static_cast<std::size_t>(e.x.size()));
  return key;
}

bool safe_name(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      return false;
  return true;
}

}  // namespace

std::vector<std::size_t> MixtureState::sizes() const {
  std::vector<std::size_t> out;
  for (const auto& d : domains) out.push_back(d.size());
  return out;
}

std::size_t MixtureState::total() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.size();
  return n;
}

std::vector<Example> MixtureState::union_examples() const {
  std::vector<Example> out;
  out.reserve(total());
  for (const auto& d : domains) out.insert(out.end(), d.examples.begin(), d.examples.end());
  return out;
}

std::vector<std::vector<Example>> MixtureState::domain_examples() const {
  std::vector<std::vector<Example>> out;
  for (const auto& d : domains) out.push_back(d.examples);
  return out;
}

int MixtureState::domain_index(const std::string& name) const {
  for (std::size_t i = 0; i < domains.size(); ++i)
    if (domains[i].name == name) return static_cast<int>(i);
  return -1;
}

void MixtureState::validate() const {
  require(!domains.empty(), ErrorKind::kSchema, "mixture has no domains");
  require(classes >= 2, ErrorKind::kSchema, "mixture needs at least 2 classes");
  auto check = [this](const DomainDataset& d) {
    require(!d.examples.empty(), ErrorKind::kSchema, "domain '" + d.name + "' is empty");
    for (const auto& e : d.examples) {
      require(e.x.size() == feature_dim, ErrorKind::kDimensionMismatch,
              "domain '" + d.name + "' has an example of length " + std::to_string(e.x.size()) +
                  ", expected " + std::to_string(feature_dim));
      require(e.x.allFinite(), ErrorKind::kSchema, "domain '" + d.name + "' has non-finite features");
      require(e.y >= 0 && e.y < classes, ErrorKind::kSchema,
              "domain '" + d.name + "' has label " + std::to_string(e.y) + " out of range");
    }
  };
  for (const auto& d : domains) check(d);
  check(reference);

  std::unordered_set<std::string> ref_keys;
  for (const auto& e : reference.examples) ref_keys.insert(example_key(e));
  for (const auto& d : domains)
    for (const auto& e : d.examples)
      require(!ref_keys.contains(example_key(e)), ErrorKind::kReferenceOverlap,
              "reference shares an example with domain '" + d.name + "'");
}

std::size_t resampled_size(std::size_t size, double beta) {
  const double scaled = std::floor((1.0 + beta) * static_cast<double>(size) + 0.5);
  return scaled < 1.0 ? 1 : static_cast<std::size_t>(scaled);
}

MixtureState apply_beta(const MixtureState& state, const VectorXd& beta, std::uint64_t seed) {
  require(beta.size() == static_cast<Index>(state.domains.size()), ErrorKind::kInvalidInput,
          "beta has " + std::to_string(beta.size()) + " entries for " +
              std::to_string(state.domains.size()) + " domains");
  for (Index i = 0; i < beta.size(); ++i)
    require(std::isfinite(beta(i)) && beta(i) > -1.0, ErrorKind::kInvalidInput,
            "beta for domain '" + state.domains[static_cast<std::size_t>(i)].name +
                "' must be finite and > -1");

  MixtureState next = state;
  next.iteration = state.iteration + 1;
  next.beta_history.push_back(beta);
  for (std::size_t i = 0; i < state.domains.size(); ++i) {
    const double b = beta(static_cast<Index>(i));
    if (b == 0.0) continue;
    const DomainDataset& parent = state.domains[i];
    DomainDataset& child = next.domains[i];
    const std::size_t old_size = parent.size();
    const std::size_t new_size = resampled_size(old_size, b);
    const std::uint64_t domain_seed = derive_seed(seed, i, 0);
    Rng rng(domain_seed);
    if (new_size > old_size) {
      child.examples.reserve(new_size);
      for (std::size_t k = old_size; k < new_size; ++k)
        child.examples.push_back(parent.examples[rng.below(old_size)]);
    } else if (new_size < old_size) {
      child.examples.clear();
      for (std::size_t idx : rng.sample_without_replacement(old_size, new_size))
        child.examples.push_back(parent.examples[idx]);
    }
    child.provenance = {ProvenanceKind::kResampled, parent.name, domain_seed};
  }
  return next;
}

std::vector<Example> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const Json j = Json::parse(line);
      require(j.is_object() && j.contains("x") && j.contains("y"), ErrorKind::kSchema,
              where + ": expected {\"x\": [...], \"y\": int}");
      Example e;
      e.x = vector_from_json(j.at("x"));
      require(j.at("y").is_number_integer(), ErrorKind::kSchema, where + ": y must be an integer");
      e.y = j.at("y").get<int>();
      if (j.contains("domain")) e.tag = j.at("domain").get<int>();
      out.push_back(std::move(e));
    } catch (const Json::exception& ex) {
      fail(ErrorKind::kSchema, where + ": " + ex.what());
    }
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<Example>& examples) {
  std::string text;
  for (const auto& e : examples) {
    Json j = {{"x", to_json(e.x)}, {"y", e.y}};
    if (e.tag >= 0) j["domain"] = e.tag;
    text += dump_json(j, -1);
    text += '\n';
  }
  write_text_file(path, text);
}

MixtureState load_manifest(const fs::path& path) {
  require(fs::exists(path), ErrorKind::kIo, "manifest not found: " + path.string());
  const Json j = read_json_file(path);
  const fs::path base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    const fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };

  MixtureState state;
  try {
    require(j.is_object(), ErrorKind::kSchema, "manifest must be a JSON object");
    state.feature_dim = j.at("feature_dim").get<Index>();
    state.classes = j.at("classes").get<Index>();
    require(state.feature_dim > 0, ErrorKind::kSchema, "feature_dim must be positive");
    const Json& domains = j.at("domains");
    require(domains.is_array() && !domains.empty(), ErrorKind::kSchema,
            "manifest needs a nonempty domains array");
    for (const auto& d : domains) {
      DomainDataset ds;
      ds.name = d.at("name").get<std::string>();
      const std::string p = d.at("path").get<std::string>();
      ds.examples = read_jsonl(resolve(p));
      for (auto& e : ds.examples) e.tag = -1;
      ds.provenance = {ProvenanceKind::kFile, p, 0};
      require(state.domain_index(ds.name) < 0, ErrorKind::kSchema,
              "duplicate domain name '" + ds.name + "'");
      state.domains.push_back(std::move(ds));
    }
    const std::string ref_path = j.at("reference").at("path").get<std::string>();
    state.reference.name = "reference";
    state.reference.examples = read_jsonl(resolve(ref_path));
    state.reference.provenance = {ProvenanceKind::kFile, ref_path, 0};
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  for (const auto& e : state.reference.examples)
    require(e.tag < static_cast<int>(state.domains.size()), ErrorKind::kSchema,
            "reference example tagged with unknown domain " + std::to_string(e.tag));
  state.validate();
  return state;
}

std::vector<fs::path> write_manifest(const MixtureState& state, const fs::path& dir) {
  std::vector<fs::path> written{dir / "manifest.json"};
  Json domains = Json::array();
  for (const auto& d : state.domains) {
    require(safe_name(d.name), ErrorKind::kInvalidInput,
            "domain name '" + d.name + "' is not usable as a file name");
    const std::string file = d.name + ".jsonl";
    write_jsonl(dir / file, d.examples);
    written.push_back(dir / file);
    domains.push_back({{"name", d.name}, {"path", file}});
  }
  write_jsonl(dir / "reference.jsonl", state.reference.examples);
  written.push_back(dir / "reference.jsonl");
  write_json_file(dir / "manifest.json", {{"feature_dim", state.feature_dim},
                                          {"classes", state.classes},
                                          {"domains", domains},
                                          {"reference", {{"path", "reference.jsonl"}}}});
  return written;
}

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kConflict: return "conflict";
    case ScenarioKind::kSkewedReference: return "skewed-reference";
    case ScenarioKind::kBenign: return "benign";
  }
  return "conflict";
}

ScenarioKind scenario_from_string(const std::string& name) {
  if (name == "conflict") return ScenarioKind::kConflict;
  if (name == "skewed-reference") return ScenarioKind::kSkewedReference;
  if (name == "benign") return ScenarioKind::kBenign;
  fail(ErrorKind::kInvalidInput,
       "unknown scenario kind '" + name + "' (expected conflict|skewed-reference|benign)");
}

namespace {

struct DomainGenerator {
  VectorXd center;
  double spread = 1.0;
  MatrixXd rule;

  Example draw(Rng& rng) const {
    Example e;
    e.x.resize(center.size());
    for (Index i = 0; i < center.size(); ++i) e.x(i) = center(i) + spread * rng.normal();
    const VectorXd logits = rule * e.x;
    const VectorXd p = (logits.array() - logits.maxCoeff()).exp();
    double u = rng.uniform() * p.sum();
    e.y = static_cast<int>(p.size() - 1);
    for (Index k = 0; k < p.size(); ++k) {
      if (u < p(k)) {
        e.y = static_cast<int>(k);
        break;
      }
      u -= p(k);
    }
    return e;
  }
};

MatrixXd gaussian_matrix(Rng& rng, Index rows, Index cols, double scale) {
  MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  return m;
}

}  // namespace

MixtureState synth_scenario(ScenarioKind kind, const std::vector<std::size_t>& sizes,
                            std::uint64_t seed, const ScenarioOptions& options) {
  require(!sizes.empty(), ErrorKind::kInvalidInput, "synth_scenario: no domain sizes");
  for (std::size_t s : sizes)
    require(s > 0, ErrorKind::kInvalidInput, "synth_scenario: domain sizes must be positive");
  require(options.feature_dim > 0 && options.classes >= 2 && options.reference_size > 0,
          ErrorKind::kInvalidInput, "synth_scenario: bad options");
  require(options.reference_skew > 0.0 && options.reference_skew < 1.0,
          ErrorKind::kInvalidInput, "synth_scenario: reference_skew must lie in (0, 1)");

  const Index d = options.feature_dim;
  const Index k = options.classes;
  const std::size_t n = sizes.size();
  Rng rng(seed);
  const MatrixXd shared = gaussian_matrix(rng, k, d, 2.0);

  std::vector<DomainGenerator> gens(n);
  for (std::size_t i = 0; i < n; ++i) {
    DomainGenerator& g = gens[i];
    if (kind == ScenarioKind::kBenign) {
      g.center = VectorXd::Zero(d);
      const auto axis = static_cast<Index>(i % static_cast<std::size_t>(d));
      const bool flip = (i / static_cast<std::size_t>(d)) % 2 == 1;
      g.center(axis) = flip ? -4.0 : 4.0;
      g.spread = 0.75;
      g.rule = shared;
    } else {
      g.center = gaussian_matrix(rng, d, 1, 0.75);
      g.spread = 1.0;
      g.rule = shared + gaussian_matrix(rng, k, d, 2.0);
    }
  }

  MixtureState state;
  state.feature_dim = d;
  state.classes = k;
  for (std::size_t i = 0; i < n; ++i) {
    DomainDataset ds;
    ds.name = "domain" + std::to_string(i);
    ds.provenance = {ProvenanceKind::kSynthetic, to_string(kind), seed};
    for (std::size_t e = 0; e < sizes[i]; ++e) ds.examples.push_back(gens[i].draw(rng));
    state.domains.push_back(std::move(ds));
  }

  std::vector<std::size_t> ref_counts(n, options.reference_size / n);
  for (std::size_t i = 0; i < options.reference_size % n; ++i) ++ref_counts[i];
  if (kind == ScenarioKind::kSkewedReference && n > 1) {
    const auto lead = static_cast<std::size_t>(
        std::floor(options.reference_skew * static_cast<double>(options.reference_size) + 0.5));
    const std::size_t rest = options.reference_size - lead;
    ref_counts.assign(n, rest / (n - 1));
    ref_counts[0] = lead;
    for (std::size_t i = 0; i < rest % (n - 1); ++i) ++ref_counts[i + 1];
  }
  state.reference.name = "reference";
  state.reference.provenance = {ProvenanceKind::kSynthetic, to_string(kind), seed};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < ref_counts[i]; ++e) {
      Example ex = gens[i].draw(rng);
      ex.tag = static_cast<int>(i);
      state.reference.examples.push_back(std::move(ex));
    }
  }
  state.validate();
  return state;
}

}  // namespace idealmix
