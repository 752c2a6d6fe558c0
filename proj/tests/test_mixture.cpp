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

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"

#include "idealmix/json_io.hpp"
#include "idealmix/loop.hpp"
#include "idealmix/mixture.hpp"
#include "support.hpp"

using namespace idealmix;
namespace t = idealmix::testing;
namespace fs = std::filesystem;

namespace {

using Key = std::pair<int, std::vector<double>>;

Key key(const Example& e) { return {e.y, std::vector<double>(e.x.data(), e.x.data() + e.x.size())}; }

std::multiset<Key> keys(const std::vector<Example>& v) {
  std::multiset<Key> out;
  for (const auto& e : v) out.insert(key(e));
  return out;
}

std::set<Key> distinct(const std::vector<Example>& v) {
  std::set<Key> out;
  for (const auto& e : v) out.insert(key(e));
  return out;
}

MixtureState sized_state(const std::vector<std::size_t>& sizes, std::uint64_t seed = 1) {
  ScenarioOptions opts;
  opts.reference_size = 30;
  return synth_scenario(ScenarioKind::kConflict, sizes, seed, opts);
}

void write_lines(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kInvalidInput;
}

ModelState train_on(const std::vector<Example>& data, const MixtureState& state) {
  const auto spec = ModelSpec::logistic(state.feature_dim, state.classes, 1e-2);
  return train_to_convergence(spec, data, {});
}

}  // namespace

TEST_SUITE("resampled_size") {
  TEST_CASE("worked sizes") {
    CHECK(resampled_size(5000, 0.10) == 5500);
    CHECK(resampled_size(1000, -0.15) == 850);
    CHECK(resampled_size(5, 0.1) == 6);  // 5.5 rounds up
    CHECK(resampled_size(5, -0.1) == 5);  // 4.5 rounds up
    CHECK(resampled_size(3, -0.9) == 1);
    CHECK(resampled_size(1, -0.99) == 1);
    CHECK(resampled_size(7, 0.0) == 7);
  }
}

TEST_SUITE("apply_beta") {
  TEST_CASE("zero beta keeps data and advances t") {
    const auto s = sized_state({40, 50});
    const auto next = apply_beta(s, VectorXd::Zero(2), 3);
    CHECK(next.iteration == 1);
    REQUIRE(next.beta_history.size() == 1);
    CHECK(next.beta_history[0].isZero(0.0));
    for (std::size_t i = 0; i < 2; ++i) CHECK(keys(next.domains[i].examples) == keys(s.domains[i].examples));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t n = 0; n < s.domains[i].size(); ++n)
        CHECK(next.domains[i].examples[n].x == s.domains[i].examples[n].x);
  }

  TEST_CASE("downsampling keeps distinct parent examples") {
    const auto s = sized_state({1000});
    const auto next = apply_beta(s, VectorXd::Constant(1, -0.15), 9);
    const auto& kept = next.domains[0].examples;
    CHECK(kept.size() == 850);
    CHECK(distinct(kept).size() == 850);
    const auto parent = distinct(s.domains[0].examples);
    for (const auto& e : kept) CHECK(parent.contains(key(e)));
  }

  TEST_CASE("upsampling keeps every example and the distinct support") {
    const auto s = sized_state({5000});
    const auto next = apply_beta(s, VectorXd::Constant(1, 0.10), 4);
    const auto& grown = next.domains[0].examples;
    CHECK(grown.size() == 5500);
    for (std::size_t n = 0; n < 5000; ++n) CHECK(grown[n].x == s.domains[0].examples[n].x);
    CHECK(distinct(grown) == distinct(s.domains[0].examples));
    CHECK(next.domains[0].provenance.kind == ProvenanceKind::kResampled);
  }

  TEST_CASE("properties over random betas") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t k = 1 + rng.below(4);
      std::vector<std::size_t> sizes(k);
      for (auto& n : sizes) n = 1 + rng.below(120);
      const auto s = sized_state(sizes, trial);
      VectorXd beta(static_cast<Index>(k));
      for (Index i = 0; i < beta.size(); ++i) beta(i) = rng.uniform(-0.95, 1.5);
      const std::uint64_t seed = rng.next_u64();
      const auto next = apply_beta(s, beta, seed);
      const auto again = apply_beta(s, beta, seed);
      const auto sizes_after = next.sizes();
      CHECK(next.total() == std::accumulate(sizes_after.begin(), sizes_after.end(), std::size_t{0}));
      for (std::size_t i = 0; i < k; ++i) {
        const auto& before = s.domains[i].examples;
        const auto& after = next.domains[i].examples;
        const double b = beta(static_cast<Index>(i));
        CHECK(after.size() == resampled_size(before.size(), b));
        CHECK(after.size() ==
              std::max<std::size_t>(1, static_cast<std::size_t>(
                                           std::floor((1 + b) * static_cast<double>(before.size()) + 0.5))));
        if (after.size() < before.size()) {
          CHECK(distinct(after).size() == after.size());
          const auto parent = distinct(before);
          for (const auto& e : after) CHECK(parent.contains(key(e)));
        } else {
          CHECK(distinct(after) == distinct(before));
        }
        CHECK(keys(after) == keys(again.domains[i].examples));
      }
      CHECK(keys(next.reference.examples) == keys(s.reference.examples));
      CHECK_NOTHROW(next.validate());
    }
  }

  TEST_CASE("repeated rounds compound and may re-duplicate") {
    auto s = sized_state({20});
    for (int round = 0; round < 5; ++round) s = apply_beta(s, VectorXd::Constant(1, 0.5), round);
    CHECK(s.iteration == 5);
    CHECK(s.beta_history.size() == 5);
    CHECK(s.domains[0].size() == 153);  // 30, 45, 68, 102, 153
  }

  TEST_CASE("invalid beta") {
    const auto s = sized_state({10, 10});
    CHECK(kind_of([&] { apply_beta(s, (VectorXd(2) << -1.0, 0.0).finished(), 0); }) ==
          ErrorKind::kInvalidInput);
    CHECK(kind_of([&] { apply_beta(s, VectorXd::Zero(3), 0); }) == ErrorKind::kInvalidInput);
  }
}

TEST_SUITE("manifest") {
  TEST_CASE("write and load round trip") {
    t::TempDir dir("manifest_rt");
    const auto s = sized_state({12, 7, 9});
    const auto written = write_manifest(s, dir.path());
    CHECK(written.front().filename() == "manifest.json");
    for (const auto& p : written) CHECK(fs::exists(p));
    const auto back = load_manifest(dir / "manifest.json");
    CHECK(back.iteration == 0);
    CHECK(back.beta_history.empty());
    CHECK(back.feature_dim == s.feature_dim);
    CHECK(back.classes == s.classes);
    REQUIRE(back.domains.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.domains[i].name == s.domains[i].name);
      CHECK(keys(back.domains[i].examples) == keys(s.domains[i].examples));
      CHECK(back.domains[i].provenance.kind == ProvenanceKind::kFile);
    }
    for (std::size_t n = 0; n < s.reference.size(); ++n)
      CHECK(back.reference.examples[n].tag == s.reference.examples[n].tag);
  }

  TEST_CASE("valid hand-written two-domain manifest") {
    t::TempDir dir("manifest_valid");
    fs::create_directories(dir / "data");
    write_lines(dir / "data/a.jsonl", "{\"x\": [0.0, 1.0], \"y\": 0}\n{\"x\": [1.0, 1.0], \"y\": 1}\n");
    write_lines(dir / "data/b.jsonl", "{\"x\": [2.0, 1.0], \"y\": 1}\n");
    write_lines(dir / "ref.jsonl", "{\"x\": [5.0, 5.0], \"y\": 0}\n");
    write_lines(dir / "manifest.json",
                R"({"feature_dim": 2, "classes": 2, "domains": [{"name": "a", "path": "data/a.jsonl"},)"
                R"( {"name": "b", "path": "data/b.jsonl"}], "reference": {"path": "ref.jsonl"}})");
    const auto s = load_manifest(dir / "manifest.json");
    CHECK(s.iteration == 0);
    CHECK(s.sizes() == std::vector<std::size_t>{2, 1});
    CHECK(s.reference.size() == 1);
    CHECK(s.domain_index("b") == 1);
    CHECK(s.domain_index("zzz") == -1);
  }

  TEST_CASE("error kinds") {
    t::TempDir dir("manifest_err");
    write_lines(dir / "a.jsonl", "{\"x\": [0.0, 1.0], \"y\": 0}\n{\"x\": [1.0, 1.0], \"y\": 1}\n");
    write_lines(dir / "short.jsonl", "{\"x\": [0.0], \"y\": 0}\n");
    write_lines(dir / "overlap.jsonl", "{\"x\": [1.0, 1.0], \"y\": 1}\n");
    write_lines(dir / "ref.jsonl", "{\"x\": [9.0, 9.0], \"y\": 1}\n");
    write_lines(dir / "bad.jsonl", "{\"x\": [0.0, 1.0], \"y\": 0}\n{\"x\": [1.0, 1.0], \"label\": 1}\n");
    auto manifest = [&](const std::string& name, const std::string& domain_path,
                        const std::string& ref_path) {
      write_lines(dir / name, R"({"feature_dim": 2, "classes": 2, "domains": [{"name": "domain0", "path": ")" +
                                  domain_path + R"("}], "reference": {"path": ")" + ref_path + "\"}}");
      return dir / name;
    };

    CHECK(kind_of([&] { load_manifest(dir / "absent.json"); }) == ErrorKind::kIo);
    write_lines(dir / "junk.json", "{not json");
    CHECK(kind_of([&] { load_manifest(dir / "junk.json"); }) == ErrorKind::kSchema);
    write_lines(dir / "nodomains.json", R"({"feature_dim": 2, "classes": 2, "reference": {"path": "ref.jsonl"}})");
    CHECK(kind_of([&] { load_manifest(dir / "nodomains.json"); }) == ErrorKind::kSchema);
    CHECK(kind_of([&] { load_manifest(manifest("m1.json", "short.jsonl", "ref.jsonl")); }) ==
          ErrorKind::kDimensionMismatch);
    CHECK(kind_of([&] { load_manifest(manifest("m2.json", "missing.jsonl", "ref.jsonl")); }) ==
          ErrorKind::kIo);
    CHECK(kind_of([&] { load_manifest(manifest("m3.json", "bad.jsonl", "ref.jsonl")); }) ==
          ErrorKind::kSchema);
    try {
      load_manifest(manifest("m4.json", "a.jsonl", "overlap.jsonl"));
      FAIL("expected overlap");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kReferenceOverlap);
      CHECK(std::string(e.what()).find("domain0") != std::string::npos);
    }
  }

  TEST_CASE("jsonl round trip keeps full precision") {
    t::TempDir dir("jsonl");
    std::vector<Example> ex{{(VectorXd(3) << 0.1, -1e-300, 12345.678901234567).finished(), 2}};
    write_jsonl(dir / "x.jsonl", ex);
    const auto back = read_jsonl(dir / "x.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0].x == ex[0].x);
    CHECK(back[0].y == 2);
  }
}

TEST_SUITE("synth_scenario") {
  TEST_CASE("deterministic and shaped") {
    for (auto kind : {ScenarioKind::kConflict, ScenarioKind::kSkewedReference, ScenarioKind::kBenign}) {
      const auto a = synth_scenario(kind, {50, 60, 70}, 11);
      const auto b = synth_scenario(kind, {50, 60, 70}, 11);
      const auto c = synth_scenario(kind, {50, 60, 70}, 12);
      CHECK(a.sizes() == std::vector<std::size_t>{50, 60, 70});
      CHECK(a.reference.size() == 600);
      CHECK_NOTHROW(a.validate());
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(keys(a.domains[i].examples) == keys(b.domains[i].examples));
        CHECK(keys(a.domains[i].examples) != keys(c.domains[i].examples));
      }
      CHECK(scenario_from_string(to_string(kind)) == kind);
    }
  }

  TEST_CASE("skewed reference composition") {
    const auto s = synth_scenario(ScenarioKind::kSkewedReference, {100, 100, 100}, 3);
    std::map<int, int> counts;
    for (const auto& e : s.reference.examples) ++counts[e.tag];
    CHECK(counts[0] == 420);
    CHECK(counts[1] + counts[2] == 180);
    const auto even = synth_scenario(ScenarioKind::kConflict, {100, 100, 100}, 3);
    counts.clear();
    for (const auto& e : even.reference.examples) ++counts[e.tag];
    CHECK(counts[0] == 200);
    CHECK(counts[1] == 200);
  }

  TEST_CASE("invalid requests") {
    CHECK_THROWS_AS(synth_scenario(ScenarioKind::kBenign, {10, 0}, 1), Error);
    CHECK_THROWS_AS(synth_scenario(ScenarioKind::kBenign, {}, 1), Error);
    CHECK(kind_of([] { scenario_from_string("chaos"); }) == ErrorKind::kInvalidInput);
  }

  TEST_CASE("benign domains mix without loss") {
    const auto s = synth_scenario(ScenarioKind::kBenign, {500, 500, 500}, 21);
    const double joint = reference_loss(train_on(s.union_examples(), s), s);
    double best_specific = std::numeric_limits<double>::infinity();
    for (const auto& d : s.domains)
      best_specific = std::min(best_specific, reference_loss(train_on(d.examples, s), s));
    MESSAGE("benign joint Q " << joint << ", best specific Q " << best_specific);
    CHECK(joint <= 1.05 * best_specific);
  }

  TEST_CASE("conflicting domains favour their specialists") {
    const auto s = synth_scenario(ScenarioKind::kConflict, {500, 500, 500}, 22);
    const VectorXd joint = reference_slices(train_on(s.union_examples(), s), s);
    for (std::size_t i = 0; i < s.domains.size(); ++i) {
      const VectorXd own = reference_slices(train_on(s.domains[i].examples, s), s);
      INFO("domain " << i);
      CHECK(own(static_cast<Index>(i)) < joint(static_cast<Index>(i)));
    }
  }
}
