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

#ifndef IDEALMIX_RNG_HPP_
#define IDEALMIX_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace idealmix {

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so every
/// conversion below is written out here to keep draws identical across
/// toolchains:
///   uniform():   top 53 bits of one engine word scaled by 2^-53, in [0, 1)
///   below(n):    rejection sampling on the engine word, unbiased
///   normal():    Box-Muller, caching the second variate
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// `count` distinct indices from [0, n), returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Child seed for (root, stream, purpose) such as (run seed, iteration, resample).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t purpose);

}  // namespace idealmix

#endif  // IDEALMIX_RNG_HPP_
