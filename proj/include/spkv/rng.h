// include/spkv/rng.h

// Copyright 2026  spkv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKV_RNG_H_
#define SPKV_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace spkv {

// Portable pseudo-random source.  The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; the uniform and normal transforms are
// implemented here rather than with <random> distributions (which are
// implementation-defined) so that a seed yields the same stream everywhere.
class Rng {
 public:
  // Name recorded in manifests next to the seed.
  static constexpr std::string_view kAlgorithm =
      "mt19937_64/u53/box-muller";

  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double Uniform();

  // Uniform integer in [0, n); n must be positive.
  uint64_t UniformInt(uint64_t n);

  // Standard normal deviate (Box-Muller, both values of each pair used).
  double Normal();

  // Derives an independent child seed; used to split streams by purpose.
  uint64_t Fork() { return NextU64() ^ 0x9e3779b97f4a7c15ULL; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spkv

#endif  // SPKV_RNG_H_
