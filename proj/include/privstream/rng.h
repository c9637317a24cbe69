/*
 * Copyright 2026 The privstream Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PRIVSTREAM_RNG_H_
#define PRIVSTREAM_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace privstream {

// SplitMix64 as a UniformRandomBitGenerator. Cheap to seed, so every
// (entity, window, purpose) tuple gets its own stream and results do not
// depend on evaluation order.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  // Seeds from a mixed tuple of identifiers.
  SplitMix64(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = 0x5851f42d4c957f2dULL;
    for (std::uint64_t p : parts) s = Mix(s ^ Mix(p + 0x9e3779b97f4a7c15ULL));
    state_ = s;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return Mix(state_);
  }

  // Uniform double in [0, 1).
  double Uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  static std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace privstream

#endif  // PRIVSTREAM_RNG_H_
