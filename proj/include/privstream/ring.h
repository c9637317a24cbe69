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

#ifndef PRIVSTREAM_RING_H_
#define PRIVSTREAM_RING_H_

#include <compare>
#include <cstdint>
#include <span>

namespace privstream::crypto {

using RingElement = std::uint64_t;

// Z_M for M = 2^bits, 1 <= bits <= 64. Elements are kept reduced.
class Modulus {
 public:
  constexpr Modulus() = default;
  explicit Modulus(unsigned bits);

  unsigned bits() const { return bits_; }
  RingElement mask() const { return mask_; }
  // M/2; values at or above it read as negative in centered form.
  RingElement half() const { return (mask_ >> 1) + 1; }

  RingElement Reduce(std::uint64_t v) const { return v & mask_; }
  RingElement Add(RingElement a, RingElement b) const { return (a + b) & mask_; }
  RingElement Sub(RingElement a, RingElement b) const { return (a - b) & mask_; }
  RingElement Neg(RingElement a) const { return (0 - a) & mask_; }
  RingElement Mul(RingElement a, RingElement b) const { return (a * b) & mask_; }

  RingElement FromSigned(std::int64_t v) const {
    return static_cast<std::uint64_t>(v) & mask_;
  }
  // Centered representative in [-M/2, M/2).
  std::int64_t ToSigned(RingElement v) const;

  bool operator==(const Modulus&) const = default;

 private:
  unsigned bits_ = 64;
  RingElement mask_ = ~std::uint64_t{0};
};

void AddInPlace(std::span<RingElement> acc, std::span<const RingElement> x,
                const Modulus& m);
void SubInPlace(std::span<RingElement> acc, std::span<const RingElement> x,
                const Modulus& m);

struct Timestamp {
  std::uint64_t t = 0;
  auto operator<=>(const Timestamp&) const = default;
};

}  // namespace privstream::crypto

#endif  // PRIVSTREAM_RING_H_
