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

#ifndef PRIVSTREAM_TOKEN_H_
#define PRIVSTREAM_TOKEN_H_

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "privstream/bytes.h"
#include "privstream/ring_crypto.h"
#include "privstream/token_types.h"

namespace privstream::token {

using crypto::Modulus;
using crypto::RingElement;
using crypto::Timestamp;

// What a controller releases for one element of an encoding vector.
struct ElementDirective {
  enum class Kind { kRelease, kWithhold, kMerge, kShift, kPerturb };

  Kind kind = Kind::kRelease;
  int group = 0;            // kMerge: elements sharing a group sum into one slot
  std::int64_t shift = 0;   // kShift: constant added to the output (ring units)
  double sigma = 0;         // kPerturb: Gaussian std-dev (ring units)

  static ElementDirective Release() { return {}; }
  static ElementDirective Withhold() { return {Kind::kWithhold}; }
  static ElementDirective Merge(int g) { return {Kind::kMerge, g}; }
  static ElementDirective Shift(std::int64_t c) { return {Kind::kShift, 0, c}; }
  static ElementDirective Perturb(double s) { return {Kind::kPerturb, 0, 0, s}; }

  bool operator==(const ElementDirective&) const = default;
};

// Output slots induced by a directive list. Every non-merged element gets
// its own slot; each merge group gets one slot at the position of its
// first member.
struct OutputLayout {
  std::vector<std::vector<std::size_t>> sources;
  std::vector<bool> released;

  std::size_t Width() const { return sources.size(); }
  bool operator==(const OutputLayout&) const = default;
};

OutputLayout MakeLayout(std::span<const ElementDirective> directives);

// Applies the layout's element sums to a plaintext or ciphertext vector.
std::vector<RingElement> Project(std::span<const RingElement> body,
                                 const OutputLayout& layout, const Modulus& m);
crypto::StreamCiphertext Project(const crypto::StreamCiphertext& ct,
                                 const OutputLayout& layout, const Modulus& m);

// Token for one stream's window (start, end]: per slot the negated key
// delta -k(end) + k(start) summed over the slot's sources, plus any shift
// or sampled perturbation. rng_seed drives kPerturb only.
TransformationToken SingleStreamToken(
    const crypto::StreamCipher& cipher, const std::string& stream_id,
    Timestamp start, Timestamp end,
    std::span<const ElementDirective> directives, std::uint64_t rng_seed = 0);

// Element-wise sum of tokens over disjoint stream sets sharing one window
// and release pattern.
TransformationToken MultiStreamPartial(
    std::span<const TransformationToken> tokens, const Modulus& m);

struct NoiseSpec {
  double sigma_target = 0;      // std-dev of the total noise, real units
  double honest_fraction = 1;   // 1 - alpha
  std::uint64_t party_count = 1;
  double scale = 100;           // fixed-point factor of the encoding

  // sigma_target / sqrt(honest_fraction * party_count)
  double PerPartySigma() const;
  void Validate() const;
};

// Linear-composition epsilon ledger with atomic charge-or-refuse.
class PrivacyBudget {
 public:
  explicit PrivacyBudget(double epsilon_total, double epsilon_spent = 0);

  PrivacyBudget(const PrivacyBudget& other);
  PrivacyBudget& operator=(const PrivacyBudget& other);

  // Charges cost and returns true iff spent + cost <= total.
  bool TryCharge(double cost);
  bool CanAfford(double cost) const;

  double total() const;
  double spent() const;
  double remaining() const;

 private:
  mutable std::mutex mu_;
  double total_;
  double spent_;
};

struct Suppressed {
  bool operator==(const Suppressed&) const = default;
};

using NoisedResult = std::variant<TransformationToken, Suppressed>;

// One fixed-point Gaussian draw: round(N(0, sigma) * scale) as a ring element.
RingElement SampleFixedPointGaussian(double sigma, double scale,
                                     std::uint64_t seed, std::uint64_t index,
                                     const Modulus& m);

// Adds an independent per-party Gaussian sample to each released element
// and charges epsilon_cost, or returns Suppressed with the budget untouched
// when it cannot be afforded. slot_scales, when non-empty, gives the
// fixed-point factor of each slot in place of spec.scale.
NoisedResult AddDpNoise(const TransformationToken& token, const NoiseSpec& spec,
                        PrivacyBudget& budget, double epsilon_cost,
                        std::uint64_t rng_seed, const Modulus& m = Modulus(),
                        std::span<const double> slot_scales = {});

// Enforces at most one non-DP token per (stream, attribute, window). A
// repeated request with the same fingerprint gets the identical token back;
// a different request for an issued window is refused.
class TokenLedger {
 public:
  std::optional<TransformationToken> Issue(
      const std::string& stream_id, const std::string& attribute,
      Timestamp start, Timestamp end, const Digest& request_fingerprint,
      const std::function<TransformationToken()>& make);

  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::uint64_t, std::uint64_t>;
  mutable std::mutex mu_;
  std::map<Key, std::pair<Digest, TransformationToken>> issued_;
};

// Token wire format, little-endian: window_start u64, window_end u64,
// stream_set_id 32 bytes, then one (index u16, value u64) pair per released
// slot. The member list and noised flag stay local.
Bytes EncodeToken(const TransformationToken& token);
// width is the slot count of the plan's output layout.
TransformationToken DecodeToken(std::span<const std::uint8_t> wire,
                                std::size_t width);
std::size_t TokenWireSize(std::size_t released);

}  // namespace privstream::token

#endif  // PRIVSTREAM_TOKEN_H_
