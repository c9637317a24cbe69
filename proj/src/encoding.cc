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

#include "privstream/encoding.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "privstream/errors.h"

namespace privstream::encoding {

Kind ParseKind(std::string_view name) {
  if (name == "sum") return Kind::kSum;
  if (name == "sum_count") return Kind::kSumCount;
  if (name == "variance") return Kind::kVariance;
  if (name == "histogram") return Kind::kHistogram;
  if (name == "one_hot") return Kind::kOneHot;
  if (name == "predicate_threshold") return Kind::kPredicateThreshold;
  throw Error(ErrorCode::kParse, "unknown encoding kind '" + std::string(name) + "'");
}

std::string_view KindName(Kind kind) {
  switch (kind) {
    case Kind::kSum:
      return "sum";
    case Kind::kSumCount:
      return "sum_count";
    case Kind::kVariance:
      return "variance";
    case Kind::kHistogram:
      return "histogram";
    case Kind::kOneHot:
      return "one_hot";
    case Kind::kPredicateThreshold:
      return "predicate_threshold";
  }
  return "?";
}

namespace {

std::int64_t FixedPoint(double value, double scale) {
  double scaled = std::round(value * scale);
  if (!std::isfinite(scaled) || std::fabs(scaled) >= 9.2e18) {
    throw Error(ErrorCode::kOverflowBudget, "value does not fit fixed point");
  }
  return static_cast<std::int64_t>(scaled);
}

}  // namespace

std::size_t EncodingSpec::BinCount() const {
  switch (kind) {
    case Kind::kHistogram:
      return static_cast<std::size_t>(
          std::ceil((domain_max - domain_min) / bin_width - 1e-9));
    case Kind::kOneHot:
      return static_cast<std::size_t>(std::llround(domain_max - domain_min)) + 1;
    default:
      return 0;
  }
}

std::size_t EncodingSpec::Width() const {
  switch (kind) {
    case Kind::kSum:
      return 1;
    case Kind::kSumCount:
      return 2;
    case Kind::kVariance:
      return 3;
    case Kind::kPredicateThreshold:
      return 2;
    case Kind::kHistogram:
    case Kind::kOneHot:
      return BinCount();
  }
  return 0;
}

double EncodingSpec::BinValue(std::size_t i) const {
  if (kind == Kind::kOneHot) return domain_min + static_cast<double>(i);
  return domain_min + (static_cast<double>(i) + 0.5) * bin_width;
}

void EncodingSpec::Validate() const {
  if (!(scale > 0)) throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  if (kind == Kind::kHistogram) {
    if (!(bin_width > 0)) {
      throw Error(ErrorCode::kInvalidArgument, "bin_width must be positive");
    }
    if (!(domain_max > domain_min) || BinCount() < 1) {
      throw Error(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
    }
  }
  if (kind == Kind::kOneHot) {
    if (domain_max < domain_min || std::floor(domain_min) != domain_min ||
        std::floor(domain_max) != domain_max) {
      throw Error(ErrorCode::kInvalidArgument,
                  "one_hot domain must be an integer range");
    }
  }
}

EncodedVector Encode(double value, const EncodingSpec& spec, const Modulus& m) {
  EncodedVector out{std::vector<RingElement>(spec.Width(), 0), spec};
  auto& e = out.elements;
  switch (spec.kind) {
    case Kind::kSum:
      e[0] = m.FromSigned(FixedPoint(value, spec.scale));
      break;
    case Kind::kSumCount:
      e[0] = m.FromSigned(FixedPoint(value, spec.scale));
      e[1] = 1;
      break;
    case Kind::kVariance: {
      std::int64_t x = FixedPoint(value, spec.scale);
      e[0] = m.FromSigned(x);
      e[1] = m.Mul(m.FromSigned(x), m.FromSigned(x));
      e[2] = 1;
      break;
    }
    case Kind::kPredicateThreshold:
      e[value >= spec.threshold ? 0 : 1] = m.FromSigned(FixedPoint(value, spec.scale));
      break;
    case Kind::kHistogram: {
      if (!(value >= spec.domain_min && value <= spec.domain_max)) {
        throw Error(ErrorCode::kOutOfDomain, "value outside histogram domain");
      }
      auto bin = static_cast<std::size_t>((value - spec.domain_min) / spec.bin_width);
      e[std::min(bin, e.size() - 1)] = 1;
      break;
    }
    case Kind::kOneHot: {
      if (!(value >= spec.domain_min && value <= spec.domain_max) ||
          std::floor(value) != value) {
        throw Error(ErrorCode::kOutOfDomain, "value outside one_hot domain");
      }
      e[static_cast<std::size_t>(value - spec.domain_min)] = 1;
      break;
    }
  }
  return out;
}

EncodedVector EncodeNeutral(const EncodingSpec& spec) {
  return {std::vector<RingElement>(spec.Width(), 0), spec};
}

std::optional<double> DecodedStats::Percentile(double q) const {
  if (bins.empty() || !count || *count == 0) return std::nullopt;
  if (std::any_of(bins.begin(), bins.end(), [](const auto& b) { return !b; })) {
    return std::nullopt;
  }
  q = std::clamp(q, 0.0, 1.0);
  auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(*count)));
  rank = std::max<std::uint64_t>(rank, 1);
  std::uint64_t cumulative = 0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    cumulative += *bins[i];
    if (cumulative >= rank) return bin_values[i];
  }
  return bin_values.back();
}

std::vector<std::size_t> DecodedStats::TopK(std::size_t k) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i]) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return *bins[a] > *bins[b]; });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

namespace {

// Reads a field that can only be non-negative; flags values in the upper
// half of the ring as wrapped.
std::uint64_t NonNegative(RingElement v, const Modulus& m, DecodedStats& s) {
  if (v >= m.half()) s.overflow_warning = true;
  return v;
}

double SignedField(RingElement v, const EncodingSpec& spec, const Modulus& m,
                   DecodedStats& s) {
  if (spec.non_negative) {
    return static_cast<double>(NonNegative(v, m, s)) / spec.scale;
  }
  return static_cast<double>(m.ToSigned(v)) / spec.scale;
}

std::int64_t SignedRaw(RingElement v, const EncodingSpec& spec, const Modulus& m,
                       DecodedStats& s) {
  if (spec.non_negative) {
    NonNegative(v, m, s);
    return static_cast<std::int64_t>(v);
  }
  return m.ToSigned(v);
}

void DecodeBins(std::span<const std::optional<RingElement>> agg,
                const EncodingSpec& spec, const Modulus& m, DecodedStats& s) {
  s.bins.resize(agg.size());
  s.bin_values.resize(agg.size());
  bool complete = true;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < agg.size(); ++i) {
    s.bin_values[i] = spec.BinValue(i);
    if (agg[i]) {
      s.bins[i] = NonNegative(*agg[i], m, s);
      total += *s.bins[i];
    } else {
      complete = false;
    }
  }
  if (!complete) return;
  s.count = total;
  if (total == 0) return;
  std::size_t lo = 0;
  while (*s.bins[lo] == 0) ++lo;
  std::size_t hi = agg.size() - 1;
  while (*s.bins[hi] == 0) --hi;
  s.min = s.bin_values[lo];
  s.max = s.bin_values[hi];
  s.range = *s.max - *s.min;
  std::size_t mode = 0;
  for (std::size_t i = 1; i < agg.size(); ++i) {
    if (*s.bins[i] > *s.bins[mode]) mode = i;
  }
  s.mode = s.bin_values[mode];
  s.median = s.Percentile(0.5);
}

}  // namespace

DecodedStats DecodeReleased(std::span<const std::optional<RingElement>> agg,
                            const EncodingSpec& spec, const Modulus& m) {
  if (agg.size() != spec.Width()) {
    throw Error(ErrorCode::kWidthMismatch, "aggregate width differs from encoding");
  }
  DecodedStats s;
  switch (spec.kind) {
    case Kind::kSum:
      if (agg[0]) s.sum = SignedField(*agg[0], spec, m, s);
      break;
    case Kind::kSumCount:
    case Kind::kVariance: {
      const auto& count_elem = spec.kind == Kind::kSumCount ? agg[1] : agg[2];
      if (agg[0]) s.sum = SignedField(*agg[0], spec, m, s);
      if (count_elem) s.count = NonNegative(*count_elem, m, s);
      if (!s.count || *s.count == 0) break;
      const auto n = static_cast<long double>(*s.count);
      if (agg[0]) {
        s.mean = static_cast<double>(
            static_cast<long double>(SignedRaw(*agg[0], spec, m, s)) /
            (n * spec.scale));
      }
      if (spec.kind == Kind::kVariance && agg[0] && agg[1]) {
        // Var = E[x^2] - E[x]^2, multiplied through by n^2 so the numerator
        // stays exact in fixed point: n * sum(x^2) - sum(x)^2.
        const __int128 sum = SignedRaw(*agg[0], spec, m, s);
        const __int128 sumsq = NonNegative(*agg[1], m, s);
        const __int128 num = static_cast<__int128>(*s.count) * sumsq - sum * sum;
        long double var = static_cast<long double>(num) /
                          (n * n * spec.scale * spec.scale);
        if (var < 0) {
          s.overflow_warning = true;
          var = 0;
        }
        s.variance = static_cast<double>(var);
      }
      break;
    }
    case Kind::kPredicateThreshold:
      if (agg[0]) s.sum_above = SignedField(*agg[0], spec, m, s);
      if (agg[1]) s.sum_below = SignedField(*agg[1], spec, m, s);
      if (s.sum_above && s.sum_below) s.sum = *s.sum_above + *s.sum_below;
      break;
    case Kind::kHistogram:
    case Kind::kOneHot:
      DecodeBins(agg, spec, m, s);
      break;
  }
  return s;
}

DecodedStats DecodeStats(std::span<const RingElement> aggregate,
                         const EncodingSpec& spec, const Modulus& m) {
  std::vector<std::optional<RingElement>> all(aggregate.begin(), aggregate.end());
  return DecodeReleased(all, spec, m);
}

void CheckOverflowBudget(const EncodingSpec& spec, std::uint64_t max_events,
                         double max_magnitude, std::uint64_t population,
                         const Modulus& m) {
  const long double n = static_cast<long double>(max_events) *
                        static_cast<long double>(population);
  const long double limit = static_cast<long double>(m.half());
  const long double x = std::fabs(max_magnitude) * spec.scale;
  long double worst = n;  // count / indicator elements
  switch (spec.kind) {
    case Kind::kSum:
    case Kind::kSumCount:
    case Kind::kPredicateThreshold:
      worst = std::max(worst, n * x);
      break;
    case Kind::kVariance:
      worst = std::max(worst, n * x * x);
      break;
    case Kind::kHistogram:
    case Kind::kOneHot:
      break;
  }
  if (worst >= limit) {
    throw Error(ErrorCode::kOverflowBudget,
                "worst-case window sum for '" + std::string(KindName(spec.kind)) +
                    "' reaches M/2");
  }
}

void RecordEncoder::AddField(std::string name, EncodingSpec spec) {
  spec.Validate();
  for (const auto& f : fields_) {
    if (f.name == name) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate field '" + name + "'");
    }
  }
  fields_.push_back({std::move(name), spec, width_});
  width_ += spec.Width();
}

const RecordEncoder::Field& RecordEncoder::field(std::string_view name) const {
  for (const auto& f : fields_) {
    if (f.name == name) return f;
  }
  throw Error(ErrorCode::kInvalidArgument, "no field '" + std::string(name) + "'");
}

std::vector<RingElement> RecordEncoder::Encode(std::span<const double> values,
                                               const Modulus& m) const {
  if (values.size() != fields_.size()) {
    throw Error(ErrorCode::kWidthMismatch, "one value per field expected");
  }
  std::vector<RingElement> out(width_, 0);
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    auto enc = encoding::Encode(values[i], fields_[i].spec, m);
    std::copy(enc.elements.begin(), enc.elements.end(),
              out.begin() + static_cast<std::ptrdiff_t>(fields_[i].offset));
  }
  return out;
}

std::vector<RingElement> RecordEncoder::Neutral() const {
  return std::vector<RingElement>(width_, 0);
}

}  // namespace privstream::encoding
