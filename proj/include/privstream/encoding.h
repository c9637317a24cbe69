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

#ifndef PRIVSTREAM_ENCODING_H_
#define PRIVSTREAM_ENCODING_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privstream/ring.h"

// Client-side encodings: each maps a value to a vector whose element-wise
// modular sum over many events still carries the statistic of interest.
namespace privstream::encoding {

using crypto::Modulus;
using crypto::RingElement;

enum class Kind {
  kSum,                 // [x]
  kSumCount,            // [x, 1]
  kVariance,            // [x, x^2, 1]
  kHistogram,           // indicator over ceil((max - min) / bin_width) bins
  kOneHot,              // indicator over the integers min..max
  kPredicateThreshold,  // [x, 0] if x >= threshold else [0, x]
};

Kind ParseKind(std::string_view name);
std::string_view KindName(Kind kind);

struct EncodingSpec {
  Kind kind = Kind::kSum;
  double domain_min = 0;
  double domain_max = 0;
  double bin_width = 1;
  double threshold = 0;
  // Fixed-point factor for real-valued fields (sum, sum_count, variance,
  // predicate_threshold). Indicator encodings ignore it.
  double scale = 100;
  // Declares the field non-negative, enabling the wraparound heuristic on
  // its sum element.
  bool non_negative = false;

  std::size_t Width() const;
  std::size_t BinCount() const;  // histogram / one_hot only
  // Representative value of bin i: the integer for one_hot, the bin
  // midpoint for histogram.
  double BinValue(std::size_t i) const;
  void Validate() const;

  bool operator==(const EncodingSpec&) const = default;
};

struct EncodedVector {
  std::vector<RingElement> elements;
  EncodingSpec spec;
};

// Throws Error(kOutOfDomain) for indicator encodings given a value outside
// [domain_min, domain_max] (or a non-integer for one_hot).
EncodedVector Encode(double value, const EncodingSpec& spec,
                     const Modulus& m = Modulus());

// All zeros: adding it to an aggregate changes nothing, the count included.
EncodedVector EncodeNeutral(const EncodingSpec& spec);

struct DecodedStats {
  std::optional<double> sum;
  std::optional<std::uint64_t> count;
  std::optional<double> mean;
  std::optional<double> variance;
  std::optional<double> sum_above;  // predicate_threshold
  std::optional<double> sum_below;

  // Indicator encodings. Absent bins (withheld) decode as nullopt.
  std::vector<std::optional<std::uint64_t>> bins;
  std::vector<double> bin_values;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> mode;
  std::optional<double> median;
  std::optional<double> range;

  // Set when an element that can only be non-negative reads >= M/2.
  bool overflow_warning = false;

  // Nearest-rank percentile over the histogram; q in (0, 1]. nullopt when
  // the histogram is empty or has withheld bins.
  std::optional<double> Percentile(double q) const;
  // Indices of the k fullest bins, ties broken by lower index.
  std::vector<std::size_t> TopK(std::size_t k) const;

  bool operator==(const DecodedStats&) const = default;
};

DecodedStats DecodeStats(std::span<const RingElement> aggregate,
                         const EncodingSpec& spec,
                         const Modulus& m = Modulus());

// Same as DecodeStats for partially released aggregates; statistics that
// need a withheld element are left absent.
DecodedStats DecodeReleased(std::span<const std::optional<RingElement>> aggregate,
                            const EncodingSpec& spec,
                            const Modulus& m = Modulus());

// Rejects configurations whose worst-case window sum could reach M/2:
// max_events per stream per window, |value| <= max_magnitude, summed over
// population streams.
void CheckOverflowBudget(const EncodingSpec& spec, std::uint64_t max_events,
                         double max_magnitude, std::uint64_t population,
                         const Modulus& m = Modulus());

// Several attributes of one event encoded back to back.
class RecordEncoder {
 public:
  struct Field {
    std::string name;
    EncodingSpec spec;
    std::size_t offset = 0;
  };

  void AddField(std::string name, EncodingSpec spec);

  std::size_t Width() const { return width_; }
  const std::vector<Field>& fields() const { return fields_; }
  const Field& field(std::string_view name) const;

  // values[i] belongs to fields()[i].
  std::vector<RingElement> Encode(std::span<const double> values,
                                  const Modulus& m = Modulus()) const;
  std::vector<RingElement> Neutral() const;

 private:
  std::vector<Field> fields_;
  std::size_t width_ = 0;
};

}  // namespace privstream::encoding

#endif  // PRIVSTREAM_ENCODING_H_
