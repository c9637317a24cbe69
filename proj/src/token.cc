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

#include "privstream/token.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "privstream/errors.h"
#include "privstream/rng.h"

namespace privstream::token {

OutputLayout MakeLayout(std::span<const ElementDirective> directives) {
  OutputLayout layout;
  std::map<int, std::size_t> group_slot;
  for (std::size_t j = 0; j < directives.size(); ++j) {
    const auto& d = directives[j];
    if (d.kind == ElementDirective::Kind::kMerge) {
      auto [it, inserted] = group_slot.try_emplace(d.group, layout.Width());
      if (inserted) {
        layout.sources.push_back({j});
        layout.released.push_back(true);
      } else {
        layout.sources[it->second].push_back(j);
      }
      continue;
    }
    layout.sources.push_back({j});
    layout.released.push_back(d.kind != ElementDirective::Kind::kWithhold);
  }
  return layout;
}

std::vector<RingElement> Project(std::span<const RingElement> body,
                                 const OutputLayout& layout, const Modulus& m) {
  std::vector<RingElement> out(layout.Width(), 0);
  for (std::size_t s = 0; s < out.size(); ++s) {
    for (std::size_t j : layout.sources[s]) {
      if (j >= body.size()) {
        throw Error(ErrorCode::kWidthMismatch, "layout exceeds vector width");
      }
      out[s] = m.Add(out[s], body[j]);
    }
  }
  return out;
}

crypto::StreamCiphertext Project(const crypto::StreamCiphertext& ct,
                                 const OutputLayout& layout, const Modulus& m) {
  return {ct.t_curr, ct.t_prev, Project(ct.body, layout, m)};
}

TransformationToken SingleStreamToken(
    const crypto::StreamCipher& cipher, const std::string& stream_id,
    Timestamp start, Timestamp end,
    std::span<const ElementDirective> directives, std::uint64_t rng_seed) {
  if (directives.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty directive set");
  }
  if (!(start < end)) {
    throw Error(ErrorCode::kOrdering, "window start must precede its end");
  }
  const Modulus& m = cipher.modulus();
  const std::size_t width = directives.size();
  auto k_end = cipher.DeriveKey(end, width);
  auto k_start = cipher.DeriveKey(start, width);

  // Per element: -k(end) + k(start).
  std::vector<RingElement> delta(width);
  for (std::size_t j = 0; j < width; ++j) {
    delta[j] = m.Sub(k_start.elements[j], k_end.elements[j]);
  }

  OutputLayout layout = MakeLayout(directives);
  auto projected = Project(delta, layout, m);

  SplitMix64 rng({rng_seed, start.t, end.t});
  TransformationToken token;
  token.window_start = start;
  token.window_end = end;
  token.members = {stream_id};
  token.stream_set_id = StreamSetId(token.members);
  token.elements.resize(layout.Width());
  for (std::size_t s = 0; s < layout.Width(); ++s) {
    if (!layout.released[s]) continue;
    RingElement v = projected[s];
    if (layout.sources[s].size() == 1) {
      const auto& d = directives[layout.sources[s][0]];
      if (d.kind == ElementDirective::Kind::kShift) {
        v = m.Add(v, m.FromSigned(d.shift));
      } else if (d.kind == ElementDirective::Kind::kPerturb && d.sigma > 0) {
        std::normal_distribution<double> normal(0.0, d.sigma);
        v = m.Add(v, m.FromSigned(std::llround(normal(rng))));
        token.noised = true;
      }
    }
    token.elements[s] = v;
  }
  return token;
}

TransformationToken MultiStreamPartial(
    std::span<const TransformationToken> tokens, const Modulus& m) {
  if (tokens.empty()) throw Error(ErrorCode::kInvalidArgument, "no tokens");
  TransformationToken out = tokens.front();
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.window_start != out.window_start || t.window_end != out.window_end) {
      throw Error(ErrorCode::kRangeMismatch, "partials cover different windows");
    }
    if (t.elements.size() != out.elements.size()) {
      throw Error(ErrorCode::kWidthMismatch, "partials have different widths");
    }
    for (std::size_t s = 0; s < t.elements.size(); ++s) {
      if (t.elements[s].has_value() != out.elements[s].has_value()) {
        throw Error(ErrorCode::kRangeMismatch,
                    "partials release different element patterns");
      }
      if (t.elements[s]) out.elements[s] = m.Add(*out.elements[s], *t.elements[s]);
    }
    out.members.insert(out.members.end(), t.members.begin(), t.members.end());
    out.noised = out.noised || t.noised;
  }
  std::sort(out.members.begin(), out.members.end());
  out.stream_set_id = StreamSetId(out.members);  // rejects overlapping sets
  return out;
}

double NoiseSpec::PerPartySigma() const {
  return sigma_target / std::sqrt(honest_fraction * static_cast<double>(party_count));
}

void NoiseSpec::Validate() const {
  if (sigma_target < 0 || !(honest_fraction > 0 && honest_fraction <= 1) ||
      party_count == 0 || !(scale > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad noise spec");
  }
}

namespace {
// Absorbs float noise from summing decimal costs such as 0.1 + 0.2.
constexpr double kBudgetSlack = 1e-12;
}  // namespace

PrivacyBudget::PrivacyBudget(double epsilon_total, double epsilon_spent)
    : total_(epsilon_total), spent_(epsilon_spent) {
  if (!(epsilon_total >= 0) || !(epsilon_spent >= 0) ||
      epsilon_spent > epsilon_total + kBudgetSlack) {
    throw Error(ErrorCode::kInvalidArgument, "bad privacy budget");
  }
}

PrivacyBudget::PrivacyBudget(const PrivacyBudget& other) {
  std::lock_guard<std::mutex> lock(other.mu_);
  total_ = other.total_;
  spent_ = other.spent_;
}

PrivacyBudget& PrivacyBudget::operator=(const PrivacyBudget& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  total_ = other.total_;
  spent_ = other.spent_;
  return *this;
}

bool PrivacyBudget::TryCharge(double cost) {
  std::lock_guard<std::mutex> lock(mu_);
  if (spent_ + cost > total_ + kBudgetSlack) return false;
  spent_ = std::min(spent_ + cost, total_);
  return true;
}

bool PrivacyBudget::CanAfford(double cost) const {
  std::lock_guard<std::mutex> lock(mu_);
  return spent_ + cost <= total_ + kBudgetSlack;
}

double PrivacyBudget::total() const {
  std::lock_guard<std::mutex> lock(mu_);
  return total_;
}

double PrivacyBudget::spent() const {
  std::lock_guard<std::mutex> lock(mu_);
  return spent_;
}

double PrivacyBudget::remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return total_ - spent_;
}

RingElement SampleFixedPointGaussian(double sigma, double scale,
                                     std::uint64_t seed, std::uint64_t index,
                                     const Modulus& m) {
  if (sigma <= 0) return 0;
  SplitMix64 rng({seed, index});
  std::normal_distribution<double> normal(0.0, sigma);
  return m.FromSigned(std::llround(normal(rng) * scale));
}

NoisedResult AddDpNoise(const TransformationToken& token, const NoiseSpec& spec,
                        PrivacyBudget& budget, double epsilon_cost,
                        std::uint64_t rng_seed, const Modulus& m,
                        std::span<const double> slot_scales) {
  if (!slot_scales.empty() && slot_scales.size() != token.elements.size()) {
    throw Error(ErrorCode::kWidthMismatch, "one scale per token slot expected");
  }
  if (!(epsilon_cost > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon cost must be positive");
  }
  if (token.noised) throw Error(ErrorCode::kInvalidArgument, "token already noised");
  spec.Validate();
  if (!budget.TryCharge(epsilon_cost)) return Suppressed{};

  TransformationToken out = token;
  out.noised = true;
  const double sigma = spec.PerPartySigma();
  for (std::size_t s = 0; s < out.elements.size(); ++s) {
    if (!out.elements[s]) continue;
    const double scale = slot_scales.empty() ? spec.scale : slot_scales[s];
    out.elements[s] =
        m.Add(*out.elements[s], SampleFixedPointGaussian(sigma, scale, rng_seed, s, m));
  }
  return out;
}

std::optional<TransformationToken> TokenLedger::Issue(
    const std::string& stream_id, const std::string& attribute,
    Timestamp start, Timestamp end, const Digest& request_fingerprint,
    const std::function<TransformationToken()>& make) {
  std::lock_guard<std::mutex> lock(mu_);
  Key key{stream_id, attribute, start.t, end.t};
  if (auto it = issued_.find(key); it != issued_.end()) {
    if (it->second.first == request_fingerprint) return it->second.second;
    return std::nullopt;
  }
  TransformationToken token = make();
  issued_.emplace(key, std::make_pair(request_fingerprint, token));
  return token;
}

std::size_t TokenLedger::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return issued_.size();
}

std::size_t TokenWireSize(std::size_t released) { return 8 + 8 + 32 + 10 * released; }

Bytes EncodeToken(const TransformationToken& token) {
  ByteWriter w;
  w.U64(token.window_start.t);
  w.U64(token.window_end.t);
  w.Put(token.stream_set_id);
  for (std::size_t s = 0; s < token.elements.size(); ++s) {
    if (!token.elements[s]) continue;
    if (s > 0xffff) throw Error(ErrorCode::kInvalidArgument, "slot index exceeds 16 bits");
    w.U16(static_cast<std::uint16_t>(s));
    w.U64(*token.elements[s]);
  }
  return w.Take();
}

TransformationToken DecodeToken(std::span<const std::uint8_t> wire,
                                std::size_t width) {
  ByteReader r(wire);
  TransformationToken t;
  t.window_start = {r.U64()};
  t.window_end = {r.U64()};
  t.stream_set_id = r.GetDigest();
  if (r.remaining() % 10 != 0) throw DecodeError("ragged token element list");
  t.elements.resize(width);
  while (r.remaining() > 0) {
    std::uint16_t idx = r.U16();
    std::uint64_t v = r.U64();
    if (idx >= width) throw DecodeError("token slot index out of range");
    if (t.elements[idx]) throw DecodeError("duplicate token slot");
    t.elements[idx] = v;
  }
  return t;
}

}  // namespace privstream::token
