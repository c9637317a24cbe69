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

#include "privstream/ring_crypto.h"

#include <openssl/rand.h>

#include <algorithm>
#include <set>
#include <stdexcept>

#include "privstream/errors.h"

namespace privstream {

std::size_t TransformationToken::ReleasedCount() const {
  return static_cast<std::size_t>(
      std::count_if(elements.begin(), elements.end(),
                    [](const auto& e) { return e.has_value(); }));
}

void TransformationToken::Validate() const {
  if (!(window_start < window_end)) {
    throw Error(ErrorCode::kInvalidArgument,
                "token window start must precede its end");
  }
  if (ReleasedCount() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "token releases no element");
  }
}

Digest StreamSetId(std::vector<std::string> stream_ids) {
  std::sort(stream_ids.begin(), stream_ids.end());
  if (std::adjacent_find(stream_ids.begin(), stream_ids.end()) !=
      stream_ids.end()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate stream id in set");
  }
  ByteWriter w;
  for (const auto& id : stream_ids) {
    w.U32(static_cast<std::uint32_t>(id.size()));
    w.Raw(std::span(reinterpret_cast<const std::uint8_t*>(id.data()),
                    id.size()));
  }
  return Sha256(w.bytes());
}

namespace crypto {

Modulus::Modulus(unsigned bits) : bits_(bits) {
  if (bits < 1 || bits > 64) {
    throw Error(ErrorCode::kInvalidArgument, "modulus must be 2^1 .. 2^64");
  }
  mask_ = bits == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

std::int64_t Modulus::ToSigned(RingElement v) const {
  v &= mask_;
  if (v >= half()) {
    // v - M, computed without overflowing for bits == 64.
    return -static_cast<std::int64_t>(mask_ - v) - 1;
  }
  return static_cast<std::int64_t>(v);
}

void AddInPlace(std::span<RingElement> acc, std::span<const RingElement> x,
                const Modulus& m) {
  if (acc.size() != x.size()) {
    throw Error(ErrorCode::kWidthMismatch, "vector widths differ");
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = m.Add(acc[i], x[i]);
}

void SubInPlace(std::span<RingElement> acc, std::span<const RingElement> x,
                const Modulus& m) {
  if (acc.size() != x.size()) {
    throw Error(ErrorCode::kWidthMismatch, "vector widths differ");
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = m.Sub(acc[i], x[i]);
}

MasterSecret MasterSecret::Generate(std::string stream_id) {
  MasterSecret s;
  s.stream_id = std::move(stream_id);
  if (RAND_bytes(s.key.data(), static_cast<int>(s.key.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
  return s;
}

MasterSecret MasterSecret::FromSeed(std::string stream_id, std::uint64_t seed) {
  ByteWriter w;
  w.U64(seed);
  w.Raw(std::span(reinterpret_cast<const std::uint8_t*>(stream_id.data()),
                  stream_id.size()));
  Digest d = Sha256(w.bytes());
  MasterSecret s;
  s.stream_id = std::move(stream_id);
  std::copy_n(d.bytes.begin(), s.key.size(), s.key.begin());
  return s;
}

StreamCipher::StreamCipher(std::shared_ptr<const Prf> prf, Modulus modulus)
    : prf_(std::move(prf)), modulus_(modulus) {
  if (prf_ == nullptr) throw Error(ErrorCode::kInvalidArgument, "null PRF");
}

KeyVector StreamCipher::DeriveKey(Timestamp t, std::size_t width) const {
  if (width == 0) throw Error(ErrorCode::kInvalidArgument, "width must be >= 1");
  std::vector<Block128> in(width);
  for (std::size_t j = 0; j < width; ++j) in[j] = {t.t, j};
  std::vector<Block128> out(width);
  prf_->EvalMany(in, out);
  KeyVector key{std::vector<RingElement>(width), t};
  for (std::size_t j = 0; j < width; ++j) key.elements[j] = modulus_.Reduce(out[j].lo);
  return key;
}

StreamCiphertext StreamCipher::Encrypt(
    Timestamp t_prev, Timestamp t_curr,
    std::span<const RingElement> message) const {
  if (!(t_prev < t_curr)) {
    throw Error(ErrorCode::kOrdering, "t_prev must be before t_curr");
  }
  return EncryptWithKeys(DeriveKey(t_prev, message.size()),
                         DeriveKey(t_curr, message.size()), message);
}

StreamCiphertext StreamCipher::EncryptWithKeys(
    const KeyVector& prev, const KeyVector& curr,
    std::span<const RingElement> message) const {
  if (!(prev.t < curr.t)) {
    throw Error(ErrorCode::kOrdering, "t_prev must be before t_curr");
  }
  if (prev.elements.size() != message.size() ||
      curr.elements.size() != message.size()) {
    throw Error(ErrorCode::kWidthMismatch, "key width differs from message");
  }
  StreamCiphertext ct{curr.t, prev.t, std::vector<RingElement>(message.size())};
  for (std::size_t j = 0; j < message.size(); ++j) {
    ct.body[j] = modulus_.Sub(
        modulus_.Add(modulus_.Reduce(message[j]), curr.elements[j]),
        prev.elements[j]);
  }
  return ct;
}

std::vector<RingElement> StreamCipher::DecryptWindow(
    Timestamp origin, Timestamp end, const StreamCiphertext& ct) const {
  std::vector<RingElement> out = ct.body;
  SubInPlace(out, DeriveKey(end, out.size()).elements, modulus_);
  AddInPlace(out, DeriveKey(origin, out.size()).elements, modulus_);
  return out;
}

StreamCipher MakeStreamCipher(const MasterSecret& master, PrfKind kind,
                              Modulus modulus) {
  return StreamCipher(MakePrf(kind, master.key), modulus);
}

StreamCiphertext AddCiphertexts(const StreamCiphertext& a,
                                const StreamCiphertext& b, SumMode mode,
                                const Modulus& m) {
  if (a.body.size() != b.body.size()) {
    throw Error(ErrorCode::kWidthMismatch, "ciphertext widths differ");
  }
  StreamCiphertext out;
  switch (mode) {
    case SumMode::kChain:
      if (b.t_prev != a.t_curr) {
        throw Error(ErrorCode::kChainGap,
                    "ciphertext does not chain onto the previous one");
      }
      out.t_prev = a.t_prev;
      out.t_curr = b.t_curr;
      break;
    case SumMode::kCrossStream:
      if (a.t_prev != b.t_prev || a.t_curr != b.t_curr) {
        throw Error(ErrorCode::kRangeMismatch,
                    "cross-stream sum over different windows");
      }
      out.t_prev = a.t_prev;
      out.t_curr = a.t_curr;
      break;
  }
  out.body = a.body;
  AddInPlace(out.body, b.body, m);
  return out;
}

StreamCiphertext SumChain(std::span<const StreamCiphertext> chain,
                          const Modulus& m) {
  if (chain.empty()) throw Error(ErrorCode::kInvalidArgument, "empty chain");
  StreamCiphertext acc = chain.front();
  for (std::size_t i = 1; i < chain.size(); ++i) {
    if (chain[i].t_prev != acc.t_curr) {
      throw Error(ErrorCode::kChainGap,
                  "ciphertext does not chain onto the previous one");
    }
    if (chain[i].body.size() != acc.body.size()) {
      throw Error(ErrorCode::kWidthMismatch, "ciphertext widths differ");
    }
    AddInPlace(acc.body, chain[i].body, m);
    acc.t_curr = chain[i].t_curr;
  }
  return acc;
}

std::vector<std::optional<RingElement>> ApplyToken(
    const StreamCiphertext& aggregate, const Digest& provenance,
    const TransformationToken& token, const Modulus& m) {
  if (token.window_start != aggregate.t_prev ||
      token.window_end != aggregate.t_curr) {
    throw Error(ErrorCode::kRangeMismatch,
                "token window does not match the aggregate");
  }
  if (token.stream_set_id != provenance) {
    throw Error(ErrorCode::kRangeMismatch,
                "token stream set does not match the aggregate");
  }
  if (token.elements.size() != aggregate.body.size()) {
    throw Error(ErrorCode::kWidthMismatch, "token width differs from aggregate");
  }
  std::vector<std::optional<RingElement>> out(aggregate.body.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (token.elements[j]) out[j] = m.Add(aggregate.body[j], *token.elements[j]);
  }
  return out;
}

}  // namespace crypto
}  // namespace privstream
