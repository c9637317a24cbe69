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

#ifndef PRIVSTREAM_RING_CRYPTO_H_
#define PRIVSTREAM_RING_CRYPTO_H_

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "privstream/bytes.h"
#include "privstream/prf.h"
#include "privstream/ring.h"
#include "privstream/token_types.h"

// Symmetric additively homomorphic stream encryption over Z_M.
//
// An event (t_i, m_i) encrypts to (t_i, t_{i-1}, m_i + k(t_i) - k(t_{i-1})).
// Summing a chain of ciphertexts telescopes the key material to
// k(t_last) - k(t_origin), so a window is decrypted (or a token for it
// derived) from the two outer keys alone.
namespace privstream::crypto {

struct MasterSecret {
  Key128 key{};
  std::string stream_id;

  // Fresh secret from the OpenSSL CSPRNG.
  static MasterSecret Generate(std::string stream_id);
  // Deterministic secret for simulations: SHA-256(seed || stream_id)[0:16].
  static MasterSecret FromSeed(std::string stream_id, std::uint64_t seed);
};

struct KeyVector {
  std::vector<RingElement> elements;
  Timestamp t;
};

struct StreamCiphertext {
  Timestamp t_curr;
  Timestamp t_prev;
  std::vector<RingElement> body;

  bool operator==(const StreamCiphertext&) const = default;
};

// Binds a PRF keyed with a stream's master secret to a ring.
class StreamCipher {
 public:
  StreamCipher(std::shared_ptr<const Prf> prf, Modulus modulus);

  // Element j of the key is PRF(t || j) truncated to the low 64 bits and
  // reduced mod M.
  KeyVector DeriveKey(Timestamp t, std::size_t width) const;

  StreamCiphertext Encrypt(Timestamp t_prev, Timestamp t_curr,
                           std::span<const RingElement> message) const;

  // Same as Encrypt with keys the caller already derived (producers cache
  // the previous event's key).
  StreamCiphertext EncryptWithKeys(const KeyVector& prev, const KeyVector& curr,
                                   std::span<const RingElement> message) const;

  // body - k(end) + k(origin). A ciphertext that does not cover exactly
  // (origin, end] decrypts to garbage; nothing in the scheme detects this.
  std::vector<RingElement> DecryptWindow(Timestamp origin, Timestamp end,
                                         const StreamCiphertext& ct) const;

  const Modulus& modulus() const { return modulus_; }
  const Prf& prf() const { return *prf_; }

 private:
  std::shared_ptr<const Prf> prf_;
  Modulus modulus_;
};

StreamCipher MakeStreamCipher(const MasterSecret& master,
                              PrfKind kind = PrfKind::kAes128,
                              Modulus modulus = Modulus());

enum class SumMode {
  kChain,        // b directly follows a within one stream
  kCrossStream,  // a and b cover the same window in different streams
};

StreamCiphertext AddCiphertexts(const StreamCiphertext& a,
                                const StreamCiphertext& b, SumMode mode,
                                const Modulus& m);

// Left fold of AddCiphertexts(kChain). Throws on an empty input.
StreamCiphertext SumChain(std::span<const StreamCiphertext> chain,
                          const Modulus& m);

// Combines an aggregate (already projected through the token's output
// layout) with a token. Withheld slots come back as nullopt. Refuses with
// kRangeMismatch when the token window or stream set does not match the
// aggregate's provenance.
std::vector<std::optional<RingElement>> ApplyToken(
    const StreamCiphertext& aggregate, const Digest& provenance,
    const TransformationToken& token, const Modulus& m);

}  // namespace privstream::crypto

#endif  // PRIVSTREAM_RING_CRYPTO_H_
