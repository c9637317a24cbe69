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

#ifndef PRIVSTREAM_SECURE_AGG_H_
#define PRIVSTREAM_SECURE_AGG_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privstream/bytes.h"
#include "privstream/prf.h"
#include "privstream/ring.h"
#include "privstream/token_types.h"

namespace privstream::secagg {

using crypto::Block128;
using crypto::Key128;
using crypto::Modulus;
using crypto::PrfKind;
using crypto::RingElement;

// 32-byte identity hash. Ordered by the big-endian numeric value of id.
struct PartyId {
  Digest id;

  auto operator<=>(const PartyId&) const = default;
  bool operator==(const PartyId&) const = default;

  // SHA-256 of a human-readable name; used by simulations and tests.
  static PartyId FromName(std::string_view name);
  std::string Hex() const { return id.Hex(); }
};

struct PairwiseSecret {
  PartyId peer;
  Key128 secret{};
};

// Public identities known to every party. Stands in for a PKI.
class IdentityRegistry {
 public:
  void Register(const PartyId& id, Bytes public_key = {});
  const Bytes* Find(const PartyId& id) const;
  std::vector<PartyId> Ids() const;
  std::size_t size() const { return keys_.size(); }

 private:
  std::map<PartyId, Bytes> keys_;
};

// P-256 key pair. The party id is SHA-256 of the DER public key.
class EcdhKeyPair {
 public:
  static EcdhKeyPair Generate();
  ~EcdhKeyPair();
  EcdhKeyPair(EcdhKeyPair&&) noexcept;
  EcdhKeyPair& operator=(EcdhKeyPair&&) noexcept;

  const Bytes& public_key() const { return public_der_; }
  PartyId id() const;
  // SHA-256 of the ECDH shared point, truncated to 128 bits.
  Key128 Agree(std::span<const std::uint8_t> peer_public_der) const;

 private:
  EcdhKeyPair() = default;
  struct Key;
  std::unique_ptr<Key> key_;
  Bytes public_der_;
};

// Real key exchange against registered public keys. Throws
// Error(kUnknownIdentity) for peers missing from the registry.
std::vector<PairwiseSecret> SetupPairwise(const EcdhKeyPair& self,
                                          std::span<const PartyId> peers,
                                          const IdentityRegistry& registry);

// Deterministic test double: secret = SHA-256(low id || high id || salt)
// truncated to 128 bits. Only the registry membership check is real.
std::vector<PairwiseSecret> SetupPairwiseDeterministic(
    const PartyId& self, std::span<const PartyId> peers,
    const IdentityRegistry& registry, std::uint64_t salt = 0);

// Work done by the nonce builders. One PRF call is one 128-bit block.
struct OpCounters {
  std::uint64_t prf_calls = 0;
  std::uint64_t additions = 0;
  std::uint64_t edge_checks = 0;  // membership-delta edge updates
  std::uint64_t empty_rounds = 0;

  OpCounters& operator+=(const OpCounters& o);
  bool operator==(const OpCounters&) const = default;
};

// One peer per pairwise secret, each with its own keyed PRF. sign() is -1
// when self > peer: that endpoint subtracts the shared mask.
class PeerTable {
 public:
  PeerTable(const PartyId& self, std::span<const PairwiseSecret> secrets,
            PrfKind kind = PrfKind::kAes128);

  const PartyId& self() const { return self_; }
  std::size_t size() const { return peers_.size(); }
  const PartyId& peer(std::size_t i) const { return peers_[i].id; }
  bool negate(std::size_t i) const { return peers_[i].negate; }
  const crypto::Prf& prf(std::size_t i) const { return *peers_[i].prf; }
  std::optional<std::size_t> IndexOf(const PartyId& id) const;

 private:
  struct Peer {
    PartyId id;
    bool negate = false;
    std::unique_ptr<crypto::Prf> prf;
  };
  PartyId self_;
  std::vector<Peer> peers_;
  std::map<PartyId, std::size_t> index_;
};

// Edge selection rule of the random-graph baseline: an edge is kept when the
// 128-bit PRF output, read as an unsigned integer, is below the cutoff.
class DreamThreshold {
 public:
  static DreamThreshold All() { return DreamThreshold(true, 0); }
  static DreamThreshold None() { return DreamThreshold(false, 0); }
  // Cutoff p * 2^128, p in [0, 1].
  static DreamThreshold FromProbability(double p);
  // Cutoff 2^(128 - bits).
  static DreamThreshold PowerOfTwo(unsigned bits);

  bool Selects(const Block128& v) const;
  double probability() const;

 private:
  DreamThreshold(bool all, unsigned __int128 cutoff)
      : all_(all), cutoff_(cutoff) {}
  bool all_;
  unsigned __int128 cutoff_;
};

// Mask for one edge: width ring elements from ceil(width / 2) PRF blocks,
// negated when the table says so, added into acc.
void AddEdgeMask(const PeerTable& table, std::size_t peer, Block128 input,
                 std::span<RingElement> acc, const Modulus& m,
                 OpCounters* counters);

// Canceling nonce over every peer: sum of signed PRF(k, round).
std::vector<RingElement> NonceClique(const PeerTable& table, std::uint64_t round,
                                     std::size_t width, const Modulus& m,
                                     OpCounters* counters = nullptr);
std::vector<RingElement> NonceClique(const PeerTable& table,
                                     std::span<const std::uint8_t> active,
                                     std::uint64_t round, std::size_t width,
                                     const Modulus& m, OpCounters* counters);

// Random-graph baseline: one selection PRF per peer, then a mask PRF for
// each selected edge.
std::vector<RingElement> NonceDream(const PeerTable& table, std::uint64_t round,
                                    const DreamThreshold& threshold,
                                    std::size_t width, const Modulus& m,
                                    OpCounters* counters = nullptr);
std::vector<RingElement> NonceDream(const PeerTable& table,
                                    std::span<const std::uint8_t> active,
                                    std::uint64_t round,
                                    const DreamThreshold& threshold,
                                    std::size_t width, const Modulus& m,
                                    OpCounters* counters);

// Edge-to-round assignment for one epoch. Each peer's 128-bit PRF output is
// cut into floor(128 / b) segments of b bits; segment s holding value g
// activates the edge in round s * 2^b + g.
class EpochPlan {
 public:
  EpochPlan(const PeerTable& table, std::uint64_t epoch_id, unsigned bits,
            OpCounters* counters = nullptr);

  std::uint64_t epoch_id() const { return epoch_id_; }
  unsigned bits() const { return bits_; }
  unsigned segments() const { return 128 / bits_; }
  // floor(128 / b) * 2^b, or nullopt when it does not fit 64 bits.
  std::optional<std::uint64_t> rounds() const;
  std::size_t peer_count() const { return outputs_.size(); }

  // Round of the peer's edge in segment s, as a 128-bit value.
  unsigned __int128 RoundOf(std::size_t peer, unsigned segment) const;
  bool Active(std::size_t peer, std::uint64_t round) const;
  // Peers whose edge is active in the round, ascending.
  std::vector<std::size_t> ActivePeers(std::uint64_t round) const;

 private:
  void BuildIndex();

  std::uint64_t epoch_id_;
  unsigned bits_;
  std::vector<Block128> outputs_;
  // CSR round -> peers, built when the epoch is short enough.
  std::vector<std::uint32_t> round_begin_;
  std::vector<std::uint32_t> round_peers_;
};

// Throws Error(kInvalidArgument) when round is outside the epoch.
std::vector<RingElement> NonceZeph(const EpochPlan& plan, const PeerTable& table,
                                   std::uint64_t round, std::size_t width,
                                   const Modulus& m, OpCounters* counters = nullptr);
std::vector<RingElement> NonceZeph(const EpochPlan& plan, const PeerTable& table,
                                   std::span<const std::uint8_t> active,
                                   std::uint64_t round, std::size_t width,
                                   const Modulus& m, OpCounters* counters);

enum class Protocol { kClique, kDream, kZeph };
Protocol ParseProtocol(std::string_view name);
std::string_view ProtocolName(Protocol p);

struct ProtocolParams {
  Protocol protocol = Protocol::kZeph;
  unsigned bits = 7;  // dream edge probability 2^-bits; zeph segment width
  std::size_t width = 1;
  Modulus modulus;
};

struct MembershipDelta {
  std::uint64_t round = 0;
  std::vector<PartyId> joined;
  std::vector<PartyId> dropped;

  // Throws Error(kInvalidArgument) when a party is both joined and dropped.
  void Validate() const;
  bool operator==(const MembershipDelta&) const = default;
};

Bytes EncodeDelta(const MembershipDelta& delta);
MembershipDelta DecodeDelta(std::span<const std::uint8_t> wire);

// One controller's view of the protocol: its peers, the current membership,
// and the epoch plan for zeph. Global round g maps to epoch g / W, local
// round g % W.
class ControllerSession {
 public:
  ControllerSession(const PartyId& self, std::span<const PairwiseSecret> secrets,
                    PrfKind kind, ProtocolParams params);

  const PartyId& self() const { return table_.self(); }
  const ProtocolParams& params() const { return params_; }
  const PeerTable& table() const { return table_; }
  bool IsMember(const PartyId& peer) const;
  std::size_t member_count() const;
  std::uint64_t rounds_per_epoch() const { return rounds_per_epoch_; }

  // Nonce for a global round against the current membership.
  std::vector<RingElement> Nonce(std::uint64_t round, OpCounters* counters = nullptr);

  // Applies a delta to the membership and corrects a nonce already built for
  // delta.round, touching only the joined and dropped edges. Throws
  // Error(kPastRound) when delta.round was already emitted and
  // Error(kUnknownIdentity) for parties without a pairwise secret.
  std::vector<RingElement> ApplyDelta(const MembershipDelta& delta,
                                      std::vector<RingElement> nonce,
                                      OpCounters* counters = nullptr);

  // Records that the masked token for round left this controller.
  void MarkEmitted(std::uint64_t round);

 private:
  bool EdgeActive(std::size_t peer, std::uint64_t round, OpCounters* counters);
  const EpochPlan& PlanFor(std::uint64_t epoch, OpCounters* counters);

  PeerTable table_;
  ProtocolParams params_;
  DreamThreshold threshold_;
  std::vector<std::uint8_t> active_;
  std::uint64_t rounds_per_epoch_ = 1;
  std::optional<EpochPlan> plan_;
  std::optional<std::uint64_t> last_emitted_;
};

// A controller's token with its round nonce added to every released slot.
struct MaskedToken {
  std::uint64_t round = 0;
  std::uint64_t epoch = 0;
  PartyId party;
  TransformationToken token;

  bool operator==(const MaskedToken&) const = default;
};

// nonce must have one element per token slot.
MaskedToken MaskToken(const TransformationToken& token,
                      std::span<const RingElement> nonce, std::uint64_t round,
                      std::uint64_t epoch, const PartyId& party,
                      const Modulus& m = Modulus());

// Sums masked tokens of one round. The result only equals the sum of the
// plain tokens when the set of senders matches the membership every nonce
// was built for. stream_set_id names the union of the senders' streams.
TransformationToken UnmaskAggregate(std::span<const MaskedToken> masked,
                                    const Digest& stream_set_id,
                                    const Modulus& m = Modulus());

// round u64, epoch u64, party 32 bytes, then the token wire format.
Bytes EncodeMaskedToken(const MaskedToken& masked);
MaskedToken DecodeMaskedToken(std::span<const std::uint8_t> wire,
                              std::size_t width);

// Union bound on the probability that one of W Erdos-Renyi graphs G(n, p)
// is disconnected: W * sum_{j=1}^{n/2} ((e n / j) (1 - p)^(n - j))^j,
// evaluated in log space and clamped to [0, 1].
double DisconnectBound(std::uint64_t n, double p, double graphs);
// Natural log of the unclamped bound; -inf when p == 1.
double LogDisconnectBound(std::uint64_t n, double p, double graphs);

struct OptimizationResult {
  bool feasible = false;
  unsigned bits = 0;
  double rounds = 0;  // W = floor(128 / b) * 2^b
  double expected_degree = 0;
  double bound = 1;
  std::uint64_t honest = 0;
};

// Largest W over b in [1, prf_bits] whose bound stays <= delta, with
// n = ceil((1 - alpha) * parties) honest nodes and p = 2^-b.
OptimizationResult OptimizeBits(std::uint64_t parties, double alpha, double delta,
                                unsigned prf_bits = 128);

}  // namespace privstream::secagg

#endif  // PRIVSTREAM_SECURE_AGG_H_
