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

#include "privstream/secure_agg.h"

#include <openssl/evp.h>
#include <openssl/x509.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <spdlog/spdlog.h>

#include "privstream/errors.h"
#include "privstream/token.h"

namespace privstream::secagg {
namespace {

using u128 = unsigned __int128;

// Domain tags, top byte of the PRF input's high word. Bits 40..55 of the
// high word carry the block index within one edge mask.
constexpr std::uint64_t kTagCliqueMask = 1;
constexpr std::uint64_t kTagDreamSelect = 2;
constexpr std::uint64_t kTagDreamMask = 3;
constexpr std::uint64_t kTagEpochGraph = 4;
constexpr std::uint64_t kTagZephMask = 5;
constexpr unsigned kBlockShift = 40;
constexpr std::uint64_t kMaxMaskRound = std::uint64_t{1} << kBlockShift;
constexpr std::size_t kMaxWidth = std::size_t{2} << 16;
// Epochs with at most this many rounds get a round -> peers index.
constexpr std::uint64_t kIndexedRoundLimit = std::uint64_t{1} << 22;

Block128 Tagged(std::uint64_t tag, std::uint64_t lo, std::uint64_t low_hi = 0) {
  return {lo, (tag << 56) | low_hi};
}

Block128 CliqueInput(std::uint64_t round) { return Tagged(kTagCliqueMask, round); }
Block128 DreamSelectInput(std::uint64_t round) {
  return Tagged(kTagDreamSelect, round);
}
Block128 DreamMaskInput(std::uint64_t round) { return Tagged(kTagDreamMask, round); }
Block128 ZephInput(std::uint64_t epoch, std::uint64_t round) {
  if (round >= kMaxMaskRound) {
    throw Error(ErrorCode::kInvalidArgument, "epoch round exceeds 40 bits");
  }
  return Tagged(kTagZephMask, epoch, round);
}

u128 AsU128(const Block128& b) { return (u128{b.hi} << 64) | b.lo; }

Key128 Truncate(const Digest& d) {
  Key128 k;
  std::copy_n(d.bytes.begin(), k.size(), k.begin());
  return k;
}

bool IsActive(std::span<const std::uint8_t> active, std::size_t i) {
  return active.empty() || active[i] != 0;
}

void CheckWidth(std::size_t width) {
  if (width == 0 || width > kMaxWidth) {
    throw Error(ErrorCode::kInvalidArgument, "nonce width out of range");
  }
}

void NoteEmptyRound(std::uint64_t round, OpCounters* counters) {
  if (counters) ++counters->empty_rounds;
  spdlog::warn("round {} has no active edges; nonce is zero", round);
}

}  // namespace

PartyId PartyId::FromName(std::string_view name) { return {Sha256(name)}; }

void IdentityRegistry::Register(const PartyId& id, Bytes public_key) {
  keys_[id] = std::move(public_key);
}

const Bytes* IdentityRegistry::Find(const PartyId& id) const {
  auto it = keys_.find(id);
  return it == keys_.end() ? nullptr : &it->second;
}

std::vector<PartyId> IdentityRegistry::Ids() const {
  std::vector<PartyId> ids;
  ids.reserve(keys_.size());
  for (const auto& [id, key] : keys_) ids.push_back(id);
  return ids;
}

struct EcdhKeyPair::Key {
  EVP_PKEY* pkey = nullptr;
  ~Key() { EVP_PKEY_free(pkey); }
};

EcdhKeyPair::~EcdhKeyPair() = default;
EcdhKeyPair::EcdhKeyPair(EcdhKeyPair&&) noexcept = default;
EcdhKeyPair& EcdhKeyPair::operator=(EcdhKeyPair&&) noexcept = default;

EcdhKeyPair EcdhKeyPair::Generate() {
  EcdhKeyPair kp;
  kp.key_ = std::make_unique<Key>();
  kp.key_->pkey = EVP_PKEY_Q_keygen(nullptr, nullptr, "EC", "P-256");
  if (kp.key_->pkey == nullptr) throw std::runtime_error("P-256 keygen failed");
  int len = i2d_PUBKEY(kp.key_->pkey, nullptr);
  if (len <= 0) throw std::runtime_error("public key encoding failed");
  kp.public_der_.resize(static_cast<std::size_t>(len));
  unsigned char* out = kp.public_der_.data();
  i2d_PUBKEY(kp.key_->pkey, &out);
  return kp;
}

PartyId EcdhKeyPair::id() const { return {Sha256(public_der_)}; }

Key128 EcdhKeyPair::Agree(std::span<const std::uint8_t> peer_public_der) const {
  const unsigned char* p = peer_public_der.data();
  EVP_PKEY* peer = d2i_PUBKEY(nullptr, &p, static_cast<long>(peer_public_der.size()));
  if (peer == nullptr) {
    throw Error(ErrorCode::kUnknownIdentity, "malformed peer public key");
  }
  EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new(key_->pkey, nullptr);
  Bytes shared;
  std::size_t len = 0;
  bool ok = ctx != nullptr && EVP_PKEY_derive_init(ctx) == 1 &&
            EVP_PKEY_derive_set_peer(ctx, peer) == 1 &&
            EVP_PKEY_derive(ctx, nullptr, &len) == 1;
  if (ok) {
    shared.resize(len);
    ok = EVP_PKEY_derive(ctx, shared.data(), &len) == 1;
    shared.resize(len);
  }
  EVP_PKEY_CTX_free(ctx);
  EVP_PKEY_free(peer);
  if (!ok) throw std::runtime_error("ECDH derivation failed");
  return Truncate(Sha256(shared));
}

std::vector<PairwiseSecret> SetupPairwise(const EcdhKeyPair& self,
                                          std::span<const PartyId> peers,
                                          const IdentityRegistry& registry) {
  const PartyId me = self.id();
  std::vector<PairwiseSecret> out;
  out.reserve(peers.size());
  for (const PartyId& peer : peers) {
    if (peer == me) continue;
    const Bytes* key = registry.Find(peer);
    if (key == nullptr || key->empty()) {
      throw Error(ErrorCode::kUnknownIdentity, "peer " + peer.Hex() + " not registered");
    }
    out.push_back({peer, self.Agree(*key)});
  }
  return out;
}

std::vector<PairwiseSecret> SetupPairwiseDeterministic(
    const PartyId& self, std::span<const PartyId> peers,
    const IdentityRegistry& registry, std::uint64_t salt) {
  if (registry.Find(self) == nullptr) {
    throw Error(ErrorCode::kUnknownIdentity, "self " + self.Hex() + " not registered");
  }
  std::vector<PairwiseSecret> out;
  out.reserve(peers.size());
  for (const PartyId& peer : peers) {
    if (peer == self) continue;
    if (registry.Find(peer) == nullptr) {
      throw Error(ErrorCode::kUnknownIdentity, "peer " + peer.Hex() + " not registered");
    }
    ByteWriter w;
    w.Put(std::min(self, peer).id);
    w.Put(std::max(self, peer).id);
    w.U64(salt);
    out.push_back({peer, Truncate(Sha256(w.bytes()))});
  }
  return out;
}

OpCounters& OpCounters::operator+=(const OpCounters& o) {
  prf_calls += o.prf_calls;
  additions += o.additions;
  edge_checks += o.edge_checks;
  empty_rounds += o.empty_rounds;
  return *this;
}

PeerTable::PeerTable(const PartyId& self, std::span<const PairwiseSecret> secrets,
                     PrfKind kind)
    : self_(self) {
  peers_.reserve(secrets.size());
  for (const auto& s : secrets) {
    if (s.peer == self) {
      throw Error(ErrorCode::kInvalidArgument, "pairwise secret with self");
    }
    if (!index_.emplace(s.peer, peers_.size()).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate peer " + s.peer.Hex());
    }
    peers_.push_back({s.peer, self > s.peer, crypto::MakePrf(kind, s.secret)});
  }
}

std::optional<std::size_t> PeerTable::IndexOf(const PartyId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DreamThreshold DreamThreshold::FromProbability(double p) {
  if (!(p >= 0 && p <= 1)) {
    throw Error(ErrorCode::kInvalidArgument, "edge probability outside [0, 1]");
  }
  if (p == 1) return All();
  double hi = std::floor(std::ldexp(p, 64));
  double lo = std::ldexp(std::ldexp(p, 64) - hi, 64);
  return DreamThreshold(false, (u128{static_cast<std::uint64_t>(hi)} << 64) |
                                   static_cast<std::uint64_t>(lo));
}

DreamThreshold DreamThreshold::PowerOfTwo(unsigned bits) {
  if (bits == 0) return All();
  if (bits >= 128) return DreamThreshold(false, 1);
  return DreamThreshold(false, u128{1} << (128 - bits));
}

bool DreamThreshold::Selects(const Block128& v) const {
  return all_ || AsU128(v) < cutoff_;
}

double DreamThreshold::probability() const {
  if (all_) return 1;
  return std::ldexp(static_cast<double>(static_cast<std::uint64_t>(cutoff_ >> 64)), -64) +
         std::ldexp(static_cast<double>(static_cast<std::uint64_t>(cutoff_)), -128);
}

void AddEdgeMask(const PeerTable& table, std::size_t peer, Block128 input,
                 std::span<RingElement> acc, const Modulus& m,
                 OpCounters* counters) {
  const std::size_t width = acc.size();
  const std::size_t blocks = (width + 1) / 2;
  std::vector<Block128> in(blocks, input);
  for (std::size_t j = 0; j < blocks; ++j) {
    in[j].hi |= static_cast<std::uint64_t>(j) << kBlockShift;
  }
  std::vector<Block128> out(blocks);
  table.prf(peer).EvalMany(in, out);
  const bool negate = table.negate(peer);
  for (std::size_t e = 0; e < width; ++e) {
    const Block128& b = out[e / 2];
    RingElement v = m.Reduce(e % 2 == 0 ? b.lo : b.hi);
    acc[e] = negate ? m.Sub(acc[e], v) : m.Add(acc[e], v);
  }
  if (counters) {
    counters->prf_calls += blocks;
    counters->additions += width;
  }
}

std::vector<RingElement> NonceClique(const PeerTable& table, std::uint64_t round,
                                     std::size_t width, const Modulus& m,
                                     OpCounters* counters) {
  return NonceClique(table, {}, round, width, m, counters);
}

std::vector<RingElement> NonceClique(const PeerTable& table,
                                     std::span<const std::uint8_t> active,
                                     std::uint64_t round, std::size_t width,
                                     const Modulus& m, OpCounters* counters) {
  CheckWidth(width);
  std::vector<RingElement> nonce(width, 0);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (IsActive(active, i)) AddEdgeMask(table, i, CliqueInput(round), nonce, m, counters);
  }
  return nonce;
}

std::vector<RingElement> NonceDream(const PeerTable& table, std::uint64_t round,
                                    const DreamThreshold& threshold,
                                    std::size_t width, const Modulus& m,
                                    OpCounters* counters) {
  return NonceDream(table, {}, round, threshold, width, m, counters);
}

std::vector<RingElement> NonceDream(const PeerTable& table,
                                    std::span<const std::uint8_t> active,
                                    std::uint64_t round,
                                    const DreamThreshold& threshold,
                                    std::size_t width, const Modulus& m,
                                    OpCounters* counters) {
  CheckWidth(width);
  std::vector<RingElement> nonce(width, 0);
  std::size_t selected = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!IsActive(active, i)) continue;
    if (counters) ++counters->prf_calls;
    if (!threshold.Selects(table.prf(i).Eval(DreamSelectInput(round)))) continue;
    ++selected;
    AddEdgeMask(table, i, DreamMaskInput(round), nonce, m, counters);
  }
  if (selected == 0) NoteEmptyRound(round, counters);
  return nonce;
}

EpochPlan::EpochPlan(const PeerTable& table, std::uint64_t epoch_id,
                     unsigned bits, OpCounters* counters)
    : epoch_id_(epoch_id), bits_(bits) {
  if (bits < 1 || bits > 128) {
    throw Error(ErrorCode::kInvalidArgument, "segment bits outside [1, 128]");
  }
  outputs_.resize(table.size());
  const Block128 input = Tagged(kTagEpochGraph, epoch_id);
  for (std::size_t i = 0; i < table.size(); ++i) {
    outputs_[i] = table.prf(i).Eval(input);
  }
  if (counters) counters->prf_calls += table.size();
  BuildIndex();
}

std::optional<std::uint64_t> EpochPlan::rounds() const {
  if (bits_ >= 64) return std::nullopt;
  u128 w = u128{segments()} << bits_;
  if (w > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  return static_cast<std::uint64_t>(w);
}

unsigned __int128 EpochPlan::RoundOf(std::size_t peer, unsigned segment) const {
  u128 v = AsU128(outputs_[peer]);
  if (bits_ == 128) return v;
  u128 field = (v >> (segment * bits_)) & ((u128{1} << bits_) - 1);
  return (u128{segment} << bits_) | field;
}

bool EpochPlan::Active(std::size_t peer, std::uint64_t round) const {
  const unsigned s = bits_ >= 64 ? 0 : static_cast<unsigned>(round >> bits_);
  if (s >= segments()) return false;
  return RoundOf(peer, s) == u128{round};
}

std::vector<std::size_t> EpochPlan::ActivePeers(std::uint64_t round) const {
  std::vector<std::size_t> out;
  if (!round_begin_.empty()) {
    if (round + 1 >= round_begin_.size()) return out;
    for (std::uint32_t k = round_begin_[round]; k < round_begin_[round + 1]; ++k) {
      out.push_back(round_peers_[k]);
    }
    return out;
  }
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    if (Active(i, round)) out.push_back(i);
  }
  return out;
}

void EpochPlan::BuildIndex() {
  auto w = rounds();
  if (!w || *w > kIndexedRoundLimit ||
      outputs_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    return;
  }
  // Counting sort of (round, peer) pairs; peers stay ascending per round.
  round_begin_.assign(*w + 1, 0);
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    for (unsigned s = 0; s < segments(); ++s) {
      ++round_begin_[static_cast<std::uint64_t>(RoundOf(i, s)) + 1];
    }
  }
  for (std::uint64_t r = 0; r < *w; ++r) round_begin_[r + 1] += round_begin_[r];
  round_peers_.resize(round_begin_.back());
  std::vector<std::uint32_t> fill(round_begin_.begin(), round_begin_.end() - 1);
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    for (unsigned s = 0; s < segments(); ++s) {
      round_peers_[fill[static_cast<std::uint64_t>(RoundOf(i, s))]++] =
          static_cast<std::uint32_t>(i);
    }
  }
}

std::vector<RingElement> NonceZeph(const EpochPlan& plan, const PeerTable& table,
                                   std::uint64_t round, std::size_t width,
                                   const Modulus& m, OpCounters* counters) {
  return NonceZeph(plan, table, {}, round, width, m, counters);
}

std::vector<RingElement> NonceZeph(const EpochPlan& plan, const PeerTable& table,
                                   std::span<const std::uint8_t> active,
                                   std::uint64_t round, std::size_t width,
                                   const Modulus& m, OpCounters* counters) {
  CheckWidth(width);
  if (plan.peer_count() != table.size()) {
    throw Error(ErrorCode::kInvalidArgument, "epoch plan built for another peer table");
  }
  auto w = plan.rounds();
  if (w && round >= *w) {
    throw Error(ErrorCode::kInvalidArgument,
                "round " + std::to_string(round) + " outside epoch of " +
                    std::to_string(*w) + " rounds");
  }
  std::vector<RingElement> nonce(width, 0);
  std::size_t used = 0;
  const Block128 input = ZephInput(plan.epoch_id(), round);
  for (std::size_t i : plan.ActivePeers(round)) {
    if (!IsActive(active, i)) continue;
    ++used;
    AddEdgeMask(table, i, input, nonce, m, counters);
  }
  if (used == 0) NoteEmptyRound(round, counters);
  return nonce;
}

Protocol ParseProtocol(std::string_view name) {
  if (name == "clique") return Protocol::kClique;
  if (name == "dream") return Protocol::kDream;
  if (name == "zeph") return Protocol::kZeph;
  throw Error(ErrorCode::kInvalidArgument, "unknown protocol '" + std::string(name) + "'");
}

std::string_view ProtocolName(Protocol p) {
  switch (p) {
    case Protocol::kClique: return "clique";
    case Protocol::kDream: return "dream";
    case Protocol::kZeph: return "zeph";
  }
  return "?";
}

void MembershipDelta::Validate() const {
  std::vector<PartyId> j = joined, d = dropped;
  std::sort(j.begin(), j.end());
  std::sort(d.begin(), d.end());
  std::vector<PartyId> both;
  std::set_intersection(j.begin(), j.end(), d.begin(), d.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "party " + both.front().Hex() + " both joined and dropped");
  }
}

Bytes EncodeDelta(const MembershipDelta& delta) {
  ByteWriter w;
  w.U64(delta.round);
  w.U32(static_cast<std::uint32_t>(delta.joined.size()));
  for (const auto& p : delta.joined) w.Put(p.id);
  w.U32(static_cast<std::uint32_t>(delta.dropped.size()));
  for (const auto& p : delta.dropped) w.Put(p.id);
  return w.Take();
}

MembershipDelta DecodeDelta(std::span<const std::uint8_t> wire) {
  ByteReader r(wire);
  MembershipDelta d;
  d.round = r.U64();
  for (auto* list : {&d.joined, &d.dropped}) {
    std::uint32_t n = r.U32();
    if (r.remaining() / 32 < n) throw DecodeError("delta list truncated");
    for (std::uint32_t i = 0; i < n; ++i) list->push_back({r.GetDigest()});
  }
  if (r.remaining() != 0) throw DecodeError("trailing bytes after delta");
  return d;
}

ControllerSession::ControllerSession(const PartyId& self,
                                     std::span<const PairwiseSecret> secrets,
                                     PrfKind kind, ProtocolParams params)
    : table_(self, secrets, kind),
      params_(params),
      threshold_(DreamThreshold::PowerOfTwo(params.bits)),
      active_(table_.size(), 1) {
  CheckWidth(params_.width);
  if (params_.protocol == Protocol::kZeph) {
    if (params_.bits < 1 || params_.bits > 34) {
      throw Error(ErrorCode::kInvalidArgument,
                  "zeph sessions need segment bits in [1, 34]");
    }
    rounds_per_epoch_ = std::uint64_t{128 / params_.bits} << params_.bits;
  }
}

bool ControllerSession::IsMember(const PartyId& peer) const {
  if (peer == self()) return true;
  auto i = table_.IndexOf(peer);
  return i && active_[*i];
}

std::size_t ControllerSession::member_count() const {
  return 1 + static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
}

const EpochPlan& ControllerSession::PlanFor(std::uint64_t epoch, OpCounters* counters) {
  if (!plan_ || plan_->epoch_id() != epoch) {
    plan_.emplace(table_, epoch, params_.bits, counters);
  }
  return *plan_;
}

std::vector<RingElement> ControllerSession::Nonce(std::uint64_t round,
                                                  OpCounters* counters) {
  if (last_emitted_ && round <= *last_emitted_) {
    throw Error(ErrorCode::kPastRound, "round " + std::to_string(round) + " already emitted");
  }
  const Modulus& m = params_.modulus;
  switch (params_.protocol) {
    case Protocol::kClique:
      return NonceClique(table_, active_, round, params_.width, m, counters);
    case Protocol::kDream:
      return NonceDream(table_, active_, round, threshold_, params_.width, m, counters);
    case Protocol::kZeph: {
      const EpochPlan& plan = PlanFor(round / rounds_per_epoch_, counters);
      return NonceZeph(plan, table_, active_, round % rounds_per_epoch_,
                       params_.width, m, counters);
    }
  }
  return {};
}

bool ControllerSession::EdgeActive(std::size_t peer, std::uint64_t round,
                                   OpCounters* counters) {
  switch (params_.protocol) {
    case Protocol::kClique:
      return true;
    case Protocol::kDream:
      if (counters) ++counters->prf_calls;
      return threshold_.Selects(table_.prf(peer).Eval(DreamSelectInput(round)));
    case Protocol::kZeph:
      return PlanFor(round / rounds_per_epoch_, counters)
          .Active(peer, round % rounds_per_epoch_);
  }
  return false;
}

std::vector<RingElement> ControllerSession::ApplyDelta(const MembershipDelta& delta,
                                                       std::vector<RingElement> nonce,
                                                       OpCounters* counters) {
  delta.Validate();
  if (last_emitted_ && delta.round <= *last_emitted_) {
    throw Error(ErrorCode::kPastRound,
                "delta for round " + std::to_string(delta.round) + " arrived after emission");
  }
  if (nonce.size() != params_.width) {
    throw Error(ErrorCode::kWidthMismatch, "nonce width differs from session width");
  }
  const Modulus& m = params_.modulus;
  Block128 input;
  switch (params_.protocol) {
    case Protocol::kClique: input = CliqueInput(delta.round); break;
    case Protocol::kDream: input = DreamMaskInput(delta.round); break;
    case Protocol::kZeph:
      input = ZephInput(delta.round / rounds_per_epoch_, delta.round % rounds_per_epoch_);
      break;
  }
  // Resolve every id before touching state so a bad delta changes nothing.
  auto resolve = [&](const std::vector<PartyId>& ids) {
    std::vector<std::size_t> idx;
    for (const auto& id : ids) {
      if (id == self()) continue;
      auto i = table_.IndexOf(id);
      if (!i) throw Error(ErrorCode::kUnknownIdentity, "no pairwise secret for " + id.Hex());
      idx.push_back(*i);
    }
    return idx;
  };
  const auto dropped = resolve(delta.dropped);
  const auto joined = resolve(delta.joined);

  std::vector<RingElement> edge(params_.width);
  auto toggle = [&](std::size_t i, bool join) {
    if (counters) ++counters->edge_checks;
    if (active_[i] == (join ? 1 : 0)) return;
    active_[i] = join ? 1 : 0;
    if (!EdgeActive(i, delta.round, counters)) return;
    std::fill(edge.begin(), edge.end(), 0);
    AddEdgeMask(table_, i, input, edge, m, counters);
    if (join) {
      AddInPlace(nonce, edge, m);
    } else {
      SubInPlace(nonce, edge, m);
    }
  };
  for (std::size_t i : dropped) toggle(i, false);
  for (std::size_t i : joined) toggle(i, true);
  return nonce;
}

void ControllerSession::MarkEmitted(std::uint64_t round) {
  if (last_emitted_ && round <= *last_emitted_) {
    throw Error(ErrorCode::kPastRound, "round " + std::to_string(round) + " already emitted");
  }
  last_emitted_ = round;
}

MaskedToken MaskToken(const TransformationToken& token,
                      std::span<const RingElement> nonce, std::uint64_t round,
                      std::uint64_t epoch, const PartyId& party, const Modulus& m) {
  if (nonce.size() != token.elements.size()) {
    throw Error(ErrorCode::kWidthMismatch, "nonce width differs from token width");
  }
  MaskedToken out{round, epoch, party, token};
  for (std::size_t s = 0; s < nonce.size(); ++s) {
    if (out.token.elements[s]) out.token.elements[s] = m.Add(*out.token.elements[s], nonce[s]);
  }
  return out;
}

TransformationToken UnmaskAggregate(std::span<const MaskedToken> masked,
                                    const Digest& stream_set_id, const Modulus& m) {
  if (masked.empty()) throw Error(ErrorCode::kInvalidArgument, "no masked tokens");
  const MaskedToken& first = masked.front();
  TransformationToken out;
  out.window_start = first.token.window_start;
  out.window_end = first.token.window_end;
  out.stream_set_id = stream_set_id;
  out.elements.assign(first.token.elements.size(), std::nullopt);
  for (std::size_t s = 0; s < out.elements.size(); ++s) {
    if (first.token.elements[s]) out.elements[s] = 0;
  }
  for (const auto& mt : masked) {
    const auto& t = mt.token;
    if (mt.round != first.round || t.window_start != out.window_start ||
        t.window_end != out.window_end) {
      throw Error(ErrorCode::kRangeMismatch, "masked tokens from different rounds");
    }
    if (t.elements.size() != out.elements.size()) {
      throw Error(ErrorCode::kWidthMismatch, "masked tokens differ in width");
    }
    for (std::size_t s = 0; s < t.elements.size(); ++s) {
      if (t.elements[s].has_value() != out.elements[s].has_value()) {
        throw Error(ErrorCode::kRangeMismatch, "masked tokens differ in release pattern");
      }
      if (t.elements[s]) out.elements[s] = m.Add(*out.elements[s], *t.elements[s]);
    }
    out.noised = out.noised || t.noised;
  }
  return out;
}

Bytes EncodeMaskedToken(const MaskedToken& masked) {
  ByteWriter w;
  w.U64(masked.round);
  w.U64(masked.epoch);
  w.Put(masked.party.id);
  w.Raw(token::EncodeToken(masked.token));
  return w.Take();
}

MaskedToken DecodeMaskedToken(std::span<const std::uint8_t> wire, std::size_t width) {
  ByteReader r(wire);
  MaskedToken out;
  out.round = r.U64();
  out.epoch = r.U64();
  out.party = {r.GetDigest()};
  out.token = token::DecodeToken(wire.subspan(wire.size() - r.remaining()), width);
  return out;
}

double LogDisconnectBound(std::uint64_t n, double p, double graphs) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two honest nodes");
  if (!(p > 0 && p <= 1) || !(graphs > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad edge probability or graph count");
  }
  if (p == 1) return -std::numeric_limits<double>::infinity();
  const double log_q = std::log1p(-p);
  const double log_n = std::log(static_cast<double>(n));
  std::vector<double> terms;
  terms.reserve(n / 2);
  for (std::uint64_t j = 1; j <= n / 2; ++j) {
    const double jd = static_cast<double>(j);
    terms.push_back(jd * (1.0 + log_n - std::log(jd) +
                          static_cast<double>(n - j) * log_q));
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0;
  for (double t : terms) acc += std::exp(t - top);
  return std::log(graphs) + top + std::log(acc);
}

double DisconnectBound(std::uint64_t n, double p, double graphs) {
  const double lb = LogDisconnectBound(n, p, graphs);
  return lb >= 0 ? 1.0 : std::exp(lb);
}

OptimizationResult OptimizeBits(std::uint64_t parties, double alpha, double delta,
                                unsigned prf_bits) {
  if (!(alpha >= 0 && alpha < 1) || !(delta > 0 && delta < 1) || prf_bits < 1 ||
      prf_bits > 128 || parties < 2) {
    throw Error(ErrorCode::kInvalidArgument, "optimizer inputs out of range");
  }
  OptimizationResult best;
  best.honest = static_cast<std::uint64_t>(
      std::ceil((1.0 - alpha) * static_cast<double>(parties) - 1e-9));
  if (best.honest < 2) return best;
  const double log_delta = std::log(delta);
  for (unsigned b = 1; b <= prf_bits; ++b) {
    const double p = std::ldexp(1.0, -static_cast<int>(b));
    const double w = static_cast<double>(prf_bits / b) * std::ldexp(1.0, static_cast<int>(b));
    const double lb = LogDisconnectBound(best.honest, p, w);
    if (lb > log_delta || w <= best.rounds) continue;
    best.feasible = true;
    best.bits = b;
    best.rounds = w;
    best.bound = std::exp(lb);
    best.expected_degree = static_cast<double>(parties - 1) * p;
  }
  return best;
}

}  // namespace privstream::secagg
