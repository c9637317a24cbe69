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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "privstream/errors.h"
#include "privstream/ring_crypto.h"
#include "privstream/rng.h"

namespace privstream::token {
namespace {

using crypto::StreamCiphertext;
using D = ElementDirective;

struct Stream {
  std::string id;
  crypto::StreamCipher cipher;
  StreamCiphertext total;
  std::vector<RingElement> plain;
};

// Events at 1..9 inside the window (0, 10], each message random.
Stream MakeStream(const std::string& id, std::size_t width, std::uint64_t seed) {
  Modulus m;
  Stream s{id, crypto::MakeStreamCipher(crypto::MasterSecret::FromSeed(id, seed)), {}, {}};
  SplitMix64 rng({seed});
  s.plain.assign(width, 0);
  std::vector<StreamCiphertext> chain;
  for (std::uint64_t t = 0; t < 10; ++t) {
    std::vector<RingElement> msg(width);
    for (auto& v : msg) v = rng() % 1000;
    crypto::AddInPlace(s.plain, msg, m);
    chain.push_back(s.cipher.Encrypt(Timestamp{t}, Timestamp{t + 1}, msg));
  }
  s.total = crypto::SumChain(chain, m);
  return s;
}

TEST(LayoutTest, MergeGroupsTakeFirstMemberSlot) {
  std::vector<D> d{D::Release(), D::Merge(1), D::Withhold(), D::Merge(1), D::Merge(2)};
  OutputLayout layout = MakeLayout(d);
  ASSERT_EQ(layout.Width(), 4u);
  EXPECT_EQ(layout.sources[1], (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(layout.released, (std::vector<bool>{true, true, false, true}));
  std::vector<RingElement> body{1, 2, 3, 4, 5};
  EXPECT_EQ(Project(body, layout, Modulus()), (std::vector<RingElement>{1, 6, 3, 5}));
}

TEST(SingleStreamTokenTest, DecryptsWindowWithDirectives) {
  Modulus m;
  Stream s = MakeStream("s", 5, 1);
  std::vector<D> d{D::Release(), D::Withhold(), D::Merge(0), D::Merge(0), D::Shift(7)};
  auto tok = SingleStreamToken(s.cipher, s.id, Timestamp{0}, Timestamp{10}, d);
  auto layout = MakeLayout(d);
  auto out = crypto::ApplyToken(Project(s.total, layout, m), StreamSetId({s.id}), tok, m);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(*out[0], s.plain[0]);
  EXPECT_FALSE(out[1].has_value());
  EXPECT_EQ(*out[2], s.plain[2] + s.plain[3]);
  EXPECT_EQ(*out[3], s.plain[4] + 7);
}

TEST(SingleStreamTokenTest, SubWindowOfLongerChain) {
  Modulus m;
  Stream s = MakeStream("s", 2, 2);
  auto c = s.cipher;
  // A second window (10, 20] continues the chain.
  std::vector<StreamCiphertext> chain;
  std::vector<RingElement> plain(2, 0);
  for (std::uint64_t t = 10; t < 20; ++t) {
    std::vector<RingElement> msg{t, 2 * t};
    crypto::AddInPlace(plain, msg, m);
    chain.push_back(c.Encrypt(Timestamp{t}, Timestamp{t + 1}, msg));
  }
  auto total = crypto::SumChain(chain, m);
  std::vector<D> d(2, D::Release());
  auto tok = SingleStreamToken(c, "s", Timestamp{10}, Timestamp{20}, d);
  auto out = crypto::ApplyToken(total, StreamSetId({"s"}), tok, m);
  EXPECT_EQ(*out[0], plain[0]);
  EXPECT_EQ(*out[1], plain[1]);
}

TEST(MultiStreamPartialTest, CrossStreamAggregateDecrypts) {
  Modulus m;
  std::vector<Stream> streams;
  for (int i = 0; i < 5; ++i) streams.push_back(MakeStream("s" + std::to_string(i), 3, 10 + i));
  std::vector<D> d(3, D::Release());
  std::vector<TransformationToken> tokens;
  StreamCiphertext agg = streams[0].total;
  std::vector<RingElement> expected = streams[0].plain;
  std::vector<std::string> ids{streams[0].id};
  tokens.push_back(SingleStreamToken(streams[0].cipher, streams[0].id, Timestamp{0},
                                     Timestamp{10}, d));
  for (std::size_t i = 1; i < streams.size(); ++i) {
    agg = crypto::AddCiphertexts(agg, streams[i].total, crypto::SumMode::kCrossStream, m);
    crypto::AddInPlace(expected, streams[i].plain, m);
    ids.push_back(streams[i].id);
    tokens.push_back(SingleStreamToken(streams[i].cipher, streams[i].id, Timestamp{0},
                                       Timestamp{10}, d));
  }
  auto combined = MultiStreamPartial(tokens, m);
  EXPECT_EQ(combined.stream_set_id, StreamSetId(ids));
  auto out = crypto::ApplyToken(agg, StreamSetId(ids), combined, m);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(*out[j], expected[j]);
}

TEST(MultiStreamPartialTest, RejectsOverlapAndMismatch) {
  Stream a = MakeStream("a", 1, 1);
  std::vector<D> d{D::Release()};
  auto ta = SingleStreamToken(a.cipher, "a", Timestamp{0}, Timestamp{10}, d);
  std::vector<TransformationToken> twice{ta, ta};
  EXPECT_THROW(MultiStreamPartial(twice, Modulus()), Error);
  auto tb = SingleStreamToken(a.cipher, "b", Timestamp{0}, Timestamp{9}, d);
  std::vector<TransformationToken> skew{ta, tb};
  EXPECT_THROW(MultiStreamPartial(skew, Modulus()), Error);
}

TEST(DpNoiseTest, PerPartySigmaScalesWithHonestParties) {
  NoiseSpec spec{10, 0.5, 100};
  EXPECT_DOUBLE_EQ(spec.PerPartySigma(), 10 / std::sqrt(50.0));
}

// Only honest parties' noise counts toward the target: 50 of 100 parties
// each draw N(0, 10 / sqrt(50)), and their sum should have std-dev 10.
TEST(DpNoiseTest, HonestSumHitsTargetSigma) {
  Modulus m;
  NoiseSpec spec{10, 0.5, 100, 1000};
  const double per_party = spec.PerPartySigma();
  const int trials = 10000;
  double sum_sq = 0, sum = 0;
  for (int t = 0; t < trials; ++t) {
    std::int64_t total = 0;
    for (std::uint64_t p = 0; p < 50; ++p) {
      total += m.ToSigned(SampleFixedPointGaussian(per_party, spec.scale, p, t, m));
    }
    const double x = static_cast<double>(total) / spec.scale;
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / trials;
  const double sd = std::sqrt(sum_sq / trials - mean * mean);
  EXPECT_NEAR(sd, 10, 0.5);
  EXPECT_NEAR(mean, 0, 4 * 10 / std::sqrt(trials));
}

TEST(DpNoiseTest, BudgetExhaustionSuppresses) {
  TransformationToken tok;
  tok.window_start = Timestamp{0};
  tok.window_end = Timestamp{1};
  tok.elements = {0, std::nullopt};
  PrivacyBudget budget(1.0);
  NoiseSpec spec{1, 1, 1};
  int released = 0;
  for (int i = 0; i < 15; ++i) {
    auto r = AddDpNoise(tok, spec, budget, 0.1, i);
    if (std::holds_alternative<TransformationToken>(r)) {
      ++released;
      EXPECT_FALSE(std::get<TransformationToken>(r).elements[1].has_value());
    } else {
      EXPECT_EQ(std::get<Suppressed>(r), Suppressed{});
    }
  }
  EXPECT_EQ(released, 10);
  EXPECT_NEAR(budget.remaining(), 0, 1e-9);
  EXPECT_FALSE(budget.CanAfford(1e-6));
}

TEST(DpNoiseTest, SlotScalesApplyPerSlot) {
  TransformationToken tok;
  tok.window_start = Timestamp{0};
  tok.window_end = Timestamp{1};
  tok.elements = {0, 0};
  PrivacyBudget budget(std::numeric_limits<double>::infinity());
  NoiseSpec spec{5, 1, 1};
  std::vector<double> scales{1, 1000};
  auto r = std::get<TransformationToken>(AddDpNoise(tok, spec, budget, 1, 3, Modulus(), scales));
  Modulus m;
  EXPECT_EQ(r.elements[0], SampleFixedPointGaussian(5, 1, 3, 0, m));
  EXPECT_EQ(r.elements[1], SampleFixedPointGaussian(5, 1000, 3, 1, m));
  EXPECT_TRUE(r.noised);
  EXPECT_THROW(AddDpNoise(r, spec, budget, 1, 3), Error);
}

TEST(PrivacyBudgetTest, ChargesAreAtomicAndBounded) {
  PrivacyBudget b(0.3);
  EXPECT_TRUE(b.TryCharge(0.1));
  EXPECT_TRUE(b.TryCharge(0.2));  // 0.1 + 0.2 within slack
  EXPECT_FALSE(b.TryCharge(0.01));
  EXPECT_THROW(PrivacyBudget(-1), Error);
  EXPECT_THROW(PrivacyBudget(1, 2), Error);
}

TEST(TokenLedgerTest, OneTokenPerStreamWindow) {
  TokenLedger ledger;
  Digest plan_a = Sha256(std::string_view("a"));
  Digest plan_b = Sha256(std::string_view("b"));
  int made = 0;
  auto make = [&] {
    ++made;
    TransformationToken t;
    t.elements = {static_cast<RingElement>(made)};
    return t;
  };
  auto first = ledger.Issue("s", "x", Timestamp{0}, Timestamp{10}, plan_a, make);
  auto again = ledger.Issue("s", "x", Timestamp{0}, Timestamp{10}, plan_a, make);
  auto other = ledger.Issue("s", "x", Timestamp{0}, Timestamp{10}, plan_b, make);
  auto next = ledger.Issue("s", "x", Timestamp{10}, Timestamp{20}, plan_b, make);
  ASSERT_TRUE(first && again && next);
  EXPECT_EQ(*first, *again);
  EXPECT_FALSE(other.has_value());
  EXPECT_EQ(made, 2);
  EXPECT_EQ(ledger.size(), 2u);
}

TEST(TokenWireTest, RoundTripAndSize) {
  Stream s = MakeStream("s", 4, 5);
  std::vector<D> d{D::Release(), D::Withhold(), D::Release(), D::Release()};
  auto tok = SingleStreamToken(s.cipher, "s", Timestamp{0}, Timestamp{10}, d);
  Bytes wire = EncodeToken(tok);
  EXPECT_EQ(wire.size(), TokenWireSize(3));
  auto back = DecodeToken(wire, 4);
  EXPECT_EQ(back.elements, tok.elements);
  EXPECT_EQ(back.stream_set_id, tok.stream_set_id);
  EXPECT_EQ(back.window_end, tok.window_end);

  Bytes ragged = wire;
  ragged.pop_back();
  EXPECT_THROW(DecodeToken(ragged, 4), DecodeError);
  EXPECT_THROW(DecodeToken(wire, 2), DecodeError);
}

}  // namespace
}  // namespace privstream::token
