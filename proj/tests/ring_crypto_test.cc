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

#include <gtest/gtest.h>

#include <memory>
#include <vector>

#include "privstream/errors.h"
#include "privstream/prf.h"
#include "privstream/rng.h"

namespace privstream::crypto {
namespace {

StreamCipher CounterCipher(unsigned bits = 64) {
  return StreamCipher(std::make_shared<CounterStubPrf>(), Modulus(bits));
}

TEST(ModulusTest, WrapsAtPowerOfTwo) {
  Modulus m(8);
  EXPECT_EQ(m.Add(250, 10), 4u);
  EXPECT_EQ(m.Sub(3, 5), 254u);
  EXPECT_EQ(m.Neg(1), 255u);
  EXPECT_EQ(m.ToSigned(255), -1);
  EXPECT_EQ(m.ToSigned(127), 127);
  EXPECT_EQ(m.ToSigned(128), -128);
  EXPECT_EQ(m.FromSigned(-2), 254u);
}

TEST(ModulusTest, SixtyFourBitUsesNativeWrap) {
  Modulus m;
  EXPECT_EQ(m.bits(), 64u);
  EXPECT_EQ(m.Add(~std::uint64_t{0}, 2), 1u);
  EXPECT_EQ(m.ToSigned(~std::uint64_t{0}), -1);
}

TEST(ModulusTest, RejectsBadWidths) {
  EXPECT_THROW(Modulus(0), Error);
  EXPECT_THROW(Modulus(65), Error);
}

TEST(PrfTest, AesMatchesFips197Vector) {
  Key128 key;
  for (int i = 0; i < 16; ++i) key[i] = static_cast<std::uint8_t>(i);
  AesPrf prf(key);
  // Plaintext 00112233445566778899aabbccddeeff, little-endian halves.
  Block128 in{0x7766554433221100ULL, 0xffeeddccbbaa9988ULL};
  Block128 out = prf.Eval(in);
  // Ciphertext 69c4e0d86a7b0430d8cdb78070b4c55a.
  EXPECT_EQ(out.lo, 0x30047b6ad8e0c469ULL);
  EXPECT_EQ(out.hi, 0x5ac5b47080b7cdd8ULL);
}

TEST(PrfTest, EvalManyMatchesEval) {
  Key128 key{};
  key[3] = 7;
  for (PrfKind kind : {PrfKind::kAes128, PrfKind::kFastStub}) {
    auto prf = MakePrf(kind, key);
    std::vector<Block128> in(37), out(37);
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = {i * 11, i};
    prf->EvalMany(in, out);
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i], prf->Eval(in[i]));
  }
}

TEST(PrfTest, ParsesNames) {
  EXPECT_EQ(ParsePrfKind("aes"), PrfKind::kAes128);
  EXPECT_EQ(ParsePrfKind("fast-stub"), PrfKind::kFastStub);
  EXPECT_EQ(ParsePrfKind("counter"), PrfKind::kCounterStub);
  EXPECT_THROW(ParsePrfKind("rot13"), Error);
}

TEST(BlockTest, BitsSpansBothHalves) {
  Block128 b{0xF000000000000000ULL, 0x5ULL};
  EXPECT_EQ(b.Bits(60, 4), 0xFu);
  EXPECT_EQ(b.Bits(62, 4), 0x7u);  // two bits of lo, two of hi
  EXPECT_EQ(b.Bits(64, 3), 0x5u);
}

TEST(StreamCipherTest, CounterPrfKeyArithmetic) {
  StreamCipher c = CounterCipher();
  KeyVector k = c.DeriveKey(Timestamp{7}, 3);
  EXPECT_EQ(k.elements, (std::vector<RingElement>{7000, 7001, 7002}));

  // body = m + k(t_curr) - k(t_prev)
  StreamCiphertext ct = c.Encrypt(Timestamp{5}, Timestamp{7}, std::vector<RingElement>{10, 20});
  EXPECT_EQ(ct.t_prev.t, 5u);
  EXPECT_EQ(ct.t_curr.t, 7u);
  EXPECT_EQ(ct.body, (std::vector<RingElement>{2010, 2020}));
}

TEST(StreamCipherTest, CounterPrfRespectsModulus) {
  StreamCipher c = CounterCipher(10);
  // k(1)[0] = 1000, k(2)[0] = 2000 mod 1024 = 976: body = 3 + 976 - 1000.
  StreamCiphertext ct = c.Encrypt(Timestamp{1}, Timestamp{2}, std::vector<RingElement>{3});
  EXPECT_EQ(ct.body[0], Modulus(10).Sub(979, 1000));
}

TEST(StreamCipherTest, RejectsNonIncreasingTimestamps) {
  StreamCipher c = CounterCipher();
  std::vector<RingElement> msg{1};
  EXPECT_THROW(c.Encrypt(Timestamp{5}, Timestamp{5}, msg), Error);
  EXPECT_THROW(c.Encrypt(Timestamp{6}, Timestamp{5}, msg), Error);
}

TEST(StreamCipherTest, EncryptWithKeysMatchesEncrypt) {
  StreamCipher c = MakeStreamCipher(MasterSecret::FromSeed("s", 3));
  std::vector<RingElement> msg{4, 5, 6};
  auto a = c.Encrypt(Timestamp{10}, Timestamp{20}, msg);
  auto b = c.EncryptWithKeys(c.DeriveKey(Timestamp{10}, 3), c.DeriveKey(Timestamp{20}, 3), msg);
  EXPECT_EQ(a, b);
}

TEST(StreamCipherTest, FromSeedIsDeterministicPerStream) {
  auto a = MasterSecret::FromSeed("stream-a", 1);
  EXPECT_EQ(a.key, MasterSecret::FromSeed("stream-a", 1).key);
  EXPECT_NE(a.key, MasterSecret::FromSeed("stream-b", 1).key);
  EXPECT_NE(a.key, MasterSecret::FromSeed("stream-a", 2).key);
  EXPECT_NE(MasterSecret::Generate("x").key, MasterSecret::Generate("x").key);
}

TEST(ChainTest, WindowSumTelescopesToPlaintextSum) {
  for (PrfKind kind : {PrfKind::kAes128, PrfKind::kFastStub, PrfKind::kCounterStub}) {
    Modulus m(32);
    StreamCipher c = MakeStreamCipher(MasterSecret::FromSeed("s", 9), kind, m);
    SplitMix64 rng({42});
    std::vector<StreamCiphertext> chain;
    std::vector<RingElement> expected(4, 0);
    std::uint64_t t = 100;
    for (int e = 0; e < 25; ++e) {
      std::vector<RingElement> msg(4);
      for (auto& v : msg) v = m.Reduce(rng());
      AddInPlace(expected, msg, m);
      const std::uint64_t next = t + 1 + rng() % 9;
      chain.push_back(c.Encrypt(Timestamp{t}, Timestamp{next}, msg));
      t = next;
    }
    StreamCiphertext total = SumChain(chain, m);
    EXPECT_EQ(total.t_prev.t, 100u);
    EXPECT_EQ(total.t_curr.t, t);
    EXPECT_EQ(c.DecryptWindow(Timestamp{100}, Timestamp{t}, total), expected);
  }
}

TEST(ChainTest, SumChainRejectsGaps) {
  StreamCipher c = CounterCipher();
  std::vector<RingElement> msg{1};
  std::vector<StreamCiphertext> chain{c.Encrypt(Timestamp{0}, Timestamp{1}, msg),
                                      c.Encrypt(Timestamp{2}, Timestamp{3}, msg)};
  try {
    SumChain(chain, Modulus());
    FAIL() << "gap accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChainGap);
  }
}

TEST(ChainTest, CrossStreamSumNeedsSameWindow) {
  StreamCipher a = CounterCipher();
  std::vector<RingElement> msg{1};
  auto x = a.Encrypt(Timestamp{0}, Timestamp{5}, msg);
  auto y = a.Encrypt(Timestamp{0}, Timestamp{5}, msg);
  auto z = a.Encrypt(Timestamp{1}, Timestamp{5}, msg);
  // Each body is 1 + k(5) - k(0) = 5001.
  EXPECT_EQ(AddCiphertexts(x, y, SumMode::kCrossStream, Modulus()).body[0], 10002u);
  EXPECT_THROW(AddCiphertexts(x, z, SumMode::kCrossStream, Modulus()), Error);
}

TEST(ChainTest, WidthMismatchIsRejected) {
  StreamCipher c = CounterCipher();
  auto x = c.Encrypt(Timestamp{0}, Timestamp{1}, std::vector<RingElement>{1});
  auto y = c.Encrypt(Timestamp{1}, Timestamp{2}, std::vector<RingElement>{1, 2});
  try {
    AddCiphertexts(x, y, SumMode::kChain, Modulus());
    FAIL() << "width mismatch accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWidthMismatch);
  }
}

TEST(ApplyTokenTest, RefusesForeignWindowOrStreamSet) {
  StreamCipher c = CounterCipher();
  auto ct = c.Encrypt(Timestamp{0}, Timestamp{4}, std::vector<RingElement>{9});
  TransformationToken tok;
  tok.window_start = Timestamp{0};
  tok.window_end = Timestamp{4};
  tok.members = {"s"};
  tok.stream_set_id = StreamSetId({"s"});
  // -k(4) + k(0) = -4000
  tok.elements = {Modulus().FromSigned(-4000)};
  auto out = ApplyToken(ct, StreamSetId({"s"}), tok, Modulus());
  ASSERT_TRUE(out[0].has_value());
  EXPECT_EQ(*out[0], 9u);

  EXPECT_THROW(ApplyToken(ct, StreamSetId({"t"}), tok, Modulus()), Error);
  tok.window_end = Timestamp{5};
  EXPECT_THROW(ApplyToken(ct, StreamSetId({"s"}), tok, Modulus()), Error);
}

TEST(StreamSetIdTest, OrderIndependentAndRejectsDuplicates) {
  EXPECT_EQ(StreamSetId({"a", "b"}), StreamSetId({"b", "a"}));
  EXPECT_NE(StreamSetId({"a"}), StreamSetId({"a", "b"}));
  EXPECT_THROW(StreamSetId({"a", "a"}), Error);
}

}  // namespace
}  // namespace privstream::crypto
