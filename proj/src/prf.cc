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

#include "privstream/prf.h"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

#include "privstream/errors.h"
#include <string>
#include <vector>

namespace privstream::crypto {

std::uint64_t Block128::Bits(unsigned offset, unsigned width) const {
  if (width == 0) return 0;
  unsigned __int128 v = (static_cast<unsigned __int128>(hi) << 64) | lo;
  v >>= offset;
  if (width >= 64) return static_cast<std::uint64_t>(v);
  return static_cast<std::uint64_t>(v) & ((std::uint64_t{1} << width) - 1);
}

void Prf::EvalMany(std::span<const Block128> in,
                   std::span<Block128> out) const {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = Eval(in[i]);
}

PrfKind ParsePrfKind(std::string_view name) {
  if (name == "aes" || name == "aes128") return PrfKind::kAes128;
  if (name == "stub" || name == "fast" || name == "fast-stub") return PrfKind::kFastStub;
  if (name == "counter" || name == "counter-stub") return PrfKind::kCounterStub;
  if (name == "zero" || name == "zero-stub") return PrfKind::kZeroStub;
  throw Error(ErrorCode::kInvalidArgument, "unknown PRF kind: " + std::string(name));
}

std::string_view PrfKindName(PrfKind kind) {
  switch (kind) {
    case PrfKind::kAes128:
      return "aes";
    case PrfKind::kFastStub:
      return "stub";
    case PrfKind::kCounterStub:
      return "counter";
    case PrfKind::kZeroStub:
      return "zero";
  }
  return "?";
}

std::unique_ptr<Prf> MakePrf(PrfKind kind, const Key128& key) {
  switch (kind) {
    case PrfKind::kAes128:
      return std::make_unique<AesPrf>(key);
    case PrfKind::kFastStub:
      return std::make_unique<FastStubPrf>(key);
    case PrfKind::kCounterStub:
      return std::make_unique<CounterStubPrf>();
    case PrfKind::kZeroStub:
      return std::make_unique<ZeroStubPrf>();
  }
  throw std::invalid_argument("bad PRF kind");
}

struct AesPrf::Ctx {
  EVP_CIPHER_CTX* ctx = nullptr;
  ~Ctx() { EVP_CIPHER_CTX_free(ctx); }
};

AesPrf::AesPrf(const Key128& key) : ctx_(std::make_unique<Ctx>()) {
  ctx_->ctx = EVP_CIPHER_CTX_new();
  if (ctx_->ctx == nullptr ||
      EVP_EncryptInit_ex(ctx_->ctx, EVP_aes_128_ecb(), nullptr, key.data(),
                         nullptr) != 1) {
    throw std::runtime_error("AES-128 key setup failed");
  }
  EVP_CIPHER_CTX_set_padding(ctx_->ctx, 0);
}

AesPrf::~AesPrf() = default;

namespace {

void ToBytes(const Block128& b, std::uint8_t* out) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(b.lo >> (8 * i));
  for (int i = 0; i < 8; ++i) out[8 + i] = static_cast<std::uint8_t>(b.hi >> (8 * i));
}

Block128 FromBytes(const std::uint8_t* in) {
  Block128 b;
  for (int i = 7; i >= 0; --i) b.lo = b.lo << 8 | in[i];
  for (int i = 7; i >= 0; --i) b.hi = b.hi << 8 | in[8 + i];
  return b;
}

}  // namespace

Block128 AesPrf::Eval(const Block128& in) const {
  Block128 out;
  EvalMany(std::span(&in, 1), std::span(&out, 1));
  return out;
}

void AesPrf::EvalMany(std::span<const Block128> in,
                      std::span<Block128> out) const {
  if (in.size() != out.size()) throw std::invalid_argument("size mismatch");
  if (in.empty()) return;
  std::vector<std::uint8_t> buf(in.size() * 16);
  for (std::size_t i = 0; i < in.size(); ++i) ToBytes(in[i], &buf[16 * i]);
  int len = 0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (EVP_EncryptUpdate(ctx_->ctx, buf.data(), &len, buf.data(),
                          static_cast<int>(buf.size())) != 1 ||
        static_cast<std::size_t>(len) != buf.size()) {
      throw std::runtime_error("AES-128 encryption failed");
    }
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = FromBytes(&buf[16 * i]);
}

namespace {

std::uint64_t Mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

FastStubPrf::FastStubPrf(const Key128& key) {
  std::memcpy(&k0_, key.data(), 8);
  std::memcpy(&k1_, key.data() + 8, 8);
}

Block128 FastStubPrf::Eval(const Block128& in) const {
  std::uint64_t a = Mix64(in.lo ^ k0_);
  std::uint64_t b = Mix64((in.hi + 0x9e3779b97f4a7c15ULL) ^ k1_);
  std::uint64_t lo = Mix64(a ^ (b + 0x632be59bd9b4e019ULL));
  std::uint64_t hi = Mix64(lo ^ b ^ k0_);
  return {lo, hi};
}

}  // namespace privstream::crypto
