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

#ifndef PRIVSTREAM_PRF_H_
#define PRIVSTREAM_PRF_H_

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string_view>

namespace privstream::crypto {

using Key128 = std::array<std::uint8_t, 16>;

// A 128-bit PRF input or output. Byte i of the AES block is byte i of
// lo (little-endian) for i < 8 and byte i-8 of hi otherwise.
struct Block128 {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  bool operator==(const Block128&) const = default;

  // Bits [offset, offset + width) counted from the least significant bit of
  // lo; width <= 64.
  std::uint64_t Bits(unsigned offset, unsigned width) const;
};

// A keyed pseudorandom function {0,1}^128 -> {0,1}^128. Implementations are
// safe to call concurrently.
class Prf {
 public:
  virtual ~Prf() = default;

  virtual Block128 Eval(const Block128& in) const = 0;

  // out.size() must equal in.size().
  virtual void EvalMany(std::span<const Block128> in,
                        std::span<Block128> out) const;
};

enum class PrfKind {
  kAes128,       // AES-128 as a PRP, via OpenSSL.
  kFastStub,     // keyed 64-bit mixer; fast, NOT cryptographic
  kCounterStub,  // PRF(lo, hi) = 1000 * lo + hi; test arithmetic only
  kZeroStub,     // always zero
};

// Accepts aes/aes128, fast/stub/fast-stub, counter/counter-stub and
// zero/zero-stub. Throws Error(kInvalidArgument) otherwise.
PrfKind ParsePrfKind(std::string_view name);
std::string_view PrfKindName(PrfKind kind);

std::unique_ptr<Prf> MakePrf(PrfKind kind, const Key128& key);

class AesPrf final : public Prf {
 public:
  explicit AesPrf(const Key128& key);
  ~AesPrf() override;
  AesPrf(const AesPrf&) = delete;
  AesPrf& operator=(const AesPrf&) = delete;

  Block128 Eval(const Block128& in) const override;
  void EvalMany(std::span<const Block128> in,
                std::span<Block128> out) const override;

 private:
  struct Ctx;
  std::unique_ptr<Ctx> ctx_;
  mutable std::mutex mu_;
};

class FastStubPrf final : public Prf {
 public:
  explicit FastStubPrf(const Key128& key);
  Block128 Eval(const Block128& in) const override;

 private:
  std::uint64_t k0_;
  std::uint64_t k1_;
};

class CounterStubPrf final : public Prf {
 public:
  Block128 Eval(const Block128& in) const override {
    return {1000 * in.lo + in.hi, 0};
  }
};

class ZeroStubPrf final : public Prf {
 public:
  Block128 Eval(const Block128&) const override { return {}; }
};

}  // namespace privstream::crypto

#endif  // PRIVSTREAM_PRF_H_
