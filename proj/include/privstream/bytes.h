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

#ifndef PRIVSTREAM_BYTES_H_
#define PRIVSTREAM_BYTES_H_

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace privstream {

using Bytes = std::vector<std::uint8_t>;

// 32-byte SHA-256 output, used for identities, stream-set ids and plan ids.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  // Lexicographic byte order equals numeric order of the big-endian value.
  auto operator<=>(const Digest&) const = default;
  bool operator==(const Digest&) const = default;

  std::string Hex() const;
  static Digest FromHex(std::string_view hex);
};

Digest Sha256(std::span<const std::uint8_t> data);
Digest Sha256(std::string_view data);

std::string ToHex(std::span<const std::uint8_t> data);
Bytes FromHex(std::string_view hex);

// Thrown when a wire message cannot be decoded.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian serializer for the wire formats.
class ByteWriter {
 public:
  void U16(std::uint16_t v);
  void U32(std::uint32_t v);
  void U64(std::uint64_t v);
  void Raw(std::span<const std::uint8_t> data);
  void Put(const Digest& d) { Raw(d.bytes); }

  const Bytes& bytes() const { return out_; }
  Bytes Take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint16_t U16();
  std::uint32_t U32();
  std::uint64_t U64();
  Digest GetDigest();

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> Need(std::size_t n);

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace privstream

#endif  // PRIVSTREAM_BYTES_H_
