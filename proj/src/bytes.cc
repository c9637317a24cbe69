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

#include "privstream/bytes.h"

#include <openssl/evp.h>

namespace privstream {

Digest Sha256(std::span<const std::uint8_t> data) {
  Digest d;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != d.bytes.size()) {
    throw std::runtime_error("SHA-256 failed");
  }
  return d;
}

Digest Sha256(std::string_view data) {
  return Sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::string ToHex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

namespace {

int Nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw DecodeError(std::string("invalid hex digit '") + c + "'");
}

}  // namespace

Bytes FromHex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DecodeError("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(Nibble(hex[2 * i]) << 4 |
                                       Nibble(hex[2 * i + 1]));
  }
  return out;
}

std::string Digest::Hex() const { return ToHex(bytes); }

Digest Digest::FromHex(std::string_view hex) {
  Bytes raw = privstream::FromHex(hex);
  if (raw.size() != 32) throw DecodeError("digest must be 32 bytes");
  Digest d;
  std::copy(raw.begin(), raw.end(), d.bytes.begin());
  return d;
}

void ByteWriter::U16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::U32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::U64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::Raw(std::span<const std::uint8_t> data) {
  out_.insert(out_.end(), data.begin(), data.end());
}

std::span<const std::uint8_t> ByteReader::Need(std::size_t n) {
  if (remaining() < n) throw DecodeError("truncated message");
  auto s = in_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint16_t ByteReader::U16() {
  auto s = Need(2);
  return static_cast<std::uint16_t>(s[0] | s[1] << 8);
}

std::uint32_t ByteReader::U32() {
  auto s = Need(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = v << 8 | s[i];
  return v;
}

std::uint64_t ByteReader::U64() {
  auto s = Need(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | s[i];
  return v;
}

Digest ByteReader::GetDigest() {
  auto s = Need(32);
  Digest d;
  std::copy(s.begin(), s.end(), d.bytes.begin());
  return d;
}

}  // namespace privstream
