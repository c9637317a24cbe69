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

#ifndef PRIVSTREAM_TOKEN_TYPES_H_
#define PRIVSTREAM_TOKEN_TYPES_H_

#include <optional>
#include <string>
#include <vector>

#include "privstream/bytes.h"
#include "privstream/ring.h"

namespace privstream {

// Key material that unlocks one transformation output: adding it to the
// matching server-side aggregate yields the plaintext result.
struct TransformationToken {
  // Chain origin and end of the window the token decrypts.
  crypto::Timestamp window_start;
  crypto::Timestamp window_end;
  // SHA-256 over the sorted member stream ids (see StreamSetId).
  Digest stream_set_id;
  // Sorted member stream ids. Kept locally to combine partials; only the
  // digest goes on the wire.
  std::vector<std::string> members;
  // One slot per output element; nullopt means withheld.
  std::vector<std::optional<crypto::RingElement>> elements;
  bool noised = false;

  std::size_t ReleasedCount() const;
  // Throws Error(kInvalidArgument) if window_start >= window_end or no
  // element is released.
  void Validate() const;

  bool operator==(const TransformationToken&) const = default;
};

// Canonical id of a set of streams: SHA-256 over the sorted, length-prefixed
// ids. Duplicates are rejected.
Digest StreamSetId(std::vector<std::string> stream_ids);

}  // namespace privstream

#endif  // PRIVSTREAM_TOKEN_TYPES_H_
