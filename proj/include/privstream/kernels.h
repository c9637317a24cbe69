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

#ifndef PRIVSTREAM_KERNELS_H_
#define PRIVSTREAM_KERNELS_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "privstream/ring_crypto.h"
#include "privstream/secure_agg.h"

// Bulk loops with an OpenMP implementation and a serial reference. Both
// modes return identical results: every work item owns its state and its
// random stream, and reductions are integer sums.
namespace privstream::kernels {

enum class Mode { kSerial, kParallel };

// Calls fn(i) for every i in [0, n). The first exception thrown by any
// call is rethrown after the loop.
void ForEach(std::size_t n, Mode mode, const std::function<void(std::size_t)>& fn);

// Round nonce of every session. counters, when given, is resized to one
// entry per session.
std::vector<std::vector<crypto::RingElement>> RoundNonces(
    std::span<secagg::ControllerSession> sessions, std::uint64_t round,
    Mode mode, std::vector<secagg::OpCounters>* counters = nullptr);

// Number of disconnected graphs among `samples` draws of G(n, p). Sample i
// uses its own generator seeded from (seed, i).
std::uint64_t CountDisconnected(std::uint64_t n, double p, std::uint64_t samples,
                                std::uint64_t seed, Mode mode);

// Connectivity of one G(n, p) draw, via union-find. Exposed for tests.
bool SampleConnected(std::uint64_t n, double p, std::uint64_t seed,
                     std::uint64_t index);

// One ciphertext per stream: plaintexts[i] under ciphers[i] for (t_prev, t_curr].
std::vector<crypto::StreamCiphertext> EncryptAll(
    std::span<const crypto::StreamCipher> ciphers, crypto::Timestamp t_prev,
    crypto::Timestamp t_curr,
    std::span<const std::vector<crypto::RingElement>> plaintexts, Mode mode);

}  // namespace privstream::kernels

#endif  // PRIVSTREAM_KERNELS_H_
