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

#include "privstream/kernels.h"

#include <exception>
#include <numeric>

#include "privstream/errors.h"
#include "privstream/rng.h"

namespace privstream::kernels {
namespace {

std::uint32_t Find(std::vector<std::uint32_t>& parent, std::uint32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

bool Parallel(Mode mode) { return mode == Mode::kParallel; }

// Exceptions must not escape an OpenMP region; keep the first and rethrow
// after the loop.
class FirstError {
 public:
  template <typename F>
  void Run(F&& f) {
    try {
      f();
    } catch (...) {
#pragma omp critical(privstream_first_error)
      if (!error_) error_ = std::current_exception();
    }
  }
  void Rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

}  // namespace

void ForEach(std::size_t n, Mode mode, const std::function<void(std::size_t)>& fn) {
  const auto count = static_cast<std::int64_t>(n);
  FirstError errors;
#pragma omp parallel for schedule(dynamic) if (Parallel(mode))
  for (std::int64_t i = 0; i < count; ++i) {
    errors.Run([&] { fn(static_cast<std::size_t>(i)); });
  }
  errors.Rethrow();
}

std::vector<std::vector<crypto::RingElement>> RoundNonces(
    std::span<secagg::ControllerSession> sessions, std::uint64_t round,
    Mode mode, std::vector<secagg::OpCounters>* counters) {
  const auto n = static_cast<std::int64_t>(sessions.size());
  std::vector<std::vector<crypto::RingElement>> out(sessions.size());
  if (counters) counters->assign(sessions.size(), {});
  FirstError errors;
#pragma omp parallel for schedule(dynamic) if (Parallel(mode))
  for (std::int64_t i = 0; i < n; ++i) {
    errors.Run([&] {
      out[i] = sessions[i].Nonce(round, counters ? &(*counters)[i] : nullptr);
    });
  }
  errors.Rethrow();
  return out;
}

bool SampleConnected(std::uint64_t n, double p, std::uint64_t seed,
                     std::uint64_t index) {
  if (n <= 1) return true;
  SplitMix64 rng({seed, index});
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  std::uint64_t components = n;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      if (rng.Uniform() >= p) continue;
      std::uint32_t a = Find(parent, u), b = Find(parent, v);
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
  }
  return components == 1;
}

std::uint64_t CountDisconnected(std::uint64_t n, double p, std::uint64_t samples,
                                std::uint64_t seed, Mode mode) {
  if (n > (std::uint64_t{1} << 31)) {
    throw Error(ErrorCode::kInvalidArgument, "graph too large to sample");
  }
  const auto count = static_cast<std::int64_t>(samples);
  std::uint64_t disconnected = 0;
#pragma omp parallel for schedule(static) reduction(+ : disconnected) if (Parallel(mode))
  for (std::int64_t i = 0; i < count; ++i) {
    if (!SampleConnected(n, p, seed, static_cast<std::uint64_t>(i))) ++disconnected;
  }
  return disconnected;
}

std::vector<crypto::StreamCiphertext> EncryptAll(
    std::span<const crypto::StreamCipher> ciphers, crypto::Timestamp t_prev,
    crypto::Timestamp t_curr,
    std::span<const std::vector<crypto::RingElement>> plaintexts, Mode mode) {
  if (ciphers.size() != plaintexts.size()) {
    throw Error(ErrorCode::kWidthMismatch, "one plaintext per cipher expected");
  }
  const auto n = static_cast<std::int64_t>(ciphers.size());
  std::vector<crypto::StreamCiphertext> out(ciphers.size());
  FirstError errors;
#pragma omp parallel for schedule(static) if (Parallel(mode))
  for (std::int64_t i = 0; i < n; ++i) {
    errors.Run([&] { out[i] = ciphers[i].Encrypt(t_prev, t_curr, plaintexts[i]); });
  }
  errors.Rethrow();
  return out;
}

}  // namespace privstream::kernels
