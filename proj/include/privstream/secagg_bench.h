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

#ifndef PRIVSTREAM_SECAGG_BENCH_H_
#define PRIVSTREAM_SECAGG_BENCH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "privstream/kernels.h"
#include "privstream/secure_agg.h"

// Instrumented round loop for a few sampled controllers inside a large
// simulated population. Unsampled parties exist only as identities.
namespace privstream::secagg {

struct BenchConfig {
  std::uint64_t parties = 100;
  std::uint64_t rounds = 0;  // 0: one full zeph epoch
  Protocol protocol = Protocol::kZeph;
  unsigned bits = 0;  // 0: chosen by OptimizeBits(parties, alpha, delta)
  double alpha = 0.5;
  double delta = 1e-7;
  double dropout = 0;       // per-round drop probability of unsampled parties
  std::uint64_t sample = 1;  // instrumented parties, always online
  std::uint64_t seed = 1;
  crypto::PrfKind prf = crypto::PrfKind::kFastStub;
  std::size_t width = 1;
  kernels::Mode mode = kernels::Mode::kSerial;
};

struct BenchRound {
  std::uint64_t round = 0;
  std::uint64_t members = 0;
  OpCounters ops;  // summed over sampled parties
};

struct BenchReport {
  BenchConfig config;
  unsigned bits = 0;
  std::uint64_t rounds_per_epoch = 0;
  std::vector<BenchRound> rounds;
  OpCounters total;

  // Mean per sampled party, truncated.
  OpCounters PerParty() const;
};

// Throws Error(kInfeasible) when bits are left to the optimizer and no
// segment width meets delta, Error(kInvalidArgument) for a bad config.
BenchReport RunBench(const BenchConfig& config);

// Header: round,members,prf_calls,additions,edge_checks,empty_rounds
std::string BenchCsv(const BenchReport& report);

}  // namespace privstream::secagg

#endif  // PRIVSTREAM_SECAGG_BENCH_H_
