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

#ifndef PRIVSTREAM_TESTS_ORACLES_H_
#define PRIVSTREAM_TESTS_ORACLES_H_

#include <cstdint>
#include <string>
#include <vector>

#include "privstream/secure_agg.h"

// Independent reference computations shared by the unit tests and the
// acceptance runner.
namespace privstream::oracle {

struct CancellationConfig {
  secagg::Protocol protocol = secagg::Protocol::kZeph;
  std::size_t parties = 10;
  std::uint64_t rounds = 10;
  double dropout = 0;
  std::size_t width = 1;
  unsigned bits = 2;
  std::uint64_t seed = 0;
};

struct CancellationResult {
  std::uint64_t rounds_checked = 0;
  std::uint64_t nonce_failures = 0;      // rounds whose nonces do not sum to 0
  std::uint64_t aggregate_failures = 0;  // rounds whose unmasked sum is wrong
  bool ok() const { return nonce_failures == 0 && aggregate_failures == 0; }
};

// Every party runs its own session with a private view of the membership.
// Each round a random subset goes offline; online parties build a nonce,
// correct it with the delta between their view and the online set, and
// mask a random token. Nonces and the unmasked aggregate are checked
// against direct sums.
CancellationResult RunCancellationTrial(const CancellationConfig& config);

// Draws a random config within the given limits.
CancellationConfig RandomCancellationConfig(secagg::Protocol protocol,
                                            std::uint64_t seed,
                                            std::size_t max_parties = 200,
                                            std::uint64_t max_rounds = 50,
                                            double max_dropout = 0.1);

// Probability that G(n, p) is disconnected, by enumerating every edge set.
// Requires n <= 7.
double ExactDisconnectProbability(unsigned n, double p);

// One random round trip through chained window sums, cross-stream sums,
// element directives and token application, compared with plaintext sums.
// Returns an empty string on agreement, otherwise a description.
std::string RunHomomorphicTrial(std::uint64_t seed);

struct AgreementStats {
  std::uint64_t fixtures = 0;
  std::uint64_t queries = 0;
  std::uint64_t plans = 0;
  std::uint64_t rejections = 0;
  std::uint64_t subsets_checked = 0;
  std::uint64_t mutations_refused = 0;
  std::uint64_t releases = 0;
  std::uint64_t invariant_checks = 0;
  std::vector<std::string> failures;

  AgreementStats& operator+=(const AgreementStats& o);
};

// One random schema with annotated streams spread over several controllers,
// then a sequence of random queries with occasional releases. Checks that
// every emitted plan is accepted by all of its controllers, that every
// rejection leaves no subset of the matching streams that all owners would
// accept, that tampered plans are refused, and that reservations stay
// exclusive and within budget after every step.
AgreementStats RunPlannerFixture(std::uint64_t seed, int queries = 4);

}  // namespace privstream::oracle

#endif  // PRIVSTREAM_TESTS_ORACLES_H_
