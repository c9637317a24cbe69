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

#include "privstream/secagg_bench.h"

#include <algorithm>
#include <memory>
#include <numeric>

#include "privstream/errors.h"
#include "privstream/rng.h"

namespace privstream::secagg {

OpCounters BenchReport::PerParty() const {
  const std::uint64_t n = std::max<std::uint64_t>(config.sample, 1);
  return {total.prf_calls / n, total.additions / n, total.edge_checks / n,
          total.empty_rounds / n};
}

BenchReport RunBench(const BenchConfig& config) {
  if (config.parties < 2 || config.sample == 0 || config.sample > config.parties) {
    throw Error(ErrorCode::kInvalidArgument, "need 2+ parties and 1..parties sampled");
  }
  if (!(config.dropout >= 0 && config.dropout < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "dropout must lie in [0, 1)");
  }
  BenchReport report;
  report.config = config;
  report.bits = config.bits;
  if (report.bits == 0) {
    const auto opt = OptimizeBits(config.parties, config.alpha, config.delta);
    // Clique ignores the segment width, so it only needs one to size a
    // default run.
    const bool clique_with_rounds = config.protocol == Protocol::kClique && config.rounds > 0;
    if (!opt.feasible && !clique_with_rounds) {
      throw Error(ErrorCode::kInfeasible, "no segment width meets the failure bound");
    }
    report.bits = opt.feasible ? opt.bits : 0;
  }
  if (report.bits > 34) {
    throw Error(ErrorCode::kInvalidArgument, "segment bits above 34 are not simulated");
  }
  if (report.bits > 0) {
    report.rounds_per_epoch = std::uint64_t{128 / report.bits} << report.bits;
  }
  const std::uint64_t rounds = config.rounds ? config.rounds : report.rounds_per_epoch;

  IdentityRegistry registry;
  std::vector<PartyId> ids;
  ids.reserve(config.parties);
  for (std::uint64_t i = 0; i < config.parties; ++i) {
    ids.push_back(PartyId::FromName("party-" + std::to_string(i)));
    registry.Register(ids.back(), Bytes{1});
  }
  // Seeded choice of the instrumented parties.
  std::vector<std::size_t> order(config.parties);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 shuffle_rng({config.seed, 0x5a});
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  order.resize(config.sample);
  std::vector<std::uint8_t> sampled(config.parties, 0);
  for (std::size_t i : order) sampled[i] = 1;

  ProtocolParams params{config.protocol, std::max(report.bits, 1u), config.width,
                        crypto::Modulus{}};
  std::vector<std::unique_ptr<ControllerSession>> sessions(config.sample);
  kernels::ForEach(config.sample, config.mode, [&](std::size_t k) {
    auto secrets = SetupPairwiseDeterministic(ids[order[k]], ids, registry, config.seed);
    sessions[k] = std::make_unique<ControllerSession>(ids[order[k]], secrets, config.prf,
                                                      params);
  });

  std::vector<std::uint8_t> online(config.parties, 1);
  std::vector<OpCounters> per_session(config.sample);
  for (std::uint64_t r = 0; r < rounds; ++r) {
    MembershipDelta delta;
    delta.round = r;
    std::uint64_t members = 0;
    for (std::uint64_t i = 0; i < config.parties; ++i) {
      const bool up = sampled[i] || config.dropout == 0 ||
                      SplitMix64({config.seed, r, i}).Uniform() >= config.dropout;
      if (up != static_cast<bool>(online[i])) {
        (up ? delta.joined : delta.dropped).push_back(ids[i]);
        online[i] = up ? 1 : 0;
      }
      members += up ? 1 : 0;
    }
    const bool changed = !delta.joined.empty() || !delta.dropped.empty();
    kernels::ForEach(config.sample, config.mode, [&](std::size_t k) {
      per_session[k] = {};
      auto nonce = sessions[k]->Nonce(r, &per_session[k]);
      if (changed) nonce = sessions[k]->ApplyDelta(delta, std::move(nonce), &per_session[k]);
      sessions[k]->MarkEmitted(r);
    });
    BenchRound row{r, members, {}};
    for (const auto& c : per_session) row.ops += c;
    report.total += row.ops;
    report.rounds.push_back(row);
  }
  return report;
}

std::string BenchCsv(const BenchReport& report) {
  std::string out = "round,members,prf_calls,additions,edge_checks,empty_rounds\n";
  for (const auto& r : report.rounds) {
    out += std::to_string(r.round) + "," + std::to_string(r.members) + "," +
           std::to_string(r.ops.prf_calls) + "," + std::to_string(r.ops.additions) + "," +
           std::to_string(r.ops.edge_checks) + "," + std::to_string(r.ops.empty_rounds) + "\n";
  }
  return out;
}

}  // namespace privstream::secagg
