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

#include "privstream/sim.h"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "privstream/errors.h"
#include "privstream/kernels.h"
#include "privstream/ring_crypto.h"
#include "privstream/token.h"

namespace privstream::sim {
namespace {

using crypto::RingElement;
using crypto::StreamCiphertext;
using crypto::Timestamp;
using Clock = std::chrono::steady_clock;

// Purpose tags that keep the per-entity random streams apart.
enum Purpose : std::uint64_t {
  kEvents = 1,
  kBorderLoss,
  kControllerSilence,
  kNoise,
  kLinkLoss,
  kLinkLatency,
};

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string StreamName(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stream-%05zu", i);
  return buf;
}

// Fixed-point factor of each element of a record, used to scale DP noise:
// the value element of a field carries its scale, x^2 carries scale^2,
// counts and indicators carry 1.
std::vector<double> ElementScales(const encoding::RecordEncoder& enc) {
  std::vector<double> out(enc.Width(), 1.0);
  for (const auto& f : enc.fields()) {
    using encoding::Kind;
    const double s = f.spec.scale;
    switch (f.spec.kind) {
      case Kind::kSum:
      case Kind::kSumCount:
        out[f.offset] = s;
        break;
      case Kind::kVariance:
        out[f.offset] = s;
        out[f.offset + 1] = s * s;
        break;
      case Kind::kPredicateThreshold:
        out[f.offset] = s;
        out[f.offset + 1] = s;
        break;
      case Kind::kHistogram:
      case Kind::kOneHot:
        break;
    }
  }
  return out;
}

struct Producer {
  std::string stream_id;
  std::size_t controller = 0;
  std::shared_ptr<crypto::StreamCipher> cipher;
  crypto::KeyVector last_key;  // key of the latest border timestamp
};

struct ControllerState {
  secagg::PartyId id;
  std::vector<std::size_t> streams;
  std::unique_ptr<policy::PrivacyController> policy;
  token::TokenLedger ledger;
};

struct PlanState {
  policy::TransformationPlan plan;
  bool population = false;
  std::vector<std::size_t> members;  // producer indices
  std::vector<token::ElementDirective> directives;  // full record width
  token::OutputLayout layout;
  std::vector<std::size_t> released_slots;
  std::vector<double> slot_scales;
  std::vector<std::size_t> controllers;  // global controller indices, sorted
  std::map<std::size_t, std::size_t> local;
  bool secure = false;
  std::vector<std::unique_ptr<secagg::ControllerSession>> sessions;
  std::vector<std::set<std::size_t>> told;  // membership each session holds
  std::uint64_t quorum = 0;
};

// One controller's answer for one plan and window.
struct ControllerReply {
  bool ready = false;
  std::string failure;
  Bytes wire;
  secagg::MaskedToken masked;
  secagg::OpCounters ops;
  double seconds = 0;
};

struct PlanWindow {
  std::string failure;
  std::vector<std::size_t> members;      // producer indices in the output
  std::vector<std::size_t> controllers;  // global controller indices
  std::vector<ControllerReply> replies;  // parallel to controllers
  std::vector<bool> arrived;
  // Per-stream plans: one token per member stream.
  std::vector<std::optional<TransformationToken>> stream_tokens;
  std::vector<bool> stream_arrived;
};

struct WindowState {
  WindowResult result;
  std::vector<std::vector<StreamCiphertext>> sent;      // per producer
  std::vector<std::vector<std::size_t>> received;       // indices into sent
  std::vector<std::vector<RingElement>> plain;          // per producer
  std::vector<std::optional<StreamCiphertext>> totals;  // complete chains
  std::vector<bool> responded;                          // per controller
  std::vector<PlanWindow> plans;
};

class Runner {
 public:
  Runner(const Scenario& scenario, const SimConfig& config)
      : scenario_(scenario),
        cfg_(config),
        m_(config.modulus_bits),
        encoder_(scenario.Encoder()),
        width_(encoder_.Width()),
        mode_(config.parallel ? kernels::Mode::kParallel : kernels::Mode::kSerial),
        transport_(&queue_, config.seed, config.latency_ms, config.message_drop) {}

  SimReport Run() {
    Setup();
    for (std::uint64_t w = 0; w < cfg_.windows; ++w) {
      const std::uint64_t start = w * cfg_.window_ms;
      const std::uint64_t close = start + cfg_.window_ms + cfg_.grace_ms;
      queue_.At(start, [this, w] { Produce(w); });
      queue_.At(close, [this, w] { Close(w); });
      queue_.At(close + cfg_.grace_ms / 2, [this, w] { Decide(w); });
      queue_.At(close + cfg_.grace_ms, [this, w] { Finish(w); });
    }
    queue_.RunAll();
    return std::move(report_);
  }

 private:
  void Setup();
  void SetupSecureAggregation(PlanState& ps, std::size_t plan_index);
  void Produce(std::uint64_t w);
  void Close(std::uint64_t w);
  void Decide(std::uint64_t w);
  void Finish(std::uint64_t w);
  ControllerReply BuildReply(std::size_t plan_index, std::size_t controller,
                             std::uint64_t w, const secagg::MembershipDelta& delta,
                             const std::vector<std::size_t>& own_members,
                             std::size_t party_count);
  std::vector<RingElement> NoiseVector(std::size_t plan_index, std::size_t controller,
                                       std::uint64_t w, std::size_t party_count) const;
  PlanOutput Decode(const PlanState& ps, std::string subject,
                    std::vector<std::optional<RingElement>> released,
                    const std::vector<std::optional<RingElement>>& shadow) const;
  bool Silent(std::size_t controller, std::uint64_t w) const {
    return SplitMix64({cfg_.seed, kControllerSilence, controller, w}).Uniform() <
           cfg_.controller_drop;
  }
  double Timed(double seconds) const { return cfg_.record_timings ? seconds : 0; }

  const Scenario& scenario_;
  SimConfig cfg_;
  crypto::Modulus m_;
  encoding::RecordEncoder encoder_;
  std::size_t width_;
  kernels::Mode mode_;
  EventQueue queue_;
  Transport transport_;
  SimReport report_;
  std::vector<Producer> producers_;
  std::vector<std::unique_ptr<ControllerState>> controllers_;
  std::map<std::string, std::size_t> stream_index_;
  std::vector<PlanState> plans_;
  std::map<std::uint64_t, WindowState> windows_;
  secagg::IdentityRegistry registry_;
};

void Runner::Setup() {
  cfg_.Validate();
  report_.scenario = scenario_.name;
  report_.config = cfg_;
  report_.protocol = cfg_.protocol;
  const policy::StreamSchema schema = scenario_.Schema();
  const std::uint64_t n_controllers = cfg_.controllers ? cfg_.controllers : cfg_.producers;

  for (std::uint64_t c = 0; c < n_controllers; ++c) {
    auto state = std::make_unique<ControllerState>();
    state->id = secagg::PartyId::FromName("controller-" + std::to_string(c));
    state->policy = std::make_unique<policy::PrivacyController>(state->id, schema);
    registry_.Register(state->id, Bytes{1});
    controllers_.push_back(std::move(state));
  }

  policy::PolicyManager manager(schema);
  for (std::uint64_t i = 0; i < cfg_.producers; ++i) {
    Producer p;
    p.stream_id = StreamName(i);
    p.controller = i % n_controllers;
    p.cipher = std::make_shared<crypto::StreamCipher>(crypto::MakeStreamCipher(
        crypto::MasterSecret::FromSeed(p.stream_id, cfg_.seed), cfg_.prf, m_));
    p.last_key = p.cipher->DeriveKey(Timestamp{0}, width_);

    policy::StreamAnnotation a;
    a.stream_id = p.stream_id;
    a.schema = schema.name;
    a.owner = controllers_[p.controller]->id;
    a.metadata["region"] = scenario_.regions[i % scenario_.regions.size()];
    for (const auto& attr : scenario_.attributes) a.selected[attr.name] = attr.selected;
    manager.AddStream(a);
    controllers_[p.controller]->policy->AddStream(a);
    controllers_[p.controller]->streams.push_back(i);
    stream_index_[p.stream_id] = i;
    producers_.push_back(std::move(p));
  }

  const std::vector<double> element_scales = ElementScales(encoder_);
  for (const auto& query : scenario_.queries) {
    policy::PlanResult result = manager.Plan(query);
    if (auto* r = std::get_if<policy::Rejection>(&result)) {
      throw Error(ErrorCode::kInfeasible,
                  "query '" + query.output + "' rejected: " + r->constraint + " (" +
                      r->message + ")");
    }
    PlanState ps;
    ps.plan = std::get<policy::TransformationPlan>(std::move(result));
    ps.population = query.scope == policy::Scope::kPopulation;
    for (const auto& id : ps.plan.members) ps.members.push_back(stream_index_.at(id));
    ps.quorum = ps.plan.members.size() - ps.plan.fault_tolerance;

    ps.directives.assign(width_, token::ElementDirective::Withhold());
    for (const auto& [attr, list] : ps.plan.directives) {
      const std::size_t offset = encoder_.field(attr).offset;
      std::copy(list.begin(), list.end(),
                ps.directives.begin() + static_cast<std::ptrdiff_t>(offset));
    }
    ps.layout = token::MakeLayout(ps.directives);
    for (std::size_t s = 0; s < ps.layout.Width(); ++s) {
      if (ps.layout.released[s]) ps.released_slots.push_back(s);
      ps.slot_scales.push_back(element_scales[ps.layout.sources[s].front()]);
    }

    std::set<std::size_t> owners;
    for (std::size_t i : ps.members) owners.insert(producers_[i].controller);
    ps.controllers.assign(owners.begin(), owners.end());
    for (std::size_t k = 0; k < ps.controllers.size(); ++k) {
      ps.local[ps.controllers[k]] = k;
      policy::Verdict v = controllers_[ps.controllers[k]]->policy->Commit(ps.plan, registry_);
      if (!v.accepted) {
        throw Error(ErrorCode::kInfeasible,
                    "controller refused plan '" + query.output + "': " + v.reason);
      }
    }
    if (ps.population && ps.controllers.size() > 1) {
      SetupSecureAggregation(ps, plans_.size());
    }
    report_.plans.push_back(ps.plan);
    plans_.push_back(std::move(ps));
  }
}

void Runner::SetupSecureAggregation(PlanState& ps, std::size_t plan_index) {
  ps.secure = true;
  secagg::ProtocolParams params;
  params.protocol = cfg_.protocol;
  params.width = ps.released_slots.size();
  params.modulus = m_;
  if (params.protocol != secagg::Protocol::kClique) {
    auto opt = secagg::OptimizeBits(ps.controllers.size(), cfg_.alpha, cfg_.delta);
    if (opt.feasible && opt.bits <= 34) {
      params.bits = opt.bits;
    } else {
      // Too few parties for a sparse graph with the requested failure bound.
      params.protocol = secagg::Protocol::kClique;
    }
  }
  report_.protocol = params.protocol;
  report_.bits = params.protocol == secagg::Protocol::kClique ? 0 : params.bits;

  std::vector<secagg::PartyId> ids;
  for (std::size_t c : ps.controllers) ids.push_back(controllers_[c]->id);
  ps.sessions.resize(ps.controllers.size());
  ps.told.assign(ps.controllers.size(),
                 std::set<std::size_t>(ps.controllers.begin(), ps.controllers.end()));
  kernels::ForEach(ps.controllers.size(), mode_, [&](std::size_t k) {
    auto secrets = secagg::SetupPairwiseDeterministic(ids[k], ids, registry_,
                                                      cfg_.seed ^ (plan_index << 32));
    ps.sessions[k] = std::make_unique<secagg::ControllerSession>(ids[k], secrets,
                                                                 cfg_.prf, params);
  });
}

void Runner::Produce(std::uint64_t w) {
  WindowState& ws = windows_[w];
  ws.result.window = w;
  const std::size_t n = producers_.size();
  ws.sent.assign(n, {});
  ws.received.assign(n, {});
  ws.plain.assign(n, std::vector<RingElement>(width_, 0));
  std::vector<double> t_plain(n, 0), t_encrypt(n, 0);
  std::vector<bool> border_lost(n, false);
  const Timestamp start{w * cfg_.window_ms};
  const Timestamp end{(w + 1) * cfg_.window_ms};

  kernels::ForEach(n, mode_, [&](std::size_t i) {
    Producer& p = producers_[i];
    SplitMix64 rng({cfg_.seed, kEvents, i, w});
    std::vector<std::uint64_t> times;
    if (scenario_.fixed_events) {
      const std::uint64_t k = *scenario_.fixed_events;
      for (std::uint64_t e = 0; e < k; ++e) {
        times.push_back(start.t + (e + 1) * cfg_.window_ms / (k + 1));
      }
    } else {
      std::uint64_t t = start.t;
      while (true) {
        const double gap = -cfg_.event_interval_ms * std::log1p(-rng.Uniform());
        t += std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(gap)));
        if (t >= end.t) break;
        times.push_back(t);
      }
    }
    times.erase(std::unique(times.begin(), times.end()), times.end());

    std::vector<double> values(scenario_.attributes.size());
    std::vector<std::vector<RingElement>> encoded;
    auto t0 = Clock::now();
    for (std::size_t e = 0; e < times.size(); ++e) {
      for (std::size_t a = 0; a < values.size(); ++a) {
        values[a] = scenario_.attributes[a].Draw(rng, e);
      }
      encoded.push_back(encoder_.Encode(values, m_));
      crypto::AddInPlace(ws.plain[i], encoded.back(), m_);
    }
    t_plain[i] = Since(t0);

    t0 = Clock::now();
    auto& out = ws.sent[i];
    for (std::size_t e = 0; e < times.size(); ++e) {
      crypto::KeyVector key = p.cipher->DeriveKey(Timestamp{times[e]}, width_);
      out.push_back(p.cipher->EncryptWithKeys(p.last_key, key, encoded[e]));
      p.last_key = std::move(key);
    }
    crypto::KeyVector border = p.cipher->DeriveKey(end, width_);
    out.push_back(p.cipher->EncryptWithKeys(p.last_key, border, encoder_.Neutral()));
    p.last_key = std::move(border);
    t_encrypt[i] = Since(t0);
    border_lost[i] =
        SplitMix64({cfg_.seed, kBorderLoss, i, w}).Uniform() < cfg_.producer_drop;
  });

  for (std::size_t i = 0; i < n; ++i) {
    ws.result.t_plain += Timed(t_plain[i]);
    ws.result.t_encrypt += Timed(t_encrypt[i]);
    const std::size_t count = ws.sent[i].size() - (border_lost[i] ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k) {
      queue_.At(ws.sent[i][k].t_curr.t, [this, w, i, k] {
        WindowState& state = windows_.at(w);
        transport_.Send(&report_.producer_link, EventPayloadBytes(width_),
                        &state.result.bytes_producer, [this, w, i, k] {
                          windows_.at(w).received[i].push_back(k);
                        });
      });
    }
  }
}

void Runner::Close(std::uint64_t w) {
  WindowState& ws = windows_.at(w);
  const Timestamp start{w * cfg_.window_ms};
  const Timestamp end{(w + 1) * cfg_.window_ms};
  auto t0 = Clock::now();
  ws.totals.assign(producers_.size(), std::nullopt);
  for (std::size_t i = 0; i < producers_.size(); ++i) {
    auto& got = ws.received[i];
    std::sort(got.begin(), got.end(), [&](std::size_t a, std::size_t b) {
      return ws.sent[i][a].t_curr < ws.sent[i][b].t_curr;
    });
    std::vector<StreamCiphertext> chain;
    for (std::size_t k : got) chain.push_back(ws.sent[i][k]);
    if (chain.empty() || chain.front().t_prev != start || chain.back().t_curr != end) {
      continue;
    }
    try {
      ws.totals[i] = crypto::SumChain(chain, m_);
    } catch (const Error&) {
      // A gap inside the window: the stream sits this window out.
    }
  }
  ws.result.t_unmask += Timed(Since(t0));

  ws.responded.assign(controllers_.size(), false);
  std::set<std::size_t> involved;
  for (const auto& ps : plans_) involved.insert(ps.controllers.begin(), ps.controllers.end());
  for (std::size_t c : involved) {
    transport_.Send(&report_.server_link, 8, &ws.result.bytes_server, [this, w, c] {
      if (Silent(c, w)) return;
      WindowState& state = windows_.at(w);
      transport_.Send(&report_.controller_link, 40, &state.result.bytes_controller,
                      [this, w, c] { windows_.at(w).responded[c] = true; });
    });
  }
}

std::vector<RingElement> Runner::NoiseVector(std::size_t plan_index, std::size_t controller,
                                             std::uint64_t w,
                                             std::size_t party_count) const {
  const PlanState& ps = plans_[plan_index];
  std::vector<RingElement> noise(ps.layout.Width(), 0);
  if (!ps.plan.IsDp()) return noise;
  token::NoiseSpec spec{cfg_.dp_sigma, 1.0 - cfg_.alpha, party_count};
  const std::uint64_t seed = SplitMix64({cfg_.seed, kNoise, plan_index, controller, w})();
  for (std::size_t s : ps.released_slots) {
    noise[s] = token::SampleFixedPointGaussian(spec.PerPartySigma(), ps.slot_scales[s],
                                               seed, s, m_);
  }
  return noise;
}

ControllerReply Runner::BuildReply(std::size_t plan_index, std::size_t controller,
                                   std::uint64_t w, const secagg::MembershipDelta& delta,
                                   const std::vector<std::size_t>& own_members,
                                   std::size_t party_count) {
  PlanState& ps = plans_[plan_index];
  ControllerState& cs = *controllers_[controller];
  ControllerReply reply;
  auto t0 = Clock::now();
  const Timestamp start{w * cfg_.window_ms};
  const Timestamp end{(w + 1) * cfg_.window_ms};

  std::vector<TransformationToken> tokens;
  for (std::size_t i : own_members) {
    const Producer& p = producers_[i];
    auto issued = cs.ledger.Issue(p.stream_id, ps.plan.query.output, start, end, ps.plan.id,
                                  [&] {
                                    return token::SingleStreamToken(*p.cipher, p.stream_id,
                                                                    start, end, ps.directives);
                                  });
    if (!issued) {
      reply.failure = "token_refused";
      return reply;
    }
    tokens.push_back(std::move(*issued));
  }
  TransformationToken partial = token::MultiStreamPartial(tokens, m_);

  if (const auto& eps = ps.plan.query.dp_epsilon) {
    std::vector<token::PrivacyBudget*> budgets;
    bool affordable = true;
    for (std::size_t i : own_members) {
      for (const auto& sel : ps.plan.query.select) {
        budgets.push_back(&cs.policy->Budget(producers_[i].stream_id, sel.attribute));
        affordable = affordable && budgets.back()->CanAfford(*eps);
      }
    }
    if (!affordable) {
      reply.failure = "budget_exhausted";
      return reply;
    }
    for (auto* b : budgets) b->TryCharge(*eps);
    token::PrivacyBudget charged(std::numeric_limits<double>::infinity());
    token::NoiseSpec spec{cfg_.dp_sigma, 1.0 - cfg_.alpha, party_count};
    const std::uint64_t seed = SplitMix64({cfg_.seed, kNoise, plan_index, controller, w})();
    auto noised = token::AddDpNoise(partial, spec, charged, *eps, seed, m_, ps.slot_scales);
    partial = std::get<TransformationToken>(std::move(noised));
  }

  std::vector<RingElement> nonce(ps.layout.Width(), 0);
  std::uint64_t epoch = 0;
  if (ps.secure) {
    secagg::ControllerSession& session = *ps.sessions[ps.local.at(controller)];
    auto compact = session.Nonce(w, &reply.ops);
    compact = session.ApplyDelta(delta, std::move(compact), &reply.ops);
    session.MarkEmitted(w);
    for (std::size_t k = 0; k < ps.released_slots.size(); ++k) {
      nonce[ps.released_slots[k]] = compact[k];
    }
    epoch = w / session.rounds_per_epoch();
  }
  reply.masked = secagg::MaskToken(partial, nonce, w, epoch, cs.id, m_);
  reply.wire = secagg::EncodeMaskedToken(reply.masked);
  reply.ready = true;
  reply.seconds = Since(t0);
  return reply;
}

void Runner::Decide(std::uint64_t w) {
  WindowState& ws = windows_.at(w);
  ws.plans.resize(plans_.size());
  for (std::size_t pi = 0; pi < plans_.size(); ++pi) {
    PlanState& ps = plans_[pi];
    PlanWindow& pw = ws.plans[pi];
    for (std::size_t i : ps.members) {
      if (ws.totals[i] && ws.responded[producers_[i].controller]) pw.members.push_back(i);
    }

    if (!ps.population) {
      pw.stream_tokens.assign(pw.members.size(), std::nullopt);
      pw.stream_arrived.assign(pw.members.size(), false);
      std::vector<double> seconds(pw.members.size(), 0);
      const Timestamp start{w * cfg_.window_ms};
      const Timestamp end{(w + 1) * cfg_.window_ms};
      kernels::ForEach(pw.members.size(), mode_, [&](std::size_t k) {
        auto t0 = Clock::now();
        const Producer& p = producers_[pw.members[k]];
        pw.stream_tokens[k] = controllers_[p.controller]->ledger.Issue(
            p.stream_id, ps.plan.query.output, start, end, ps.plan.id, [&] {
              return token::SingleStreamToken(*p.cipher, p.stream_id, start, end,
                                              ps.directives);
            });
        seconds[k] = Since(t0);
      });
      for (std::size_t k = 0; k < pw.members.size(); ++k) {
        ws.result.t_token += Timed(seconds[k]);
        if (!pw.stream_tokens[k]) continue;
        const std::size_t bytes = token::EncodeToken(*pw.stream_tokens[k]).size();
        transport_.Send(&report_.controller_link, bytes, &ws.result.bytes_controller,
                        [this, w, pi, k] { windows_.at(w).plans[pi].stream_arrived[k] = true; });
      }
      continue;
    }

    if (pw.members.size() < ps.quorum || pw.members.size() < 2) {
      pw.failure = "quorum";
      continue;
    }
    std::set<std::size_t> in;
    for (std::size_t i : pw.members) in.insert(producers_[i].controller);
    pw.controllers.assign(in.begin(), in.end());
    pw.replies.resize(pw.controllers.size());
    pw.arrived.assign(pw.controllers.size(), false);

    // Deltas go out first; only controllers that received one build a reply.
    std::vector<secagg::MembershipDelta> deltas(pw.controllers.size());
    std::vector<bool> delivered(pw.controllers.size(), false);
    for (std::size_t k = 0; k < pw.controllers.size(); ++k) {
      const std::size_t c = pw.controllers[k];
      auto& d = deltas[k];
      d.round = w;
      if (ps.secure) {
        const auto& told = ps.told[ps.local.at(c)];
        for (std::size_t x : in) {
          if (!told.contains(x)) d.joined.push_back(controllers_[x]->id);
        }
        for (std::size_t x : told) {
          if (!in.contains(x)) d.dropped.push_back(controllers_[x]->id);
        }
      }
      delivered[k] = transport_.Send(
          &report_.server_link, secagg::EncodeDelta(d).size() + 32 * pw.members.size(),
          &ws.result.bytes_server, [this, w, pi, k] {
            PlanWindow& plan_window = windows_.at(w).plans[pi];
            const ControllerReply& r = plan_window.replies[k];
            if (!r.ready) return;
            transport_.Send(&report_.controller_link, r.wire.size(),
                            &windows_.at(w).result.bytes_controller,
                            [this, w, pi, k] { windows_.at(w).plans[pi].arrived[k] = true; });
          });
      if (delivered[k] && ps.secure) ps.told[ps.local.at(c)] = in;
    }

    std::map<std::size_t, std::vector<std::size_t>> own;
    for (std::size_t i : pw.members) own[producers_[i].controller].push_back(i);
    kernels::ForEach(pw.controllers.size(), mode_, [&](std::size_t k) {
      if (!delivered[k]) return;
      const std::size_t c = pw.controllers[k];
      pw.replies[k] = BuildReply(pi, c, w, deltas[k], own.at(c), pw.controllers.size());
    });
    for (const auto& r : pw.replies) {
      ws.result.ops += r.ops;
      ws.result.t_token += Timed(r.seconds);
      if (!r.ready && !r.failure.empty() && pw.failure.empty()) pw.failure = r.failure;
    }
  }
}

PlanOutput Runner::Decode(const PlanState& ps, std::string subject,
                          std::vector<std::optional<RingElement>> released,
                          const std::vector<std::optional<RingElement>>& shadow) const {
  PlanOutput out;
  out.plan = ps.plan.query.output;
  out.subject = std::move(subject);
  out.shadow_equal = released == shadow;
  for (const auto& sel : ps.plan.query.select) {
    const auto& field = encoder_.field(sel.attribute);
    auto first = released.begin() + static_cast<std::ptrdiff_t>(field.offset);
    std::vector<std::optional<RingElement>> slice(
        first, first + static_cast<std::ptrdiff_t>(field.spec.Width()));
    out.attributes.push_back({sel.attribute, encoding::DecodeReleased(slice, field.spec, m_)});
  }
  out.released = std::move(released);
  return out;
}

void Runner::Finish(std::uint64_t w) {
  WindowState& ws = windows_.at(w);
  WindowResult& result = ws.result;
  std::set<std::size_t> contributing, active_controllers;
  const Timestamp start{w * cfg_.window_ms};
  const Timestamp end{(w + 1) * cfg_.window_ms};

  for (std::size_t pi = 0; pi < plans_.size(); ++pi) {
    const PlanState& ps = plans_[pi];
    PlanWindow& pw = ws.plans[pi];
    auto shadow_of = [&](const std::vector<std::size_t>& streams,
                         const std::vector<std::size_t>& noisy_controllers) {
      std::vector<RingElement> sum(width_, 0);
      for (std::size_t i : streams) crypto::AddInPlace(sum, ws.plain[i], m_);
      auto projected = token::Project(sum, ps.layout, m_);
      for (std::size_t c : noisy_controllers) {
        crypto::AddInPlace(projected, NoiseVector(pi, c, w, noisy_controllers.size()), m_);
      }
      std::vector<std::optional<RingElement>> out(projected.size());
      for (std::size_t s : ps.released_slots) out[s] = projected[s];
      return out;
    };

    if (!ps.population) {
      for (std::size_t k = 0; k < pw.members.size(); ++k) {
        const std::size_t i = pw.members[k];
        if (!pw.stream_arrived[k]) {
          if (pw.failure.empty()) pw.failure = "missing_token";
          continue;
        }
        auto t0 = Clock::now();
        const StreamCiphertext projected = token::Project(*ws.totals[i], ps.layout, m_);
        auto released = crypto::ApplyToken(projected, StreamSetId({producers_[i].stream_id}),
                                           *pw.stream_tokens[k], m_);
        result.t_unmask += Timed(Since(t0));
        t0 = Clock::now();
        auto shadow = shadow_of({i}, {});
        result.outputs.push_back(Decode(ps, producers_[i].stream_id, std::move(released), shadow));
        result.t_plain += Timed(Since(t0));
        contributing.insert(i);
        active_controllers.insert(producers_[i].controller);
      }
      continue;
    }

    if (pw.failure.empty()) {
      for (bool a : pw.arrived) {
        if (!a) pw.failure = "missing_token";
      }
    }
    if (!pw.failure.empty()) continue;

    auto t0 = Clock::now();
    std::vector<secagg::MaskedToken> masked;
    for (const auto& r : pw.replies) masked.push_back(r.masked);
    std::vector<std::string> ids;
    for (std::size_t i : pw.members) ids.push_back(producers_[i].stream_id);
    const Digest set_id = StreamSetId(ids);
    TransformationToken combined = secagg::UnmaskAggregate(masked, set_id, m_);
    std::optional<StreamCiphertext> aggregate;
    for (std::size_t i : pw.members) {
      StreamCiphertext projected = token::Project(*ws.totals[i], ps.layout, m_);
      aggregate = aggregate ? crypto::AddCiphertexts(*aggregate, projected,
                                                     crypto::SumMode::kCrossStream, m_)
                            : projected;
    }
    auto released = crypto::ApplyToken(*aggregate, set_id, combined, m_);
    result.t_unmask += Timed(Since(t0));

    t0 = Clock::now();
    auto shadow = shadow_of(pw.members, pw.controllers);
    result.outputs.push_back(Decode(ps, "population", std::move(released), shadow));
    result.t_plain += Timed(Since(t0));
    contributing.insert(pw.members.begin(), pw.members.end());
    active_controllers.insert(pw.controllers.begin(), pw.controllers.end());
  }

  for (std::size_t pi = 0; pi < plans_.size(); ++pi) {
    if (!ws.plans[pi].failure.empty()) {
      result.status = plans_[pi].plan.query.output + ":" + ws.plans[pi].failure;
      break;
    }
  }
  result.members = contributing.size();
  result.controllers = active_controllers.size();
  result.shadow_equal =
      !result.outputs.empty() &&
      std::all_of(result.outputs.begin(), result.outputs.end(),
                  [](const PlanOutput& o) { return o.shadow_equal; });
  if (result.t_plain > 0) {
    result.overhead_factor =
        (result.t_plain + result.t_encrypt + result.t_token + result.t_unmask) / result.t_plain;
  }
  report_.windows.push_back(std::move(result));
  windows_.erase(w);
  (void)start;
  (void)end;
}

std::string Format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void SimConfig::Validate() const {
  auto prob = [](double p) { return p >= 0 && p <= 1; };
  if (producers == 0 || windows == 0 || window_ms == 0) {
    throw Error(ErrorCode::kInvalidArgument, "producers, windows and window must be positive");
  }
  if (grace_ms >= window_ms) {
    throw Error(ErrorCode::kInvalidArgument, "grace period must be shorter than the window");
  }
  if (!prob(controller_drop) || !prob(producer_drop) || !prob(message_drop)) {
    throw Error(ErrorCode::kInvalidArgument, "drop probabilities must lie in [0, 1]");
  }
  if (!(event_interval_ms > 0) || latency_ms < 0 || dp_sigma < 0) {
    throw Error(ErrorCode::kInvalidArgument, "bad timing or noise parameter");
  }
  if (!(alpha >= 0 && alpha < 1) || !(delta > 0 && delta < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1), delta in (0, 1)");
  }
  if (modulus_bits < 1 || modulus_bits > 64) {
    throw Error(ErrorCode::kInvalidArgument, "modulus bits must lie in [1, 64]");
  }
}

SimConfig ParseSimConfig(std::string_view yaml, SimConfig c) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw Error(ErrorCode::kParse, "config must be a key/value map");
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    try {
      if (key == "producers") c.producers = v.as<std::uint64_t>();
      else if (key == "controllers") c.controllers = v.as<std::uint64_t>();
      else if (key == "windows") c.windows = v.as<std::uint64_t>();
      else if (key == "window" || key == "window_ms") c.window_ms = policy::ParseDurationMs(v.as<std::string>());
      else if (key == "grace" || key == "grace_ms") c.grace_ms = policy::ParseDurationMs(v.as<std::string>());
      else if (key == "event_interval_ms") c.event_interval_ms = v.as<double>();
      else if (key == "latency_ms") c.latency_ms = v.as<double>();
      else if (key == "protocol") c.protocol = secagg::ParseProtocol(v.as<std::string>());
      else if (key == "alpha") c.alpha = v.as<double>();
      else if (key == "delta") c.delta = v.as<double>();
      else if (key == "controller_drop" || key == "dropout") c.controller_drop = v.as<double>();
      else if (key == "producer_drop") c.producer_drop = v.as<double>();
      else if (key == "message_drop") c.message_drop = v.as<double>();
      else if (key == "dp_sigma") c.dp_sigma = v.as<double>();
      else if (key == "seed") c.seed = v.as<std::uint64_t>();
      else if (key == "prf") c.prf = crypto::ParsePrfKind(v.as<std::string>());
      else if (key == "modulus_bits") c.modulus_bits = v.as<unsigned>();
      else if (key == "parallel") c.parallel = v.as<bool>();
      else if (key == "record_timings") c.record_timings = v.as<bool>();
      else throw Error(ErrorCode::kParse, "unknown config key '" + key + "'");
    } catch (const YAML::Exception&) {
      throw Error(ErrorCode::kParse, "bad value for config key '" + key + "'");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kParse) throw;
      throw Error(ErrorCode::kParse, "config key '" + key + "': " + e.what());
    }
  }
  return c;
}

std::size_t SimReport::Succeeded() const {
  return static_cast<std::size_t>(std::count_if(
      windows.begin(), windows.end(), [](const WindowResult& w) { return w.status == "ok"; }));
}

bool SimReport::AllShadowEqual() const {
  return std::all_of(windows.begin(), windows.end(), [](const WindowResult& w) {
    return w.status != "ok" || w.shadow_equal;
  });
}

double SimReport::MeanOverhead() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    if (w.overhead_factor > 0) {
      sum += w.overhead_factor;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0;
}

std::string CsvHeader() {
  return "window,status,members,prf_calls,additions,bytes_producer,bytes_controller,"
         "bytes_server,t_encrypt,t_token,t_unmask,overhead_factor";
}

std::string ToCsv(const SimReport& report) {
  std::string out = CsvHeader() + "\n";
  for (const auto& w : report.windows) {
    out += std::to_string(w.window) + "," + w.status + "," + std::to_string(w.members) +
           "," + std::to_string(w.ops.prf_calls) + "," + std::to_string(w.ops.additions) +
           "," + std::to_string(w.bytes_producer) + "," + std::to_string(w.bytes_controller) +
           "," + std::to_string(w.bytes_server) + "," + Format(w.t_encrypt) + "," +
           Format(w.t_token) + "," + Format(w.t_unmask) + "," + Format(w.overhead_factor) +
           "\n";
  }
  return out;
}

std::string ToJsonSummary(const SimReport& report) {
  using nlohmann::json;
  json j;
  j["scenario"] = report.scenario;
  j["protocol"] = std::string(secagg::ProtocolName(report.protocol));
  j["bits"] = report.bits;
  j["producers"] = report.config.producers;
  j["windows"] = report.windows.size();
  j["succeeded"] = report.Succeeded();
  j["all_shadow_equal"] = report.AllShadowEqual();
  j["mean_overhead_factor"] = report.MeanOverhead();
  j["seed"] = report.config.seed;
  json plans = json::array();
  for (const auto& p : report.plans) {
    json chain = json::array();
    for (auto op : p.chain) chain.push_back(std::string(policy::OperationName(op)));
    plans.push_back({{"output", p.query.output},
                     {"id", p.id.Hex()},
                     {"members", p.members.size()},
                     {"controllers", p.controllers.size()},
                     {"fault_tolerance", p.fault_tolerance},
                     {"chain", chain}});
  }
  j["plans"] = plans;
  auto link = [](const LinkStats& s) {
    return json{{"sent", s.sent}, {"received", s.received}, {"dropped", s.dropped}};
  };
  j["links"] = {{"producer", link(report.producer_link)},
                {"controller", link(report.controller_link)},
                {"server", link(report.server_link)}};
  std::uint64_t prf = 0, adds = 0, bytes = 0;
  for (const auto& w : report.windows) {
    prf += w.ops.prf_calls;
    adds += w.ops.additions;
    bytes += w.bytes_producer + w.bytes_controller + w.bytes_server;
  }
  j["totals"] = {{"prf_calls", prf}, {"additions", adds}, {"bytes", bytes}};
  if (!report.windows.empty()) {
    json outputs = json::array();
    std::map<std::string, int> shown;
    for (const auto& o : report.windows.back().outputs) {
      if (++shown[o.plan] > 5) continue;
      json attrs = json::object();
      for (const auto& a : o.attributes) {
        json stats = json::object();
        if (a.stats.sum) stats["sum"] = *a.stats.sum;
        if (a.stats.count) stats["count"] = *a.stats.count;
        if (a.stats.mean) stats["mean"] = *a.stats.mean;
        if (a.stats.variance) stats["variance"] = *a.stats.variance;
        if (a.stats.median) stats["median"] = *a.stats.median;
        if (a.stats.mode) stats["mode"] = *a.stats.mode;
        attrs[a.attribute] = stats;
      }
      outputs.push_back({{"plan", o.plan}, {"subject", o.subject}, {"attributes", attrs}});
    }
    j["last_window"] = outputs;
  }
  return j.dump(2);
}

SimReport RunScenario(const Scenario& scenario, const SimConfig& config) {
  return Runner(scenario, config).Run();
}

std::uint64_t EventPayloadBytes(std::size_t width) { return 16 + 8 * width; }

BandwidthReport MeasureBandwidth(std::size_t width, std::uint64_t controllers) {
  BandwidthReport r;
  r.event_payload = EventPayloadBytes(width);
  r.heartbeat = 40;
  r.token = token::TokenWireSize(width);
  r.masked_token = 8 + 8 + 32 + r.token;
  r.delta_per_change = 32;
  const std::uint64_t key = secagg::EcdhKeyPair::Generate().public_key().size();
  r.setup_per_controller = key * controllers;  // own key out, N - 1 keys in
  r.setup_total = r.setup_per_controller * controllers;
  return r;
}

void EventQueue::At(std::uint64_t time_ms, std::function<void()> fn) {
  queue_.push({std::max(time_ms, now_), seq_++, std::move(fn)});
}

void EventQueue::RunUntil(std::uint64_t time_ms) {
  while (!queue_.empty() && queue_.top().time <= time_ms) {
    Item item = queue_.top();
    queue_.pop();
    now_ = item.time;
    item.fn();
  }
}

void EventQueue::RunAll() { RunUntil(std::numeric_limits<std::uint64_t>::max()); }

Transport::Transport(EventQueue* queue, std::uint64_t seed, double latency_ms,
                     double drop_probability)
    : queue_(queue), seed_(seed), latency_ms_(latency_ms), drop_(drop_probability) {}

bool Transport::Send(LinkStats* link, std::uint64_t bytes, std::uint64_t* byte_counter,
                     std::function<void()> deliver) {
  const std::uint64_t id = next_id_++;
  ++link->sent;
  *byte_counter += bytes;
  if (SplitMix64({seed_, kLinkLoss, id}).Uniform() < drop_) {
    ++link->dropped;
    return false;
  }
  SplitMix64 rng({seed_, kLinkLatency, id});
  const double latency = -latency_ms_ * std::log1p(-rng.Uniform());
  const auto delay = static_cast<std::uint64_t>(std::ceil(latency));
  queue_->At(queue_->now() + delay, [link, deliver = std::move(deliver)] {
    ++link->received;
    deliver();
  });
  return true;
}

}  // namespace privstream::sim
