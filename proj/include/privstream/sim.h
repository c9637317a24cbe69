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

#ifndef PRIVSTREAM_SIM_H_
#define PRIVSTREAM_SIM_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "privstream/encoding.h"
#include "privstream/policy.h"
#include "privstream/prf.h"
#include "privstream/rng.h"
#include "privstream/secure_agg.h"

// In-process simulation of producers, privacy controllers, the stream
// processor and the coordinator, driven by a discrete-event scheduler over
// virtual milliseconds.
namespace privstream::sim {

// How a producer draws one attribute value. A non-empty sequence is
// replayed by event index within the window; otherwise values are uniform
// in [lo, hi), floored when integer is set.
struct AttributeModel {
  std::string name;
  encoding::EncodingSpec spec;
  double lo = 0;
  double hi = 1;
  bool integer = false;
  std::vector<double> sequence;
  // Option every simulated stream selects for this attribute.
  policy::OptionKind selected = policy::OptionKind::kAggregate;
  // Constraints declared for the selected option in the generated schema.
  std::uint64_t min_population = 0;
  std::uint64_t min_window_ms = 0;
  std::optional<double> epsilon_budget;
  std::vector<std::string> aggregates;

  double Draw(SplitMix64& rng, std::uint64_t event_index) const;
};

struct Scenario {
  std::string name;
  std::vector<AttributeModel> attributes;  // record order
  std::vector<policy::Query> queries;
  // Metadata regions assigned round-robin to streams.
  std::vector<std::string> regions{"north", "south"};
  // Events per stream per window, evenly spaced; unset draws a Poisson
  // insert process instead.
  std::optional<std::uint64_t> fixed_events;

  std::size_t Width() const;
  encoding::RecordEncoder Encoder() const;
  // Schema YAML derived from the attribute models.
  std::string SchemaYaml() const;
  policy::StreamSchema Schema() const;
};

// fitness, web (web_analytics), car (car_maintenance) or custom. Throws
// Error(kInvalidArgument) for other names.
Scenario Preset(std::string_view name);
std::vector<std::string> PresetNames();

struct SimConfig {
  std::uint64_t producers = 300;
  std::uint64_t controllers = 0;  // 0: one controller per producer
  std::uint64_t windows = 20;
  std::uint64_t window_ms = 10000;
  std::uint64_t grace_ms = 5000;
  double event_interval_ms = 500;  // mean gap of the Poisson insert process
  double latency_ms = 20;          // mean one-way link latency
  secagg::Protocol protocol = secagg::Protocol::kZeph;
  double alpha = 0.5;
  double delta = 1e-7;
  double controller_drop = 0;  // per-window probability a controller is silent
  double producer_drop = 0;    // per-window probability a border event is lost
  double message_drop = 0;     // per-message loss on every link
  double dp_sigma = 1;         // target std-dev of the summed DP noise
  std::uint64_t seed = 1;
  crypto::PrfKind prf = crypto::PrfKind::kAes128;
  unsigned modulus_bits = 64;
  bool parallel = false;
  // Wall-clock phase timings; off makes reports byte-identical across runs.
  bool record_timings = true;

  // Throws Error(kInvalidArgument) when grace_ms >= window_ms or a
  // probability is outside [0, 1].
  void Validate() const;
};

// YAML map of SimConfig field names; absent fields keep their defaults.
SimConfig ParseSimConfig(std::string_view yaml, SimConfig base = {});

struct AttributeOutput {
  std::string attribute;
  encoding::DecodedStats stats;
};

struct PlanOutput {
  std::string plan;     // query output name
  std::string subject;  // "population" or the stream id
  std::vector<std::optional<crypto::RingElement>> released;
  std::vector<AttributeOutput> attributes;
  bool shadow_equal = false;
};

struct WindowResult {
  std::uint64_t window = 0;
  std::string status = "ok";  // or the failure reason
  std::uint64_t members = 0;  // streams contributing to some output
  std::uint64_t controllers = 0;
  secagg::OpCounters ops;
  std::uint64_t bytes_producer = 0;
  std::uint64_t bytes_controller = 0;
  std::uint64_t bytes_server = 0;
  double t_encrypt = 0;  // seconds of wall time per phase
  double t_token = 0;
  double t_unmask = 0;
  double t_plain = 0;
  double overhead_factor = 0;  // encrypted path time / plaintext path time
  bool shadow_equal = false;
  std::vector<PlanOutput> outputs;
};

struct LinkStats {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t dropped = 0;
};

struct SimReport {
  std::string scenario;
  SimConfig config;
  std::vector<policy::TransformationPlan> plans;
  secagg::Protocol protocol = secagg::Protocol::kZeph;  // after fallback
  unsigned bits = 0;
  std::vector<WindowResult> windows;
  LinkStats producer_link;
  LinkStats controller_link;
  LinkStats server_link;

  std::size_t Succeeded() const;
  bool AllShadowEqual() const;
  double MeanOverhead() const;
};

// Fixed CSV header, one row per window.
std::string CsvHeader();
std::string ToCsv(const SimReport& report);
std::string ToJsonSummary(const SimReport& report);

// Plans every query of the scenario against generated annotations and runs
// the window protocol. Throws Error(kInfeasible) naming the failing
// constraint when a query is rejected.
SimReport RunScenario(const Scenario& scenario, const SimConfig& config);

// Wire sizes, in bytes, of the messages one window and one setup exchange.
struct BandwidthReport {
  std::uint64_t event_payload = 0;         // 16 + 8 * width
  std::uint64_t heartbeat = 0;
  std::uint64_t token = 0;                 // all slots released
  std::uint64_t masked_token = 0;
  std::uint64_t delta_per_change = 0;
  std::uint64_t setup_per_controller = 0;  // sends own key, receives N - 1
  std::uint64_t setup_total = 0;
};

BandwidthReport MeasureBandwidth(std::size_t width, std::uint64_t controllers);
std::uint64_t EventPayloadBytes(std::size_t width);

// Discrete-event scheduler: callbacks run in (time, insertion) order.
class EventQueue {
 public:
  void At(std::uint64_t time_ms, std::function<void()> fn);
  // Runs every event due at or before time_ms.
  void RunUntil(std::uint64_t time_ms);
  void RunAll();
  std::uint64_t now() const { return now_; }
  bool empty() const { return queue_.empty(); }

 private:
  struct Item {
    std::uint64_t time;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Item& o) const {
      return time != o.time ? time > o.time : seq > o.seq;
    }
  };
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
};

// Message delivery with sampled latency and loss, seeded per message so
// outcomes do not depend on evaluation order.
class Transport {
 public:
  Transport(EventQueue* queue, std::uint64_t seed, double latency_ms,
            double drop_probability);

  // Schedules deliver() after the sampled latency unless the message is
  // lost. Returns false on loss.
  bool Send(LinkStats* link, std::uint64_t bytes, std::uint64_t* byte_counter,
            std::function<void()> deliver);

 private:
  EventQueue* queue_;
  std::uint64_t seed_;
  double latency_ms_;
  double drop_;
  std::uint64_t next_id_ = 0;
};

}  // namespace privstream::sim

#endif  // PRIVSTREAM_SIM_H_
