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

#include <cmath>
#include <sstream>

#include "privstream/errors.h"
#include "privstream/sim.h"

namespace privstream::sim {
namespace {

using encoding::EncodingSpec;
using encoding::Kind;
using policy::OptionKind;

std::vector<std::string> AggregatesFor(Kind kind) {
  switch (kind) {
    case Kind::kSum:
    case Kind::kPredicateThreshold:
      return {"sum"};
    case Kind::kSumCount:
      return {"sum", "count", "avg"};
    case Kind::kVariance:
      return {"sum", "count", "avg", "var"};
    case Kind::kHistogram:
    case Kind::kOneHot:
      return {"histogram", "min", "max", "mode", "median", "percentile"};
  }
  return {};
}

AttributeModel Model(std::string name, EncodingSpec spec, double lo, double hi,
                     bool integer = false) {
  AttributeModel a;
  a.name = std::move(name);
  a.spec = spec;
  a.lo = lo;
  a.hi = hi;
  a.integer = integer;
  a.aggregates = AggregatesFor(spec.kind);
  return a;
}

AttributeModel Sum(std::string name, double lo, double hi) {
  return Model(std::move(name), {.kind = Kind::kSum}, lo, hi);
}

AttributeModel SumCount(std::string name, double lo, double hi) {
  return Model(std::move(name), {.kind = Kind::kSumCount}, lo, hi);
}

AttributeModel Variance(std::string name, double lo, double hi) {
  return Model(std::move(name), {.kind = Kind::kVariance}, lo, hi);
}

AttributeModel Predicate(std::string name, double threshold, double lo, double hi) {
  return Model(std::move(name), {.kind = Kind::kPredicateThreshold, .threshold = threshold},
               lo, hi);
}

AttributeModel Histogram(std::string name, double min, double max, double bin_width) {
  return Model(std::move(name),
               {.kind = Kind::kHistogram, .domain_min = min, .domain_max = max,
                .bin_width = bin_width},
               min, max);
}

AttributeModel OneHot(std::string name, int min, int max) {
  return Model(std::move(name),
               {.kind = Kind::kOneHot, .domain_min = static_cast<double>(min),
                .domain_max = static_cast<double>(max)},
               min, max + 1, /*integer=*/true);
}

policy::Query MakeQuery(std::string output, std::vector<policy::Selection> select,
                        policy::Scope scope, std::uint64_t window_ms = 10000) {
  policy::Query q;
  q.output = std::move(output);
  q.select = std::move(select);
  q.scope = scope;
  q.window_ms = window_ms;
  return q;
}

void SelectAll(Scenario& s, OptionKind kind, std::uint64_t min_population,
               std::optional<double> epsilon = std::nullopt) {
  for (auto& a : s.attributes) {
    a.selected = kind;
    a.min_population = min_population;
    a.min_window_ms = 1000;
    a.epsilon_budget = epsilon;
  }
}

AttributeModel& Find(Scenario& s, std::string_view name) {
  for (auto& a : s.attributes) {
    if (a.name == name) return a;
  }
  throw Error(ErrorCode::kInvalidArgument, "no attribute " + std::string(name));
}

// Activity tracker: 18 attributes, 683 encoded values. The query asks for
// the population's average heart rate alongside 5 m altitude buckets.
Scenario Fitness() {
  Scenario s;
  s.name = "fitness";
  s.attributes = {
      Variance("heart_rate", 50, 190),
      Histogram("altitude", 0, 1500, 5),
      OneHot("hr_zone", 0, 4),
      Variance("speed", 0, 40),
      Variance("cadence", 40, 120),
      Variance("power", 0, 400),
      Histogram("temperature", -20, 45, 1),
      Histogram("humidity", 0, 100, 5),
      Sum("distance", 0, 50),
      Sum("calories", 0, 20),
      Sum("ascent", 0, 5),
      Sum("descent", 0, 5),
      SumCount("duration", 0, 10),
      OneHot("sport_type", 0, 19),
      OneHot("weather", 0, 9),
      Predicate("hr_above", 150, 50, 190),
      Histogram("hr_distribution", 40, 220, 1),
      Histogram("lap_time", 0, 630, 10),
  };
  SelectAll(s, OptionKind::kAggregate, 100);
  s.queries = {MakeQuery("hr_by_altitude",
                         {{"heart_rate", "avg"}, {"altitude", "histogram"}},
                         policy::Scope::kPopulation)};
  s.queries[0].max_population = 1000;
  return s;
}

// Web analytics: 24 attributes, 956 encoded values, released only as DP
// population aggregates.
Scenario Web() {
  Scenario s;
  s.name = "web";
  s.attributes = {
      OneHot("page_category", 0, 49),
      OneHot("referrer", 0, 29),
      OneHot("browser", 0, 9),
      OneHot("os", 0, 9),
      OneHot("device_type", 0, 4),
      OneHot("country", 0, 99),
      OneHot("language", 0, 39),
      Histogram("load_time_ms", 0, 5000, 25),
      Histogram("time_on_page_s", 0, 600, 5),
      Histogram("scroll_depth", 0, 100, 1),
      Variance("clicks", 0, 30),
      Variance("session_length_s", 0, 1800),
      Predicate("bounce", 10, 0, 60),
      Histogram("screen_width", 0, 4000, 50),
      OneHot("hour_of_day", 0, 23),
      OneHot("day_of_week", 0, 6),
      SumCount("errors", 0, 3),
      Sum("bytes_down_kb", 0, 5000),
      Sum("bytes_up_kb", 0, 500),
      Sum("ads_seen", 0, 10),
      Histogram("video_watch_s", 0, 1200, 10),
      OneHot("search_topic", 0, 29),
      Variance("cart_value", 0, 300),
      OneHot("visit_count", 0, 13),
  };
  SelectAll(s, OptionKind::kDpAggregate, 100, 5.0);
  s.queries = {MakeQuery("traffic_dp",
                         {{"load_time_ms", "histogram"},
                          {"clicks", "var"},
                          {"country", "histogram"}},
                         policy::Scope::kPopulation)};
  s.queries[0].dp_epsilon = 0.1;
  return s;
}

// Vehicle telemetry: 23 attributes, 169 encoded values. Per-vehicle
// histograms and a fleet aggregate run side by side on disjoint attributes.
Scenario Car() {
  Scenario s;
  s.name = "car";
  s.attributes = {
      Variance("engine_temp", 70, 110),
      Variance("oil_pressure", 20, 80),
      Histogram("rpm", 0, 8000, 500),
      Histogram("speed", 0, 200, 10),
      Histogram("fuel_level", 0, 100, 10),
      Variance("battery_voltage", 11, 15),
      Variance("tire_pressure_fl", 28, 36),
      Variance("tire_pressure_fr", 28, 36),
      Variance("tire_pressure_rl", 28, 36),
      Variance("tire_pressure_rr", 28, 36),
      Variance("coolant_temp", 70, 110),
      Histogram("throttle", 0, 100, 5),
      SumCount("brake_events", 0, 3),
      OneHot("gear", 0, 7),
      OneHot("error_code", 0, 19),
      Sum("odometer_delta", 0, 1),
      Sum("trip_time", 0, 10),
      Histogram("ambient_temp", -20, 65, 5),
      Variance("accel_x", -5, 5),
      Variance("accel_y", -5, 5),
      Predicate("harsh_braking", 3, 0, 8),
      SumCount("idle_time", 0, 10),
      Histogram("engine_load", 0, 100, 5),
  };
  SelectAll(s, OptionKind::kAggregate, 50);
  Find(s, "rpm").selected = OptionKind::kStreamAggregate;
  Find(s, "speed").selected = OptionKind::kStreamAggregate;
  s.queries = {
      MakeQuery("vehicle_histograms", {{"rpm", "histogram"}, {"speed", "histogram"}},
                policy::Scope::kPerStream),
      MakeQuery("fleet_health",
                {{"engine_temp", "var"},
                 {"error_code", "histogram"},
                 {"fuel_level", "histogram"}},
                policy::Scope::kPopulation),
  };
  return s;
}

// One summed value replayed as 1..10 in every window.
Scenario Custom() {
  Scenario s;
  s.name = "custom";
  AttributeModel v = Sum("value", 0, 0);
  v.sequence = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  s.attributes = {v};
  SelectAll(s, OptionKind::kStreamAggregate, 0);
  s.queries = {MakeQuery("value_sum", {{"value", "sum"}}, policy::Scope::kPerStream)};
  s.fixed_events = v.sequence.size();
  return s;
}

}  // namespace

double AttributeModel::Draw(SplitMix64& rng, std::uint64_t event_index) const {
  if (!sequence.empty()) return sequence[event_index % sequence.size()];
  double v = lo + (hi - lo) * rng.Uniform();
  if (integer) v = std::min(std::floor(v), hi - 1);
  return v;
}

std::size_t Scenario::Width() const { return Encoder().Width(); }

encoding::RecordEncoder Scenario::Encoder() const {
  encoding::RecordEncoder enc;
  for (const auto& a : attributes) enc.AddField(a.name, a.spec);
  return enc;
}

std::string Scenario::SchemaYaml() const {
  std::ostringstream y;
  y.precision(17);
  y << "name: " << name << "\nmetadata:\n  - {name: region, type: string}\nattributes:\n";
  for (const auto& a : attributes) {
    y << "  - name: " << a.name << "\n    aggregates: [";
    for (std::size_t i = 0; i < a.aggregates.size(); ++i) {
      y << (i ? ", " : "") << a.aggregates[i];
    }
    y << "]\n    encoding: {kind: " << encoding::KindName(a.spec.kind)
      << ", min: " << a.spec.domain_min << ", max: " << a.spec.domain_max
      << ", bin_width: " << a.spec.bin_width << ", threshold: " << a.spec.threshold
      << ", scale: " << a.spec.scale << "}\n    options:\n";
    const std::string limits = ", min_population: " + std::to_string(a.min_population) +
                               ", min_window: " + std::to_string(a.min_window_ms) + "ms";
    y << "      - {kind: stream-aggregate" << limits << "}\n"
      << "      - {kind: aggregate" << limits << "}\n"
      << "      - {kind: dp-aggregate" << limits
      << ", epsilon: " << a.epsilon_budget.value_or(10.0) << "}\n"
      << "      - private\n";
  }
  return y.str();
}

policy::StreamSchema Scenario::Schema() const { return policy::ParseSchema(SchemaYaml()); }

Scenario Preset(std::string_view name) {
  if (name == "fitness") return Fitness();
  if (name == "web" || name == "web_analytics") return Web();
  if (name == "car" || name == "car_maintenance") return Car();
  if (name == "custom") return Custom();
  throw Error(ErrorCode::kInvalidArgument, "unknown scenario '" + std::string(name) + "'");
}

std::vector<std::string> PresetNames() { return {"fitness", "web", "car", "custom"}; }

}  // namespace privstream::sim
