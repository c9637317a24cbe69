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

#ifndef PRIVSTREAM_POLICY_H_
#define PRIVSTREAM_POLICY_H_

#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "privstream/bytes.h"
#include "privstream/encoding.h"
#include "privstream/secure_agg.h"
#include "privstream/token.h"

// Privacy options, stream annotations, queries, and the planner that turns
// a query into a transformation plan every involved controller will accept.
namespace privstream::policy {

// Ordered from most to least permissive; private permits nothing.
enum class OptionKind { kPublic, kStreamAggregate, kAggregate, kDpAggregate, kPrivate };

OptionKind ParseOptionKind(std::string_view name);
std::string_view OptionKindName(OptionKind kind);
// True when a stream annotated with `selected` may take part in a
// transformation that needs `required`.
bool Permits(OptionKind selected, OptionKind required);

struct PrivacyOption {
  OptionKind kind = OptionKind::kPrivate;
  std::uint64_t min_population = 0;
  std::uint64_t min_window_ms = 0;
  // Finest time resolution the option releases; windows below it are
  // refused just like windows below min_window_ms.
  std::uint64_t max_resolution_ms = 0;
  std::optional<double> epsilon_budget;

  std::uint64_t EffectiveMinWindow() const {
    return std::max(min_window_ms, max_resolution_ms);
  }
  bool operator==(const PrivacyOption&) const = default;
};

enum class MetadataType { kString, kNumber };

struct MetadataAttribute {
  std::string name;
  MetadataType type = MetadataType::kString;
};

struct StreamAttribute {
  std::string name;
  std::vector<std::string> aggregates;  // functions queries may request
  std::optional<encoding::EncodingSpec> encoding;
  std::vector<PrivacyOption> options;

  const PrivacyOption* Option(OptionKind kind) const;
  bool Supports(std::string_view aggregate) const;
};

struct StreamSchema {
  std::string name;
  std::vector<MetadataAttribute> metadata;
  std::vector<StreamAttribute> attributes;

  const StreamAttribute* Attribute(std::string_view name) const;
  const MetadataAttribute* Metadata(std::string_view name) const;
};

// Throws Error(kParse) on malformed documents, unknown option names, a
// dp-aggregate option without epsilon, duplicate names, or an attribute
// without options.
StreamSchema ParseSchema(std::string_view yaml);
StreamSchema LoadSchema(const std::string& path);

struct StreamAnnotation {
  std::string stream_id;
  std::string schema;
  secagg::PartyId owner;
  std::map<std::string, OptionKind> selected;  // per stream attribute
  std::map<std::string, std::string> metadata;

  // Throws Error(kInvalidArgument) when a selection is not declared by the
  // schema or a metadata value is missing or mistyped.
  void Validate(const StreamSchema& schema) const;
};

StreamAnnotation ParseAnnotation(std::string_view yaml);

struct Predicate {
  std::string attribute;
  std::optional<std::string> equals;
  std::optional<double> min;  // inclusive
  std::optional<double> max;  // inclusive

  bool Matches(const std::map<std::string, std::string>& metadata) const;
  bool operator==(const Predicate&) const = default;
};

struct Selection {
  std::string attribute;
  std::string aggregate;
  bool operator==(const Selection&) const = default;
};

enum class Scope { kPopulation, kPerStream };

struct Query {
  std::string output;
  std::vector<Selection> select;
  std::vector<Predicate> where;
  std::uint64_t window_ms = 0;
  Scope scope = Scope::kPopulation;
  std::uint64_t max_population = std::numeric_limits<std::uint64_t>::max();
  std::optional<double> dp_epsilon;  // cost per released window

  // Option level every member must permit for this query.
  OptionKind Required() const;
  void Validate() const;
  bool operator==(const Query&) const = default;
};

// Durations: an integer in milliseconds or a number with ms, s, m, h, d.
std::uint64_t ParseDurationMs(std::string_view text);
Query ParseQuery(std::string_view yaml);
Query LoadQuery(const std::string& path);

enum class Operation { kWindowAggregate, kCrossStreamAggregate, kDpNoise };
std::string_view OperationName(Operation op);

struct TransformationPlan {
  Digest id;
  std::uint64_t sequence = 0;
  Query query;
  std::vector<std::string> members;  // sorted
  std::vector<secagg::PartyId> controllers;  // distinct owners, sorted
  // Per selected attribute; identical for every member stream.
  std::map<std::string, std::vector<token::ElementDirective>> directives;
  std::vector<Operation> chain;
  // Members that may drop out of a round before the result violates the
  // population constraint.
  std::uint64_t fault_tolerance = 0;
  std::uint64_t issued_at_ms = 0;

  bool IsDp() const { return query.dp_epsilon.has_value(); }
};

// Canonical text the plan id hashes; members and controllers in order.
std::string CanonicalPlanText(const TransformationPlan& plan);
Digest ComputePlanId(const TransformationPlan& plan);

// Element directives for one aggregate over an encoding: sum releases the
// value element only, count the count element, avg both, and everything
// else releases the whole vector.
std::vector<token::ElementDirective> DirectivesFor(
    const std::optional<encoding::EncodingSpec>& encoding,
    std::string_view aggregate);

struct Rejection {
  // no_match, unsupported_aggregate, option, min_window, reserved,
  // epsilon_budget, min_population.
  std::string constraint;
  std::string message;
};

using PlanResult = std::variant<TransformationPlan, Rejection>;

// Which transformations hold which (stream, attribute) pairs. Non-DP plans
// are exclusive; DP plans may overlap while their costs fit the budget.
class ReservationLedger {
 public:
  struct Holding {
    std::set<Digest> exclusive;
    std::map<Digest, double> dp_costs;
    double DpTotal() const;
  };

  const Holding* Find(const std::string& stream, const std::string& attribute) const;
  // True when the plan may hold the pair given the option's epsilon budget.
  bool CanHold(const std::string& stream, const std::string& attribute,
               bool dp, double cost, double budget) const;
  void Hold(const std::string& stream, const std::string& attribute,
            const Digest& plan, bool dp, double cost);
  void Drop(const Digest& plan);

 private:
  std::map<std::pair<std::string, std::string>, Holding> held_;
};

class PolicyManager {
 public:
  struct Options {
    // Reservations older than this are released by Expire; 0 keeps them
    // until an explicit release.
    std::uint64_t max_lifetime_ms = 0;
  };

  explicit PolicyManager(StreamSchema schema);
  PolicyManager(StreamSchema schema, Options options);

  // Throws Error(kInvalidArgument) for annotations of another schema or a
  // duplicate stream id.
  void AddStream(StreamAnnotation annotation);
  void RemoveStream(const std::string& stream_id);
  std::size_t stream_count() const;
  const StreamSchema& schema() const { return schema_; }

  // Runs the three planning passes and reserves the members on success.
  PlanResult Plan(const Query& query, std::uint64_t now_ms = 0);

  // Throws Error(kUnknownPlan) for ids never issued; releasing twice is a
  // no-op.
  void Release(const Digest& plan_id);
  // Releases plans older than max_lifetime_ms; returns their ids.
  std::vector<Digest> Expire(std::uint64_t now_ms);
  std::size_t active_plans() const;

 private:
  StreamSchema schema_;
  Options options_;
  mutable std::mutex mu_;
  std::map<std::string, StreamAnnotation> streams_;
  ReservationLedger ledger_;
  std::map<Digest, TransformationPlan> active_;
  std::set<Digest> released_;
  std::uint64_t next_sequence_ = 0;
};

struct Verdict {
  bool accepted = false;
  std::string reason;  // constraint name when refused
  static Verdict Accept() { return {true, ""}; }
  static Verdict Refuse(std::string why) { return {false, std::move(why)}; }
};

// Controller-side compliance: re-derives every check for the streams this
// controller owns, independently of the planner.
class PrivacyController {
 public:
  PrivacyController(secagg::PartyId id, StreamSchema schema);

  const secagg::PartyId& id() const { return id_; }
  // The stream's owner must be this controller.
  void AddStream(StreamAnnotation annotation);
  bool Owns(const std::string& stream_id) const;

  // Pure check. Refusal reasons: plan_id, unknown_identity, operations,
  // max_population, filter, unsupported_aggregate, option, min_window,
  // min_population, noise, reserved, epsilon_budget.
  Verdict Verify(const TransformationPlan& plan,
                 const secagg::IdentityRegistry& registry) const;
  // Verify, then record the plan's reservations locally.
  Verdict Commit(const TransformationPlan& plan,
                 const secagg::IdentityRegistry& registry);
  void Release(const Digest& plan_id);

  // Runtime budget of a (stream, attribute) pair, created on first use from
  // the selected option's epsilon; unlimited when the option has none.
  token::PrivacyBudget& Budget(const std::string& stream_id,
                               const std::string& attribute);

 private:
  secagg::PartyId id_;
  StreamSchema schema_;
  std::map<std::string, StreamAnnotation> streams_;
  ReservationLedger ledger_;
  std::map<std::pair<std::string, std::string>, token::PrivacyBudget> budgets_;
};

}  // namespace privstream::policy

#endif  // PRIVSTREAM_POLICY_H_
