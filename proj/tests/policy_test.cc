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

#include "privstream/policy.h"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "oracles.h"
#include "privstream/errors.h"

namespace privstream::policy {
namespace {

using token::ElementDirective;

constexpr char kSchema[] = R"(
name: traffic
metadata:
  - {name: region, type: string}
  - {name: lanes, type: number}
attributes:
  - name: speed
    aggregates: [sum, count, avg, var]
    encoding: {kind: variance, scale: 10}
    options:
      - {kind: aggregate, min_population: 3, min_window: 1m}
      - {kind: dp-aggregate, min_population: 2, epsilon: 1.0}
      - {kind: stream-aggregate, min_window: 1s}
  - name: lane
    aggregates: [hist]
    encoding: {kind: histogram, min: 0, max: 4, bin_width: 1}
    options: [public, private]
)";

std::optional<ErrorCode> CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

class PlannerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    schema_ = ParseSchema(kSchema);
    manager_.emplace(schema_);
    for (const char* name : {"ctl-a", "ctl-b"}) {
      auto id = secagg::PartyId::FromName(name);
      registry_.Register(id);
      controllers_.emplace_back(id, schema_);
    }
    for (int i = 0; i < 6; ++i) {
      StreamAnnotation a;
      a.stream_id = "s" + std::to_string(i);
      a.schema = "traffic";
      a.owner = controllers_[i % 2].id();
      a.metadata = {{"region", i < 4 ? "north" : "south"}, {"lanes", std::to_string(i + 1)}};
      a.selected["speed"] = i < 4 ? OptionKind::kAggregate : OptionKind::kDpAggregate;
      a.selected["lane"] = i == 5 ? OptionKind::kPrivate : OptionKind::kPublic;
      manager_->AddStream(a);
      controllers_[i % 2].AddStream(a);
    }
  }

  Query Population(std::string attribute, std::string aggregate, std::string region) {
    Query q;
    q.output = "out";
    q.select = {{attribute, aggregate}};
    q.where = {{"region", region, {}, {}}};
    q.window_ms = 300000;
    return q;
  }

  TransformationPlan MustPlan(const Query& q) {
    auto r = manager_->Plan(q);
    if (auto* rej = std::get_if<Rejection>(&r)) {
      ADD_FAILURE() << "rejected: " << rej->constraint << " " << rej->message;
      return {};
    }
    return std::get<TransformationPlan>(r);
  }

  std::string RejectionOf(const Query& q) {
    auto r = manager_->Plan(q);
    if (auto* rej = std::get_if<Rejection>(&r)) return rej->constraint;
    return "";
  }

  void CommitAll(const TransformationPlan& plan) {
    for (auto& c : controllers_) {
      if (std::find(plan.controllers.begin(), plan.controllers.end(), c.id()) !=
          plan.controllers.end()) {
        auto v = c.Commit(plan, registry_);
        EXPECT_TRUE(v.accepted) << v.reason;
      }
    }
  }

  std::string Refusal(const TransformationPlan& plan, std::size_t controller = 0) {
    return controllers_[controller].Verify(plan, registry_).reason;
  }

  StreamSchema schema_;
  std::optional<PolicyManager> manager_;
  secagg::IdentityRegistry registry_;
  std::vector<PrivacyController> controllers_;
};

TEST(SchemaParseTest, ReadsOptionsAndEncodings) {
  StreamSchema s = ParseSchema(kSchema);
  ASSERT_EQ(s.attributes.size(), 2u);
  const StreamAttribute* speed = s.Attribute("speed");
  ASSERT_NE(speed, nullptr);
  EXPECT_EQ(speed->encoding->kind, encoding::Kind::kVariance);
  EXPECT_EQ(speed->encoding->scale, 10);
  EXPECT_EQ(speed->Option(OptionKind::kAggregate)->min_window_ms, 60000u);
  EXPECT_EQ(speed->Option(OptionKind::kAggregate)->min_population, 3u);
  EXPECT_EQ(*speed->Option(OptionKind::kDpAggregate)->epsilon_budget, 1.0);
  EXPECT_EQ(speed->Option(OptionKind::kPublic), nullptr);
  EXPECT_TRUE(speed->Supports("var"));
  EXPECT_FALSE(speed->Supports("median"));
  EXPECT_EQ(s.Metadata("lanes")->type, MetadataType::kNumber);
  EXPECT_EQ(s.Attribute("lane")->options.size(), 2u);
}

TEST(SchemaParseTest, RejectsMalformedDocuments) {
  EXPECT_EQ(CodeOf([] { ParseSchema("name: x\nattributes: [{name: a, options: [dp-aggregate]}]"); }),
            ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseSchema("name: x\nattributes: [{name: a, options: [public, public]}]"); }),
            ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseSchema("name: x\nattributes: [{name: a}]"); }), ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseSchema("name: x\nattributes: [{name: a, options: [secret]}]"); }),
            ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseSchema("attributes: [{name: a, options: [public]}]"); }),
            ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseSchema("name: [unclosed"); }), ErrorCode::kParse);
}

TEST(AnnotationParseTest, OwnerByNameOrHex) {
  auto a = ParseAnnotation(
      "stream_id: s\nschema: traffic\nowner: ctl-a\noptions: {speed: aggregate}\n"
      "metadata: {region: north, lanes: 2}");
  EXPECT_EQ(a.owner, secagg::PartyId::FromName("ctl-a"));
  EXPECT_EQ(a.selected.at("speed"), OptionKind::kAggregate);
  EXPECT_EQ(a.metadata.at("lanes"), "2");
  EXPECT_NO_THROW(a.Validate(ParseSchema(kSchema)));

  auto hex = ParseAnnotation("stream_id: s\nschema: traffic\nowner: " +
                             secagg::PartyId::FromName("x").Hex());
  EXPECT_EQ(hex.owner, secagg::PartyId::FromName("x"));
}

TEST(AnnotationParseTest, ValidateChecksOptionsAndMetadata) {
  StreamSchema s = ParseSchema(kSchema);
  StreamAnnotation a;
  a.stream_id = "s";
  a.schema = "traffic";
  a.metadata = {{"region", "north"}, {"lanes", "2"}};
  a.selected["speed"] = OptionKind::kPublic;  // not offered
  EXPECT_EQ(CodeOf([&] { a.Validate(s); }), ErrorCode::kInvalidArgument);
  a.selected["speed"] = OptionKind::kAggregate;
  a.metadata["lanes"] = "two";
  EXPECT_EQ(CodeOf([&] { a.Validate(s); }), ErrorCode::kInvalidArgument);
  a.metadata.erase("lanes");
  EXPECT_EQ(CodeOf([&] { a.Validate(s); }), ErrorCode::kInvalidArgument);
  a.metadata["lanes"] = "3";
  a.schema = "weather";
  EXPECT_EQ(CodeOf([&] { a.Validate(s); }), ErrorCode::kInvalidArgument);
}

TEST(QueryParseTest, ReadsAllFields) {
  Query q = ParseQuery(R"(
output: north_speed
select: [{attribute: speed, aggregate: avg}]
where: [{attribute: region, eq: north}, {attribute: lanes, min: 2, max: 3}]
window: 5m
scope: population
max_population: 10
dp: {epsilon: 0.5}
)");
  EXPECT_EQ(q.output, "north_speed");
  EXPECT_EQ(q.window_ms, 300000u);
  EXPECT_EQ(q.max_population, 10u);
  EXPECT_EQ(*q.dp_epsilon, 0.5);
  ASSERT_EQ(q.where.size(), 2u);
  EXPECT_TRUE(q.where[1].Matches({{"lanes", "3"}}));
  EXPECT_FALSE(q.where[1].Matches({{"lanes", "4"}}));
  EXPECT_FALSE(q.where[1].Matches({{"lanes", "many"}}));
  EXPECT_EQ(q.Required(), OptionKind::kDpAggregate);
}

TEST(QueryParseTest, RejectsInvalidQueries) {
  EXPECT_EQ(CodeOf([] {
              ParseQuery("select: [{attribute: a, aggregate: sum}]\nwindow: 1s\n"
                         "scope: per_stream\ndp: {epsilon: 1}");
            }),
            ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] {
              ParseQuery("select: [{attribute: a, aggregate: sum}]\nwindow: 1s\nscope: global");
            }),
            ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseQuery("select: []\nwindow: 1s"); }), ErrorCode::kParse);
  EXPECT_EQ(CodeOf([] { ParseQuery("select: [{attribute: a, aggregate: sum}]\nwindow: 0"); }),
            ErrorCode::kParse);
}

TEST(QueryParseTest, DurationUnits) {
  EXPECT_EQ(ParseDurationMs("250"), 250u);
  EXPECT_EQ(ParseDurationMs("250ms"), 250u);
  EXPECT_EQ(ParseDurationMs("1.5s"), 1500u);
  EXPECT_EQ(ParseDurationMs("2m"), 120000u);
  EXPECT_EQ(ParseDurationMs("1h"), 3600000u);
  EXPECT_EQ(ParseDurationMs("1d"), 86400000u);
  EXPECT_THROW(ParseDurationMs("5 fortnights"), Error);
}

TEST(OptionTest, PermissivenessOrder) {
  EXPECT_TRUE(Permits(OptionKind::kPublic, OptionKind::kStreamAggregate));
  EXPECT_TRUE(Permits(OptionKind::kStreamAggregate, OptionKind::kAggregate));
  EXPECT_TRUE(Permits(OptionKind::kAggregate, OptionKind::kDpAggregate));
  EXPECT_FALSE(Permits(OptionKind::kAggregate, OptionKind::kStreamAggregate));
  EXPECT_FALSE(Permits(OptionKind::kDpAggregate, OptionKind::kAggregate));
  EXPECT_FALSE(Permits(OptionKind::kPrivate, OptionKind::kDpAggregate));
  for (auto k : {OptionKind::kPublic, OptionKind::kStreamAggregate, OptionKind::kAggregate,
                 OptionKind::kDpAggregate, OptionKind::kPrivate}) {
    EXPECT_EQ(ParseOptionKind(OptionKindName(k)), k);
  }
}

TEST(DirectivesTest, AggregateSelectsElements) {
  auto var = encoding::EncodingSpec{.kind = encoding::Kind::kVariance};
  using D = ElementDirective;
  EXPECT_EQ(DirectivesFor(var, "sum"), (std::vector<D>{D::Release(), D::Withhold(), D::Withhold()}));
  EXPECT_EQ(DirectivesFor(var, "count"), (std::vector<D>{D::Withhold(), D::Withhold(), D::Release()}));
  EXPECT_EQ(DirectivesFor(var, "avg"), (std::vector<D>{D::Release(), D::Withhold(), D::Release()}));
  EXPECT_EQ(DirectivesFor(var, "var"), std::vector<D>(3, D::Release()));
  auto hist = encoding::EncodingSpec{.kind = encoding::Kind::kHistogram, .domain_min = 0,
                                     .domain_max = 4, .bin_width = 1};
  EXPECT_EQ(DirectivesFor(hist, "hist").size(), 4u);
  EXPECT_EQ(DirectivesFor(std::nullopt, "sum"), std::vector<D>{D::Release()});
}

TEST_F(PlannerTest, PopulationPlanCoversCompliantStreams) {
  TransformationPlan plan = MustPlan(Population("speed", "avg", "north"));
  EXPECT_EQ(plan.members, (std::vector<std::string>{"s0", "s1", "s2", "s3"}));
  EXPECT_EQ(plan.controllers.size(), 2u);
  EXPECT_EQ(plan.chain, (std::vector<Operation>{Operation::kWindowAggregate,
                                                Operation::kCrossStreamAggregate}));
  EXPECT_EQ(plan.fault_tolerance, 1u);  // four members, floor three
  EXPECT_EQ(plan.directives.at("speed"), DirectivesFor(schema_.Attribute("speed")->encoding, "avg"));
  EXPECT_EQ(plan.id, ComputePlanId(plan));
  CommitAll(plan);
}

TEST_F(PlannerTest, NonDpReservationsAreExclusive) {
  TransformationPlan plan = MustPlan(Population("speed", "avg", "north"));
  CommitAll(plan);
  EXPECT_EQ(RejectionOf(Population("speed", "sum", "north")), "reserved");
  // A controller refuses a plan overlapping its own reservations.
  TransformationPlan again = plan;
  again.sequence = 99;
  again.id = ComputePlanId(again);
  EXPECT_EQ(Refusal(again), "reserved");

  manager_->Release(plan.id);
  for (auto& c : controllers_) c.Release(plan.id);
  EXPECT_NO_THROW(manager_->Release(plan.id));
  EXPECT_EQ(RejectionOf(Population("speed", "sum", "north")), "");
  EXPECT_EQ(CodeOf([&] { manager_->Release(Sha256(std::string_view("never"))); }),
            ErrorCode::kUnknownPlan);
}

TEST_F(PlannerTest, DpPlansShareBudget) {
  Query q = Population("speed", "sum", "south");
  q.dp_epsilon = 0.4;
  TransformationPlan first = MustPlan(q);
  EXPECT_EQ(first.members, (std::vector<std::string>{"s4", "s5"}));
  EXPECT_EQ(first.chain.back(), Operation::kDpNoise);
  CommitAll(first);
  TransformationPlan second = MustPlan(q);
  CommitAll(second);
  EXPECT_EQ(RejectionOf(q), "epsilon_budget");
  q.dp_epsilon = 0.2;
  TransformationPlan third = MustPlan(q);
  CommitAll(third);

  // Non-dp queries cannot share the pairs dp plans hold.
  Query plain = Population("speed", "sum", "south");
  EXPECT_EQ(RejectionOf(plain), "option");
}

TEST_F(PlannerTest, RejectionReasons) {
  Query short_window = Population("speed", "sum", "north");
  short_window.window_ms = 10000;
  EXPECT_EQ(RejectionOf(short_window), "min_window");

  Query per_stream = Population("speed", "sum", "south");
  per_stream.scope = Scope::kPerStream;
  EXPECT_EQ(RejectionOf(per_stream), "option");

  Query capped = Population("speed", "sum", "north");
  capped.max_population = 2;
  EXPECT_EQ(RejectionOf(capped), "min_population");

  EXPECT_EQ(RejectionOf(Population("speed", "median", "north")), "unsupported_aggregate");
  EXPECT_EQ(RejectionOf(Population("speed", "sum", "west")), "no_match");
  EXPECT_EQ(manager_->active_plans(), 0u);
}

TEST_F(PlannerTest, PerStreamPlanSkipsCrossStreamStep) {
  Query q;
  q.output = "lanes";
  q.select = {{"lane", "hist"}};
  q.where = {{"lanes", {}, {}, 6.0}};
  q.window_ms = 1000;
  q.scope = Scope::kPerStream;
  TransformationPlan plan = MustPlan(q);
  // s5 keeps its lane private.
  EXPECT_EQ(plan.members.size(), 5u);
  EXPECT_EQ(plan.chain, std::vector<Operation>{Operation::kWindowAggregate});
  EXPECT_EQ(plan.fault_tolerance, 5u);
  CommitAll(plan);
}

TEST_F(PlannerTest, PopulationCapIsRespected) {
  Query q = Population("speed", "sum", "north");
  q.max_population = 3;
  TransformationPlan plan = MustPlan(q);
  EXPECT_EQ(plan.members.size(), 3u);
  EXPECT_EQ(plan.fault_tolerance, 0u);
  CommitAll(plan);
}

TEST_F(PlannerTest, ControllersRefuseTamperedPlans) {
  TransformationPlan plan = MustPlan(Population("speed", "avg", "north"));
  EXPECT_TRUE(controllers_[0].Verify(plan, registry_).accepted);

  TransformationPlan bad_id = plan;
  bad_id.id.bytes[5] ^= 0x10;
  EXPECT_EQ(Refusal(bad_id), "plan_id");

  TransformationPlan noisy = plan;
  noisy.directives["speed"][0] = ElementDirective::Perturb(2);
  noisy.id = ComputePlanId(noisy);
  EXPECT_EQ(Refusal(noisy), "noise");

  TransformationPlan leaky = plan;
  leaky.directives["speed"] = DirectivesFor(schema_.Attribute("speed")->encoding, "var");
  leaky.id = ComputePlanId(leaky);
  EXPECT_EQ(Refusal(leaky), "noise");

  TransformationPlan widened = plan;
  widened.members.push_back("s4");
  widened.id = ComputePlanId(widened);
  EXPECT_EQ(Refusal(widened), "filter");

  TransformationPlan capped = plan;
  capped.query.max_population = 2;
  capped.id = ComputePlanId(capped);
  EXPECT_EQ(Refusal(capped), "max_population");

  TransformationPlan no_cross = plan;
  no_cross.chain.pop_back();
  no_cross.id = ComputePlanId(no_cross);
  EXPECT_EQ(Refusal(no_cross), "operations");

  secagg::IdentityRegistry partial;
  partial.Register(controllers_[0].id());
  EXPECT_EQ(controllers_[0].Verify(plan, partial).reason, "unknown_identity");

  TransformationPlan shrunk = plan;
  shrunk.members = {"s0", "s1"};
  shrunk.id = ComputePlanId(shrunk);
  EXPECT_EQ(Refusal(shrunk), "min_population");
}

TEST_F(PlannerTest, ExpireReleasesOldPlans) {
  PolicyManager m(schema_, {.max_lifetime_ms = 1000});
  for (int i = 0; i < 4; ++i) {
    StreamAnnotation a;
    a.stream_id = "t" + std::to_string(i);
    a.schema = "traffic";
    a.owner = controllers_[0].id();
    a.metadata = {{"region", "north"}, {"lanes", "1"}};
    a.selected["speed"] = OptionKind::kAggregate;
    m.AddStream(a);
  }
  auto r = m.Plan(Population("speed", "sum", "north"), 100);
  ASSERT_TRUE(std::holds_alternative<TransformationPlan>(r));
  EXPECT_TRUE(m.Expire(1099).empty());
  EXPECT_EQ(m.Expire(1100).size(), 1u);
  EXPECT_EQ(m.active_plans(), 0u);
  EXPECT_TRUE(std::holds_alternative<TransformationPlan>(m.Plan(Population("speed", "sum", "north"))));
}

TEST_F(PlannerTest, ControllerBudgetFollowsOption) {
  EXPECT_DOUBLE_EQ(controllers_[0].Budget("s4", "speed").remaining(), 1.0);
  EXPECT_TRUE(std::isinf(controllers_[0].Budget("s0", "speed").remaining()));
  EXPECT_THROW(controllers_[0].Budget("s1", "speed"), Error);
}

TEST_F(PlannerTest, DuplicateStreamsAreRejected) {
  StreamAnnotation a;
  a.stream_id = "s0";
  a.schema = "traffic";
  a.metadata = {{"region", "north"}, {"lanes", "1"}};
  EXPECT_EQ(CodeOf([&] { manager_->AddStream(a); }), ErrorCode::kInvalidArgument);
  a.stream_id = "elsewhere";
  a.owner = controllers_[1].id();
  EXPECT_THROW(controllers_[0].AddStream(a), Error);
}

TEST(PlanIdTest, CanonicalTextCoversMembers) {
  TransformationPlan a;
  a.query.select = {{"x", "sum"}};
  a.query.window_ms = 1;
  a.members = {"s1"};
  TransformationPlan b = a;
  b.members = {"s2"};
  EXPECT_NE(ComputePlanId(a), ComputePlanId(b));
  EXPECT_EQ(ComputePlanId(a), ComputePlanId(a));
  EXPECT_NE(CanonicalPlanText(a).find("s1"), std::string::npos);
}

TEST(PlannerAgreementTest, RandomFixtures) {
  oracle::AgreementStats total;
  for (std::uint64_t seed = 0; seed < 60; ++seed) total += oracle::RunPlannerFixture(seed);
  for (const auto& f : total.failures) ADD_FAILURE() << f;
  EXPECT_EQ(total.fixtures, 60u);
  EXPECT_GT(total.plans, 10u);
  EXPECT_GT(total.rejections, 10u);
  EXPECT_GT(total.mutations_refused, total.plans);
}

}  // namespace
}  // namespace privstream::policy
