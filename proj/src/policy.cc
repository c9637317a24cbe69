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

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "privstream/errors.h"

namespace privstream::policy {
namespace {

using encoding::EncodingSpec;
using token::ElementDirective;

constexpr double kUnlimited = std::numeric_limits<double>::infinity();

[[noreturn]] void ParseFail(const std::string& what) { throw Error(ErrorCode::kParse, what); }

YAML::Node LoadYaml(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    ParseFail(e.what());
  }
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T Required(const YAML::Node& node, const char* key, const std::string& where) {
  if (!node.IsMap() || !node[key]) ParseFail(where + ": missing '" + key + "'");
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    ParseFail(where + ": bad value for '" + key + "'");
  }
}

template <typename T>
std::optional<T> Optional(const YAML::Node& node, const char* key,
                          const std::string& where) {
  if (!node.IsMap() || !node[key]) return std::nullopt;
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    ParseFail(where + ": bad value for '" + key + "'");
  }
}

std::uint64_t DurationField(const YAML::Node& node, const char* key,
                            const std::string& where) {
  auto text = Optional<std::string>(node, key, where);
  return text ? ParseDurationMs(*text) : 0;
}

std::optional<double> ParseNumber(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

PrivacyOption ParseOption(const YAML::Node& node, const std::string& where) {
  PrivacyOption opt;
  try {
    opt.kind = ParseOptionKind(Required<std::string>(node, "kind", where));
  } catch (const Error& e) {
    ParseFail(where + ": " + e.what());
  }
  opt.min_population = Optional<std::uint64_t>(node, "min_population", where).value_or(0);
  opt.min_window_ms = DurationField(node, "min_window", where);
  opt.max_resolution_ms = DurationField(node, "max_resolution", where);
  opt.epsilon_budget = Optional<double>(node, "epsilon", where);
  if (opt.kind == OptionKind::kDpAggregate && !opt.epsilon_budget) {
    ParseFail(where + ": dp-aggregate option needs an epsilon budget");
  }
  if (opt.epsilon_budget && !(*opt.epsilon_budget >= 0)) {
    ParseFail(where + ": epsilon budget must be non-negative");
  }
  return opt;
}

EncodingSpec ParseEncoding(const YAML::Node& node, const std::string& where) {
  EncodingSpec spec;
  try {
    spec.kind = encoding::ParseKind(Required<std::string>(node, "kind", where));
  } catch (const Error& e) {
    ParseFail(where + ": " + e.what());
  }
  spec.domain_min = Optional<double>(node, "min", where).value_or(0);
  spec.domain_max = Optional<double>(node, "max", where).value_or(0);
  spec.bin_width = Optional<double>(node, "bin_width", where).value_or(1);
  spec.threshold = Optional<double>(node, "threshold", where).value_or(0);
  spec.scale = Optional<double>(node, "scale", where).value_or(100);
  spec.non_negative = Optional<bool>(node, "non_negative", where).value_or(false);
  try {
    spec.Validate();
  } catch (const Error& e) {
    ParseFail(where + ": " + e.what());
  }
  return spec;
}

// Length-prefixed so separators inside names cannot collide.
void PutString(std::ostringstream& out, std::string_view s) {
  out << s.size() << ':' << s;
}

std::string DirectiveKindName(ElementDirective::Kind k) {
  switch (k) {
    case ElementDirective::Kind::kRelease: return "release";
    case ElementDirective::Kind::kWithhold: return "withhold";
    case ElementDirective::Kind::kMerge: return "merge";
    case ElementDirective::Kind::kShift: return "shift";
    case ElementDirective::Kind::kPerturb: return "perturb";
  }
  return "?";
}

// Stream order used when survivors exceed the population cap.
std::vector<std::string> HashOrder(std::vector<std::string> ids) {
  std::vector<std::pair<Digest, std::string>> keyed;
  keyed.reserve(ids.size());
  for (auto& id : ids) keyed.emplace_back(Sha256(id), std::move(id));
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> out;
  out.reserve(keyed.size());
  for (auto& [h, id] : keyed) out.push_back(std::move(id));
  return out;
}

OptionKind SelectedFor(const StreamAnnotation& a, const std::string& attribute) {
  auto it = a.selected.find(attribute);
  return it == a.selected.end() ? OptionKind::kPrivate : it->second;
}

bool MatchesAll(const std::vector<Predicate>& where,
                const std::map<std::string, std::string>& metadata) {
  return std::all_of(where.begin(), where.end(),
                     [&](const Predicate& p) { return p.Matches(metadata); });
}

std::vector<Operation> ChainFor(const Query& q, std::size_t members) {
  std::vector<Operation> chain{Operation::kWindowAggregate};
  if (q.scope == Scope::kPopulation && members > 1) {
    chain.push_back(Operation::kCrossStreamAggregate);
  }
  if (q.dp_epsilon) chain.push_back(Operation::kDpNoise);
  return chain;
}

// Smallest population a stream tolerates across the selected attributes;
// never below two for a cross-stream aggregate.
std::uint64_t PopulationFloor(const StreamSchema& schema, const StreamAnnotation& a,
                              const Query& q) {
  std::uint64_t need = 2;
  for (const auto& sel : q.select) {
    const StreamAttribute* attr = schema.Attribute(sel.attribute);
    const PrivacyOption* opt = attr ? attr->Option(SelectedFor(a, sel.attribute)) : nullptr;
    if (opt) need = std::max(need, opt->min_population);
  }
  return need;
}

// Shared per-stream compliance check of planner and controller. Returns the
// failing constraint or an empty string.
std::string CheckStream(const StreamSchema& schema, const StreamAnnotation& a,
                        const Query& q, const ReservationLedger& ledger,
                        const std::map<std::string, double>& remaining_budget) {
  for (const auto& sel : q.select) {
    const StreamAttribute* attr = schema.Attribute(sel.attribute);
    if (!attr || !attr->Supports(sel.aggregate)) return "unsupported_aggregate";
    const OptionKind kind = SelectedFor(a, sel.attribute);
    if (!Permits(kind, q.Required())) return "option";
    const PrivacyOption* opt = attr->Option(kind);
    if (!opt) return "option";
    if (q.window_ms < opt->EffectiveMinWindow()) return "min_window";
    double budget = opt->epsilon_budget.value_or(kUnlimited);
    if (auto it = remaining_budget.find(sel.attribute); it != remaining_budget.end()) {
      budget = std::min(budget, it->second);
    }
    const bool dp = q.dp_epsilon.has_value();
    if (!ledger.CanHold(a.stream_id, sel.attribute, dp, q.dp_epsilon.value_or(0), budget)) {
      const auto* h = ledger.Find(a.stream_id, sel.attribute);
      return dp && h && h->exclusive.empty() ? "epsilon_budget" : "reserved";
    }
  }
  return "";
}

}  // namespace

OptionKind ParseOptionKind(std::string_view name) {
  if (name == "public") return OptionKind::kPublic;
  if (name == "stream-aggregate") return OptionKind::kStreamAggregate;
  if (name == "aggregate") return OptionKind::kAggregate;
  if (name == "dp-aggregate") return OptionKind::kDpAggregate;
  if (name == "private") return OptionKind::kPrivate;
  throw Error(ErrorCode::kParse, "unknown privacy option '" + std::string(name) + "'");
}

std::string_view OptionKindName(OptionKind kind) {
  switch (kind) {
    case OptionKind::kPublic: return "public";
    case OptionKind::kStreamAggregate: return "stream-aggregate";
    case OptionKind::kAggregate: return "aggregate";
    case OptionKind::kDpAggregate: return "dp-aggregate";
    case OptionKind::kPrivate: return "private";
  }
  return "?";
}

bool Permits(OptionKind selected, OptionKind required) {
  if (selected == OptionKind::kPrivate || required == OptionKind::kPrivate) return false;
  return static_cast<int>(selected) <= static_cast<int>(required);
}

const PrivacyOption* StreamAttribute::Option(OptionKind kind) const {
  for (const auto& o : options) {
    if (o.kind == kind) return &o;
  }
  return nullptr;
}

bool StreamAttribute::Supports(std::string_view aggregate) const {
  return std::find(aggregates.begin(), aggregates.end(), aggregate) != aggregates.end();
}

const StreamAttribute* StreamSchema::Attribute(std::string_view n) const {
  for (const auto& a : attributes) {
    if (a.name == n) return &a;
  }
  return nullptr;
}

const MetadataAttribute* StreamSchema::Metadata(std::string_view n) const {
  for (const auto& m : metadata) {
    if (m.name == n) return &m;
  }
  return nullptr;
}

StreamSchema ParseSchema(std::string_view yaml) {
  YAML::Node root = LoadYaml(yaml);
  StreamSchema schema;
  schema.name = Required<std::string>(root, "name", "schema");
  std::set<std::string> names;
  if (root["metadata"]) {
    if (!root["metadata"].IsSequence()) ParseFail("schema: metadata must be a list");
    for (const auto& m : root["metadata"]) {
      MetadataAttribute attr;
      attr.name = Required<std::string>(m, "name", "metadata");
      auto type = Optional<std::string>(m, "type", "metadata").value_or("string");
      if (type == "string") {
        attr.type = MetadataType::kString;
      } else if (type == "number" || type == "int" || type == "double") {
        attr.type = MetadataType::kNumber;
      } else {
        ParseFail("metadata '" + attr.name + "': unknown type '" + type + "'");
      }
      if (!names.insert(attr.name).second) ParseFail("duplicate attribute '" + attr.name + "'");
      schema.metadata.push_back(std::move(attr));
    }
  }
  const YAML::Node attrs = root["attributes"];
  if (!attrs || !attrs.IsSequence() || attrs.size() == 0) {
    ParseFail("schema: attributes must be a non-empty list");
  }
  for (const auto& a : attrs) {
    StreamAttribute attr;
    attr.name = Required<std::string>(a, "name", "attribute");
    const std::string where = "attribute '" + attr.name + "'";
    if (!names.insert(attr.name).second) ParseFail("duplicate attribute '" + attr.name + "'");
    attr.aggregates =
        Optional<std::vector<std::string>>(a, "aggregates", where).value_or(
            std::vector<std::string>{});
    if (a["encoding"]) attr.encoding = ParseEncoding(a["encoding"], where);
    const YAML::Node opts = a["options"];
    if (!opts || !opts.IsSequence() || opts.size() == 0) {
      ParseFail(where + ": needs at least one privacy option");
    }
    for (const auto& o : opts) {
      PrivacyOption opt = o.IsScalar() ? PrivacyOption{} : ParseOption(o, where);
      if (o.IsScalar()) {
        try {
          opt.kind = ParseOptionKind(o.as<std::string>());
        } catch (const Error& e) {
          ParseFail(where + ": " + e.what());
        }
        if (opt.kind == OptionKind::kDpAggregate) {
          ParseFail(where + ": dp-aggregate option needs an epsilon budget");
        }
      }
      if (attr.Option(opt.kind)) {
        ParseFail(where + ": option '" + std::string(OptionKindName(opt.kind)) +
                  "' declared twice");
      }
      attr.options.push_back(opt);
    }
    schema.attributes.push_back(std::move(attr));
  }
  return schema;
}

StreamSchema LoadSchema(const std::string& path) { return ParseSchema(ReadFile(path)); }

void StreamAnnotation::Validate(const StreamSchema& s) const {
  if (schema != s.name) {
    throw Error(ErrorCode::kInvalidArgument,
                "stream " + stream_id + " follows schema '" + schema + "', not '" + s.name + "'");
  }
  for (const auto& [attr, kind] : selected) {
    const StreamAttribute* a = s.Attribute(attr);
    if (!a) throw Error(ErrorCode::kInvalidArgument, "unknown attribute '" + attr + "'");
    if (!a->Option(kind)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "attribute '" + attr + "' does not offer option '" +
                      std::string(OptionKindName(kind)) + "'");
    }
  }
  for (const auto& m : s.metadata) {
    auto it = metadata.find(m.name);
    if (it == metadata.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "stream " + stream_id + " lacks metadata '" + m.name + "'");
    }
    if (m.type == MetadataType::kNumber && !ParseNumber(it->second)) {
      throw Error(ErrorCode::kInvalidArgument, "metadata '" + m.name + "' is not a number");
    }
  }
}

StreamAnnotation ParseAnnotation(std::string_view yaml) {
  YAML::Node root = LoadYaml(yaml);
  StreamAnnotation a;
  a.stream_id = Required<std::string>(root, "stream_id", "annotation");
  a.schema = Required<std::string>(root, "schema", "annotation");
  const std::string owner = Required<std::string>(root, "owner", "annotation");
  try {
    a.owner = {Digest::FromHex(owner)};
  } catch (const std::exception&) {
    a.owner = secagg::PartyId::FromName(owner);
  }
  if (root["options"]) {
    for (const auto& kv : root["options"]) {
      try {
        a.selected[kv.first.as<std::string>()] = ParseOptionKind(kv.second.as<std::string>());
      } catch (const YAML::Exception& e) {
        ParseFail(std::string("annotation options: ") + e.what());
      }
    }
  }
  if (root["metadata"]) {
    for (const auto& kv : root["metadata"]) {
      a.metadata[kv.first.as<std::string>()] = kv.second.as<std::string>();
    }
  }
  return a;
}

bool Predicate::Matches(const std::map<std::string, std::string>& metadata) const {
  auto it = metadata.find(attribute);
  if (it == metadata.end()) return false;
  if (equals && it->second != *equals) return false;
  if (min || max) {
    auto v = ParseNumber(it->second);
    if (!v) return false;
    if (min && *v < *min) return false;
    if (max && *v > *max) return false;
  }
  return true;
}

OptionKind Query::Required() const {
  if (dp_epsilon) return OptionKind::kDpAggregate;
  return scope == Scope::kPopulation ? OptionKind::kAggregate
                                     : OptionKind::kStreamAggregate;
}

void Query::Validate() const {
  if (select.empty()) throw Error(ErrorCode::kInvalidArgument, "query selects nothing");
  if (window_ms == 0) throw Error(ErrorCode::kInvalidArgument, "window must be positive");
  if (max_population < 1) {
    throw Error(ErrorCode::kInvalidArgument, "population cap must be at least 1");
  }
  if (dp_epsilon && !(*dp_epsilon > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "dp epsilon must be positive");
  }
  if (dp_epsilon && scope == Scope::kPerStream) {
    throw Error(ErrorCode::kInvalidArgument, "dp noise needs a population scope");
  }
}

std::uint64_t ParseDurationMs(std::string_view text) {
  std::size_t split = 0;
  while (split < text.size() &&
         (std::isdigit(static_cast<unsigned char>(text[split])) || text[split] == '.')) {
    ++split;
  }
  auto number = ParseNumber(text.substr(0, split));
  std::string_view unit = text.substr(split);
  double factor = 0;
  if (unit.empty() || unit == "ms") {
    factor = 1;
  } else if (unit == "s") {
    factor = 1e3;
  } else if (unit == "m" || unit == "min") {
    factor = 60e3;
  } else if (unit == "h") {
    factor = 3600e3;
  } else if (unit == "d") {
    factor = 86400e3;
  }
  if (!number || factor == 0 || *number < 0) {
    throw Error(ErrorCode::kParse, "bad duration '" + std::string(text) + "'");
  }
  return static_cast<std::uint64_t>(std::llround(*number * factor));
}

Query ParseQuery(std::string_view yaml) {
  YAML::Node root = LoadYaml(yaml);
  Query q;
  q.output = Optional<std::string>(root, "output", "query").value_or("result");
  const YAML::Node sel = root["select"];
  if (!sel || !sel.IsSequence()) ParseFail("query: select must be a list");
  for (const auto& s : sel) {
    q.select.push_back({Required<std::string>(s, "attribute", "select"),
                        Required<std::string>(s, "aggregate", "select")});
  }
  if (root["where"]) {
    if (!root["where"].IsSequence()) ParseFail("query: where must be a list");
    for (const auto& w : root["where"]) {
      Predicate p;
      p.attribute = Required<std::string>(w, "attribute", "where");
      p.equals = Optional<std::string>(w, "eq", "where");
      p.min = Optional<double>(w, "min", "where");
      p.max = Optional<double>(w, "max", "where");
      q.where.push_back(std::move(p));
    }
  }
  q.window_ms = ParseDurationMs(Required<std::string>(root, "window", "query"));
  auto scope = Optional<std::string>(root, "scope", "query").value_or("population");
  if (scope == "population") {
    q.scope = Scope::kPopulation;
  } else if (scope == "per_stream") {
    q.scope = Scope::kPerStream;
  } else {
    ParseFail("query: unknown scope '" + scope + "'");
  }
  if (auto cap = Optional<std::uint64_t>(root, "max_population", "query")) {
    q.max_population = *cap;
  }
  if (root["dp"]) q.dp_epsilon = Required<double>(root["dp"], "epsilon", "query dp");
  try {
    q.Validate();
  } catch (const Error& e) {
    ParseFail(e.what());
  }
  return q;
}

Query LoadQuery(const std::string& path) { return ParseQuery(ReadFile(path)); }

std::string_view OperationName(Operation op) {
  switch (op) {
    case Operation::kWindowAggregate: return "window_aggregate";
    case Operation::kCrossStreamAggregate: return "cross_stream_aggregate";
    case Operation::kDpNoise: return "dp_noise";
  }
  return "?";
}

std::string CanonicalPlanText(const TransformationPlan& plan) {
  std::ostringstream out;
  out.precision(17);
  const Query& q = plan.query;
  out << "plan/1\nsequence=" << plan.sequence << "\noutput=";
  PutString(out, q.output);
  out << "\nwindow_ms=" << q.window_ms
      << "\nscope=" << (q.scope == Scope::kPopulation ? "population" : "per_stream")
      << "\nmax_population=" << q.max_population << "\ndp_epsilon=";
  if (q.dp_epsilon) {
    out << *q.dp_epsilon;
  } else {
    out << "none";
  }
  out << "\nselect=";
  for (const auto& s : q.select) {
    PutString(out, s.attribute);
    PutString(out, s.aggregate);
  }
  out << "\nwhere=";
  for (const auto& p : q.where) {
    PutString(out, p.attribute);
    out << (p.equals ? "=" : "*");
    if (p.equals) PutString(out, *p.equals);
    out << '[' << (p.min ? *p.min : -kUnlimited) << ',' << (p.max ? *p.max : kUnlimited)
        << ']';
  }
  out << "\nmembers=";
  for (const auto& m : plan.members) PutString(out, m);
  out << "\ncontrollers=";
  for (const auto& c : plan.controllers) out << c.Hex() << ';';
  out << "\ndirectives=";
  for (const auto& [attr, list] : plan.directives) {
    PutString(out, attr);
    for (const auto& d : list) {
      out << DirectiveKindName(d.kind) << '/' << d.group << '/' << d.shift << '/' << d.sigma
          << ';';
    }
  }
  out << "\nchain=";
  for (Operation op : plan.chain) out << OperationName(op) << ';';
  out << "\nfault_tolerance=" << plan.fault_tolerance
      << "\nissued_at_ms=" << plan.issued_at_ms << '\n';
  return out.str();
}

Digest ComputePlanId(const TransformationPlan& plan) {
  return Sha256(CanonicalPlanText(plan));
}

std::vector<ElementDirective> DirectivesFor(
    const std::optional<EncodingSpec>& enc, std::string_view aggregate) {
  if (!enc) return {ElementDirective::Release()};
  std::vector<ElementDirective> out(enc->Width(), ElementDirective::Release());
  using encoding::Kind;
  const bool has_count = enc->kind == Kind::kSumCount || enc->kind == Kind::kVariance;
  if (!has_count) return out;
  const std::size_t count_slot = enc->Width() - 1;
  for (std::size_t j = 0; j < out.size(); ++j) {
    bool keep = true;
    if (aggregate == "sum") {
      keep = j == 0;
    } else if (aggregate == "count") {
      keep = j == count_slot;
    } else if (aggregate == "avg" || aggregate == "mean") {
      keep = j == 0 || j == count_slot;
    }
    if (!keep) out[j] = ElementDirective::Withhold();
  }
  return out;
}

double ReservationLedger::Holding::DpTotal() const {
  double total = 0;
  for (const auto& [id, cost] : dp_costs) total += cost;
  return total;
}

const ReservationLedger::Holding* ReservationLedger::Find(
    const std::string& stream, const std::string& attribute) const {
  auto it = held_.find({stream, attribute});
  return it == held_.end() ? nullptr : &it->second;
}

bool ReservationLedger::CanHold(const std::string& stream, const std::string& attribute,
                                bool dp, double cost, double budget) const {
  const Holding* h = Find(stream, attribute);
  if (!dp) return h == nullptr || (h->exclusive.empty() && h->dp_costs.empty());
  if (h && !h->exclusive.empty()) return false;
  const double spent = h ? h->DpTotal() : 0;
  return spent + cost <= budget + 1e-12;
}

void ReservationLedger::Hold(const std::string& stream, const std::string& attribute,
                             const Digest& plan, bool dp, double cost) {
  Holding& h = held_[{stream, attribute}];
  if (dp) {
    h.dp_costs[plan] = cost;
  } else {
    h.exclusive.insert(plan);
  }
}

void ReservationLedger::Drop(const Digest& plan) {
  for (auto it = held_.begin(); it != held_.end();) {
    it->second.exclusive.erase(plan);
    it->second.dp_costs.erase(plan);
    if (it->second.exclusive.empty() && it->second.dp_costs.empty()) {
      it = held_.erase(it);
    } else {
      ++it;
    }
  }
}

PolicyManager::PolicyManager(StreamSchema schema) : PolicyManager(std::move(schema), {}) {}

PolicyManager::PolicyManager(StreamSchema schema, Options options)
    : schema_(std::move(schema)), options_(options) {}

void PolicyManager::AddStream(StreamAnnotation annotation) {
  annotation.Validate(schema_);
  std::lock_guard<std::mutex> lock(mu_);
  const std::string id = annotation.stream_id;
  if (!streams_.emplace(id, std::move(annotation)).second) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate stream id " + id);
  }
}

void PolicyManager::RemoveStream(const std::string& stream_id) {
  std::lock_guard<std::mutex> lock(mu_);
  streams_.erase(stream_id);
}

std::size_t PolicyManager::stream_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return streams_.size();
}

std::size_t PolicyManager::active_plans() const {
  std::lock_guard<std::mutex> lock(mu_);
  return active_.size();
}

PlanResult PolicyManager::Plan(const Query& query, std::uint64_t now_ms) {
  query.Validate();
  std::lock_guard<std::mutex> lock(mu_);

  for (const auto& sel : query.select) {
    const StreamAttribute* attr = schema_.Attribute(sel.attribute);
    if (!attr || !attr->Supports(sel.aggregate)) {
      return Rejection{"unsupported_aggregate", "attribute '" + sel.attribute +
                                                    "' does not support '" +
                                                    sel.aggregate + "'"};
    }
  }

  // Pass 1: metadata filter.
  std::vector<const StreamAnnotation*> matched;
  for (const auto& [id, a] : streams_) {
    if (MatchesAll(query.where, a.metadata)) matched.push_back(&a);
  }
  if (matched.empty()) return Rejection{"no_match", "no stream matches the filter"};

  // Pass 2: per-stream option compliance.
  std::vector<std::string> survivors;
  std::map<std::string, std::size_t> excluded;
  for (const StreamAnnotation* a : matched) {
    std::string why = CheckStream(schema_, *a, query, ledger_, {});
    if (why.empty()) {
      survivors.push_back(a->stream_id);
    } else {
      ++excluded[why];
    }
  }
  if (survivors.empty()) {
    static constexpr const char* kOrder[] = {"option", "min_window", "reserved",
                                             "epsilon_budget", "unsupported_aggregate"};
    std::string worst;
    std::size_t most = 0;
    for (const char* reason : kOrder) {
      auto it = excluded.find(reason);
      if (it != excluded.end() && it->second > most) {
        worst = reason;
        most = it->second;
      }
    }
    return Rejection{worst, std::to_string(matched.size()) +
                                " matching streams, none complies (" + worst + ")"};
  }

  // Pass 3: population constraints under the cap.
  std::vector<std::string> pool = HashOrder(std::move(survivors));
  std::vector<std::string> members;
  std::uint64_t need = 0;
  if (query.scope == Scope::kPerStream) {
    if (pool.size() > query.max_population) pool.resize(query.max_population);
    members = pool;
  } else {
    while (true) {
      const std::size_t take = std::min<std::uint64_t>(pool.size(), query.max_population);
      members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
      need = 2;
      for (const auto& id : members) {
        need = std::max(need, PopulationFloor(schema_, streams_.at(id), query));
      }
      if (members.size() >= need) break;
      const std::size_t size = members.size();
      std::erase_if(pool, [&](const std::string& id) {
        return PopulationFloor(schema_, streams_.at(id), query) > size;
      });
      if (pool.size() < 2) {
        return Rejection{"min_population",
                         std::to_string(size) + " compliant streams, population needs " +
                             std::to_string(need)};
      }
    }
  }

  TransformationPlan plan;
  plan.sequence = next_sequence_++;
  plan.query = query;
  plan.issued_at_ms = now_ms;
  std::sort(members.begin(), members.end());
  plan.members = members;
  std::set<secagg::PartyId> owners;
  for (const auto& id : members) owners.insert(streams_.at(id).owner);
  plan.controllers.assign(owners.begin(), owners.end());
  for (const auto& sel : query.select) {
    plan.directives[sel.attribute] =
        DirectivesFor(schema_.Attribute(sel.attribute)->encoding, sel.aggregate);
  }
  plan.chain = ChainFor(query, members.size());
  plan.fault_tolerance = query.scope == Scope::kPopulation ? members.size() - need
                                                            : members.size();
  plan.id = ComputePlanId(plan);

  for (const auto& id : members) {
    for (const auto& sel : query.select) {
      ledger_.Hold(id, sel.attribute, plan.id, plan.IsDp(), query.dp_epsilon.value_or(0));
    }
  }
  active_.emplace(plan.id, plan);
  return plan;
}

void PolicyManager::Release(const Digest& plan_id) {
  std::lock_guard<std::mutex> lock(mu_);
  if (released_.contains(plan_id)) return;
  auto it = active_.find(plan_id);
  if (it == active_.end()) {
    throw Error(ErrorCode::kUnknownPlan, "no plan " + plan_id.Hex());
  }
  ledger_.Drop(plan_id);
  active_.erase(it);
  released_.insert(plan_id);
}

std::vector<Digest> PolicyManager::Expire(std::uint64_t now_ms) {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Digest> expired;
  if (options_.max_lifetime_ms == 0) return expired;
  for (auto it = active_.begin(); it != active_.end();) {
    if (now_ms >= it->second.issued_at_ms + options_.max_lifetime_ms) {
      expired.push_back(it->first);
      ledger_.Drop(it->first);
      released_.insert(it->first);
      it = active_.erase(it);
    } else {
      ++it;
    }
  }
  return expired;
}

PrivacyController::PrivacyController(secagg::PartyId id, StreamSchema schema)
    : id_(id), schema_(std::move(schema)) {}

void PrivacyController::AddStream(StreamAnnotation annotation) {
  annotation.Validate(schema_);
  if (annotation.owner != id_) {
    throw Error(ErrorCode::kInvalidArgument,
                "stream " + annotation.stream_id + " belongs to another controller");
  }
  const std::string id = annotation.stream_id;
  streams_[id] = std::move(annotation);
}

bool PrivacyController::Owns(const std::string& stream_id) const {
  return streams_.contains(stream_id);
}

Verdict PrivacyController::Verify(const TransformationPlan& plan,
                                  const secagg::IdentityRegistry& registry) const {
  if (ComputePlanId(plan) != plan.id) return Verdict::Refuse("plan_id");
  for (const auto& c : plan.controllers) {
    if (registry.Find(c) == nullptr) return Verdict::Refuse("unknown_identity");
  }
  try {
    plan.query.Validate();
  } catch (const Error&) {
    return Verdict::Refuse("operations");
  }
  if (plan.chain != ChainFor(plan.query, plan.members.size())) {
    return Verdict::Refuse("operations");
  }
  if (plan.members.size() > plan.query.max_population) {
    return Verdict::Refuse("max_population");
  }
  bool mine = false;
  for (const auto& member : plan.members) {
    auto it = streams_.find(member);
    if (it == streams_.end()) continue;
    mine = true;
    const StreamAnnotation& a = it->second;
    if (!std::binary_search(plan.controllers.begin(), plan.controllers.end(), id_)) {
      return Verdict::Refuse("unknown_identity");
    }
    if (!MatchesAll(plan.query.where, a.metadata)) return Verdict::Refuse("filter");

    std::map<std::string, double> remaining;
    for (const auto& sel : plan.query.select) {
      if (auto b = budgets_.find({member, sel.attribute}); b != budgets_.end()) {
        remaining[sel.attribute] = b->second.remaining();
      }
    }
    std::string why = CheckStream(schema_, a, plan.query, ledger_, remaining);
    if (!why.empty()) return Verdict::Refuse(why);

    if (plan.query.scope == Scope::kPopulation &&
        plan.members.size() < PopulationFloor(schema_, a, plan.query)) {
      return Verdict::Refuse("min_population");
    }
    for (const auto& sel : plan.query.select) {
      auto d = plan.directives.find(sel.attribute);
      if (d == plan.directives.end() ||
          d->second != DirectivesFor(schema_.Attribute(sel.attribute)->encoding,
                                     sel.aggregate)) {
        return Verdict::Refuse("noise");
      }
      for (const auto& dir : d->second) {
        if (dir.kind == ElementDirective::Kind::kPerturb) return Verdict::Refuse("noise");
      }
    }
  }
  if (!mine) return Verdict::Refuse("filter");
  return Verdict::Accept();
}

Verdict PrivacyController::Commit(const TransformationPlan& plan,
                                  const secagg::IdentityRegistry& registry) {
  Verdict v = Verify(plan, registry);
  if (!v.accepted) return v;
  for (const auto& member : plan.members) {
    if (!Owns(member)) continue;
    for (const auto& sel : plan.query.select) {
      ledger_.Hold(member, sel.attribute, plan.id, plan.IsDp(),
                   plan.query.dp_epsilon.value_or(0));
    }
  }
  return v;
}

void PrivacyController::Release(const Digest& plan_id) { ledger_.Drop(plan_id); }

token::PrivacyBudget& PrivacyController::Budget(const std::string& stream_id,
                                                const std::string& attribute) {
  auto key = std::make_pair(stream_id, attribute);
  auto it = budgets_.find(key);
  if (it != budgets_.end()) return it->second;
  auto s = streams_.find(stream_id);
  if (s == streams_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown stream " + stream_id);
  const StreamAttribute* attr = schema_.Attribute(attribute);
  if (!attr) throw Error(ErrorCode::kInvalidArgument, "unknown attribute " + attribute);
  const PrivacyOption* opt = attr->Option(SelectedFor(s->second, attribute));
  double total = opt && opt->epsilon_budget ? *opt->epsilon_budget : kUnlimited;
  return budgets_.emplace(key, token::PrivacyBudget(total)).first->second;
}

}  // namespace privstream::policy
