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

// privstream: parameter optimizer, secure-aggregation counters, query
// planning and end-to-end scenarios. Exit codes: 0 success, 1 a checked
// condition failed, 2 usage error.

#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "layered_args.h"
#include "privstream/errors.h"
#include "privstream/policy.h"
#include "privstream/secagg_bench.h"
#include "privstream/secure_agg.h"
#include "privstream/sim.h"

namespace privstream::tools {
namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

void Emit(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  out << text;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json OpsJson(const secagg::OpCounters& c) {
  return {{"prf_calls", c.prf_calls},
          {"additions", c.additions},
          {"edge_checks", c.edge_checks},
          {"empty_rounds", c.empty_rounds}};
}

struct OptimizeArgs {
  std::uint64_t parties = 0;
  double alpha = 0.5;
  double delta = 1e-7;
  unsigned prf_bits = 128;
};

int Optimize(const OptimizeArgs& a) {
  const auto r = secagg::OptimizeBits(a.parties, a.alpha, a.delta, a.prf_bits);
  json j{{"parties", a.parties}, {"alpha", a.alpha},      {"delta", a.delta},
         {"feasible", r.feasible}, {"honest", r.honest}};
  if (r.feasible) {
    j["bits"] = r.bits;
    j["rounds"] = r.rounds;
    j["expected_degree"] = r.expected_degree;
    j["bound"] = r.bound;
  }
  std::cout << j.dump(2) << "\n";
  if (!r.feasible) {
    std::cerr << "infeasible: no segment width keeps the failure bound below " << a.delta
              << "\n";
    return kCheckFailed;
  }
  return kOk;
}

struct BenchArgs {
  secagg::BenchConfig config;
  std::string protocol = "zeph";
  std::string prf = "fast-stub";
  bool parallel = false;
  std::string csv;
  std::string json_path;
};

int BenchSecagg(BenchArgs a) {
  a.config.protocol = secagg::ParseProtocol(a.protocol);
  a.config.prf = crypto::ParsePrfKind(a.prf);
  a.config.mode = a.parallel ? kernels::Mode::kParallel : kernels::Mode::kSerial;
  const auto report = secagg::RunBench(a.config);
  Emit(a.csv, secagg::BenchCsv(report), std::cout);
  json j{{"parties", a.config.parties},
         {"protocol", a.protocol},
         {"bits", report.bits},
         {"rounds_per_epoch", report.rounds_per_epoch},
         {"rounds", report.rounds.size()},
         {"sampled_parties", a.config.sample},
         {"seed", a.config.seed},
         {"total", OpsJson(report.total)},
         {"per_party", OpsJson(report.PerParty())}};
  Emit(a.json_path, j.dump(2) + "\n", std::cerr);
  return kOk;
}

struct RunArgs {
  std::string scenario = "custom";
  sim::SimConfig config;
  std::string window = "10s";
  std::string grace = "5s";
  std::string protocol = "zeph";
  std::string prf = "aes128";
  std::string csv;
  std::string json_path;
};

int Run(RunArgs a) {
  a.config.window_ms = policy::ParseDurationMs(a.window);
  a.config.grace_ms = policy::ParseDurationMs(a.grace);
  a.config.protocol = secagg::ParseProtocol(a.protocol);
  a.config.prf = crypto::ParsePrfKind(a.prf);
  const sim::Scenario scenario = sim::Preset(a.scenario);
  const sim::SimReport report = sim::RunScenario(scenario, a.config);
  Emit(a.csv, sim::ToCsv(report), std::cout);
  Emit(a.json_path, sim::ToJsonSummary(report) + "\n", std::cerr);
  if (!report.AllShadowEqual()) {
    std::cerr << "encrypted output differs from the plaintext shadow\n";
    return kCheckFailed;
  }
  if (report.Succeeded() == 0) {
    std::cerr << "no window produced a result\n";
    return kCheckFailed;
  }
  return kOk;
}

struct PlanArgs {
  std::string schema;
  std::string query;
  std::vector<std::string> annotations;
};

int Plan(const PlanArgs& a) {
  const policy::StreamSchema schema = policy::LoadSchema(a.schema);
  policy::PolicyManager manager(schema);
  secagg::IdentityRegistry registry;
  std::map<secagg::PartyId, policy::PrivacyController> controllers;
  for (const auto& path : a.annotations) {
    policy::StreamAnnotation ann = policy::ParseAnnotation(ReadFile(path));
    if (!registry.Find(ann.owner)) registry.Register(ann.owner, Bytes{1});
    controllers.try_emplace(ann.owner, ann.owner, schema).first->second.AddStream(ann);
    manager.AddStream(std::move(ann));
  }
  const policy::PlanResult result = manager.Plan(policy::LoadQuery(a.query));
  if (const auto* r = std::get_if<policy::Rejection>(&result)) {
    std::cout << json{{"accepted", false}, {"constraint", r->constraint},
                      {"message", r->message}}
                     .dump(2)
              << "\n";
    return kCheckFailed;
  }
  const auto& plan = std::get<policy::TransformationPlan>(result);
  json verdicts = json::object();
  bool all_accept = true;
  for (const auto& owner : plan.controllers) {
    const policy::Verdict v = controllers.at(owner).Verify(plan, registry);
    verdicts[owner.Hex()] = v.accepted ? "accept" : v.reason;
    all_accept = all_accept && v.accepted;
  }
  json chain = json::array();
  for (auto op : plan.chain) chain.push_back(std::string(policy::OperationName(op)));
  std::cout << json{{"accepted", true},
                    {"id", plan.id.Hex()},
                    {"members", plan.members},
                    {"fault_tolerance", plan.fault_tolerance},
                    {"chain", chain},
                    {"controller_verdicts", verdicts}}
                   .dump(2)
            << "\n";
  return all_accept ? kOk : kCheckFailed;
}

struct BandwidthArgs {
  std::size_t width = 1;
  std::uint64_t controllers = 100;
};

int Bandwidth(const BandwidthArgs& a) {
  const auto b = sim::MeasureBandwidth(a.width, a.controllers);
  std::cout << json{{"width", a.width},
                    {"controllers", a.controllers},
                    {"event_payload", b.event_payload},
                    {"heartbeat", b.heartbeat},
                    {"token", b.token},
                    {"masked_token", b.masked_token},
                    {"delta_per_change", b.delta_per_change},
                    {"setup_per_controller", b.setup_per_controller},
                    {"setup_total", b.setup_total}}
                   .dump(2)
            << "\n";
  return kOk;
}

int Main(int argc, char** argv) {
  CLI::App app{"privstream: privacy-controlled stream aggregation toolkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  bool quiet = false;
  std::string config_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML file of option values");
    sub->add_flag("--quiet", quiet, "Suppress warnings");
  };

  OptimizeArgs opt;
  auto* optimize = app.add_subcommand("optimize", "Largest epoch length meeting a failure bound");
  optimize->add_option("--parties", opt.parties, "Number of controllers")->required();
  optimize->add_option("--alpha", opt.alpha, "Colluding fraction");
  optimize->add_option("--delta", opt.delta, "Failure bound per epoch");
  optimize->add_option("--prf-bits", opt.prf_bits, "PRF output bits");
  common(optimize);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench-secagg", "Per-round secure aggregation counters");
  bench_cmd->add_option("--parties", bench.config.parties, "Number of controllers");
  bench_cmd->add_option("--rounds", bench.config.rounds, "Rounds; 0 runs one epoch");
  bench_cmd->add_option("--protocol", bench.protocol, "clique, dream or zeph");
  bench_cmd->add_option("--dropout", bench.config.dropout, "Per-round drop probability");
  bench_cmd->add_option("--bits", bench.config.bits, "Segment bits; 0 runs the optimizer");
  bench_cmd->add_option("--alpha", bench.config.alpha, "Colluding fraction");
  bench_cmd->add_option("--delta", bench.config.delta, "Failure bound per epoch");
  bench_cmd->add_option("--sample", bench.config.sample, "Instrumented parties");
  bench_cmd->add_option("--seed", bench.config.seed, "Random seed");
  bench_cmd->add_option("--prf", bench.prf, "aes128, fast-stub, counter-stub or zero-stub");
  bench_cmd->add_option("--width", bench.config.width, "Token slots masked per round");
  bench_cmd->add_flag("--parallel", bench.parallel, "Run sampled parties with OpenMP");
  bench_cmd->add_option("--csv", bench.csv, "Per-round CSV path (default stdout)");
  bench_cmd->add_option("--json", bench.json_path, "Summary JSON path (default stderr)");
  common(bench_cmd);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario end to end");
  auto& sc = run.config;
  run_cmd->add_option("--scenario", run.scenario, "fitness, web, car or custom");
  run_cmd->add_option("--producers", sc.producers, "Data producers");
  run_cmd->add_option("--controllers", sc.controllers, "Controllers; 0 gives one per producer");
  run_cmd->add_option("--windows", sc.windows, "Windows to simulate");
  run_cmd->add_option("--window", run.window, "Window length, e.g. 10s");
  run_cmd->add_option("--grace", run.grace, "Grace period, e.g. 5s");
  run_cmd->add_option("--event-interval-ms", sc.event_interval_ms, "Mean gap between events");
  run_cmd->add_option("--latency-ms", sc.latency_ms, "Mean one-way latency");
  run_cmd->add_option("--protocol", run.protocol, "clique, dream or zeph");
  run_cmd->add_option("--alpha", sc.alpha, "Colluding fraction");
  run_cmd->add_option("--delta", sc.delta, "Failure bound per epoch");
  run_cmd->add_option("--controller-drop", sc.controller_drop, "Per-window silence probability");
  run_cmd->add_option("--producer-drop", sc.producer_drop, "Per-window border loss probability");
  run_cmd->add_option("--message-drop", sc.message_drop, "Per-message loss probability");
  run_cmd->add_option("--dp-sigma", sc.dp_sigma, "Std-dev of the summed DP noise");
  run_cmd->add_option("--seed", sc.seed, "Random seed");
  run_cmd->add_option("--prf", run.prf, "aes128, fast-stub, counter-stub or zero-stub");
  run_cmd->add_option("--modulus-bits", sc.modulus_bits, "Ring modulus bits");
  run_cmd->add_flag("--parallel", sc.parallel, "Shard party work with OpenMP");
  run_cmd->add_option("--record-timings", sc.record_timings, "Record wall-clock phase times");
  run_cmd->add_option("--csv", run.csv, "Per-window CSV path (default stdout)");
  run_cmd->add_option("--json", run.json_path, "Summary JSON path (default stderr)");
  common(run_cmd);

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Plan a query and check every controller agrees");
  plan_cmd->add_option("--schema", plan.schema, "Schema YAML")->required();
  plan_cmd->add_option("--query", plan.query, "Query YAML")->required();
  plan_cmd->add_option("--annotations", plan.annotations, "Annotation YAML files")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->delimiter(',');
  common(plan_cmd);

  BandwidthArgs bw;
  auto* bw_cmd = app.add_subcommand("bandwidth", "Wire sizes per message class");
  bw_cmd->add_option("--width", bw.width, "Encoded record width");
  bw_cmd->add_option("--controllers", bw.controllers, "Controllers in the setup exchange");
  common(bw_cmd);

  try {
    const std::vector<std::string> layered = LayeredArgs(app, argc, argv);
    std::vector<const char*> ptrs;
    for (const auto& s : layered) ptrs.push_back(s.c_str());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (quiet) spdlog::set_level(spdlog::level::off);

  try {
    if (optimize->parsed()) return Optimize(opt);
    if (bench_cmd->parsed()) return BenchSecagg(bench);
    if (run_cmd->parsed()) return Run(run);
    if (plan_cmd->parsed()) return Plan(plan);
    if (bw_cmd->parsed()) return Bandwidth(bw);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::kInvalidArgument:
      case ErrorCode::kParse:
        return kUsage;
      default:
        return kCheckFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace
}  // namespace privstream::tools

int main(int argc, char** argv) { return privstream::tools::Main(argc, argv); }
