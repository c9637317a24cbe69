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

#include "layered_args.h"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

namespace privstream::tools {
namespace {

std::string Normalize(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string Scalar(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar()) return node.Scalar();
  if (node.IsSequence()) {
    std::string joined;
    for (const auto& item : node) {
      if (!item.IsScalar()) break;
      joined += (joined.empty() ? "" : ",") + item.Scalar();
    }
    return joined;
  }
  throw CLI::ValidationError("--config", "value of '" + key + "' must be a scalar or list");
}

}  // namespace

std::string EnvName(const std::string& option) {
  std::string out = "PRIVSTREAM_";
  for (char c : option) {
    out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string> LayeredArgs(const CLI::App& app, int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  // The subcommand is the first token naming one.
  std::size_t sub_pos = 0;
  const CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size() && !sub; ++i) {
    for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) {
      if (s->check_name(args[i])) {
        sub = s;
        sub_pos = i;
        break;
      }
    }
  }
  if (!sub) return args;

  std::set<std::string> names;
  for (const CLI::Option* opt : sub->get_options()) {
    for (const auto& n : opt->get_lnames()) names.insert(n);
  }

  std::string config_path;
  for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) {
    if (const char* env = std::getenv(EnvName("config").c_str())) config_path = env;
  }

  std::vector<std::string> layered;
  if (!config_path.empty()) {
    YAML::Node root;
    try {
      root = YAML::LoadFile(config_path);
    } catch (const YAML::Exception& e) {
      throw CLI::ValidationError("--config", config_path + ": " + e.what());
    }
    if (!root.IsNull() && !root.IsMap()) {
      throw CLI::ValidationError("--config", "config file must be a key/value map");
    }
    const std::string section = sub->get_name();
    for (const auto& kv : root) {
      const std::string key = Normalize(kv.first.as<std::string>());
      if (key == section && kv.second.IsMap()) continue;
      if (key != "config" && names.count(key)) {
        layered.push_back("--" + key + "=" + Scalar(kv.second, key));
      }
    }
    if (root[section] && root[section].IsMap()) {
      for (const auto& kv : root[section]) {
        const std::string key = Normalize(kv.first.as<std::string>());
        if (key == "config" || !names.count(key)) {
          throw CLI::ValidationError("--config", "unknown key '" + key + "' for " + section);
        }
        layered.push_back("--" + key + "=" + Scalar(kv.second, key));
      }
    }
  }
  for (const auto& name : names) {
    if (name == "help" || name == "config") continue;
    if (const char* env = std::getenv(EnvName(name).c_str())) {
      layered.push_back("--" + name + "=" + env);
    }
  }

  std::vector<std::string> out(args.begin(), args.begin() + static_cast<long>(sub_pos) + 1);
  out.insert(out.end(), layered.begin(), layered.end());
  out.insert(out.end(), args.begin() + static_cast<long>(sub_pos) + 1, args.end());
  return out;
}

}  // namespace privstream::tools
