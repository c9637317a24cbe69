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

#ifndef PRIVSTREAM_TOOLS_LAYERED_ARGS_H_
#define PRIVSTREAM_TOOLS_LAYERED_ARGS_H_

#include <string>
#include <vector>

#include "CLI11.hpp"

namespace privstream::tools {

// Rewrites argv so one CLI11 pass sees, in order: values from the --config
// YAML file, then PRIVSTREAM_<OPTION> environment variables, then the
// command line. With a take-last policy on every option this yields
// flags > env > file.
//
// In the YAML file, top-level keys apply to any subcommand that defines an
// option of that name, and a map named after the subcommand applies to it
// alone; unknown keys inside that map throw CLI::ValidationError.
std::vector<std::string> LayeredArgs(const CLI::App& app, int argc, const char* const* argv);

// PRIVSTREAM_ plus the option name upper-cased with '-' mapped to '_'.
std::string EnvName(const std::string& option);

}  // namespace privstream::tools

#endif  // PRIVSTREAM_TOOLS_LAYERED_ARGS_H_
