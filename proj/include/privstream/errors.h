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

#ifndef PRIVSTREAM_ERRORS_H_
#define PRIVSTREAM_ERRORS_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace privstream {

enum class ErrorCode {
  kInvalidArgument,
  kOrdering,        // non-monotonic timestamps
  kWidthMismatch,
  kChainGap,        // within-stream sum over non-adjacent ciphertexts
  kRangeMismatch,   // token window / stream set does not match aggregate
  kOutOfDomain,
  kUnknownIdentity,
  kPastRound,
  kInfeasible,
  kParse,
  kOverflowBudget,
  kUnknownPlan,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace privstream

#endif  // PRIVSTREAM_ERRORS_H_
