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

#include "privstream/errors.h"

namespace privstream {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid_argument";
    case ErrorCode::kOrdering:
      return "ordering";
    case ErrorCode::kWidthMismatch:
      return "width_mismatch";
    case ErrorCode::kChainGap:
      return "chain_gap";
    case ErrorCode::kRangeMismatch:
      return "range_mismatch";
    case ErrorCode::kOutOfDomain:
      return "out_of_domain";
    case ErrorCode::kUnknownIdentity:
      return "unknown_identity";
    case ErrorCode::kPastRound:
      return "past_round";
    case ErrorCode::kInfeasible:
      return "infeasible";
    case ErrorCode::kParse:
      return "parse";
    case ErrorCode::kOverflowBudget:
      return "overflow_budget";
    case ErrorCode::kUnknownPlan:
      return "unknown_plan";
  }
  return "unknown";
}

}  // namespace privstream
