// Copyright 2026 The Dilemma Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DILEMMA_FORGE_ERROR_HPP_
#define DILEMMA_FORGE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace dilemma_forge {

// Raised for invalid user-supplied configuration (bad GameSpec, bad JSON
// config, invalid overrides). The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a caller breaks an operation's precondition (dimension
// mismatch, stepping a terminal state, out-of-range action).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what)
      : std::logic_error(what) {}
};

#define DF_REQUIRE(cond, msg)                                          \
  do {                                                                 \
    if (!(cond)) throw ::dilemma_forge::ContractViolation(msg);        \
  } while (false)

}  // namespace dilemma_forge

#endif  // DILEMMA_FORGE_ERROR_HPP_
