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

#ifndef DILEMMA_FORGE_CONFIG_HPP_
#define DILEMMA_FORGE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "dilemma_forge/harness.hpp"

namespace dilemma_forge::config {

// Parses a JSON experiment config, applies `overrides` ("path=value", where
// path is dotted with optional [i] indices and value is JSON or a bare
// string), and validates the result. Unknown keys are rejected. Every
// ConfigError reads "<source>:<line>: <field>: <reason>", or names the
// override that introduced the bad value.
harness::ExperimentConfig parse(std::string_view text,
                                std::string_view source = "config",
                                std::span<const std::string> overrides = {});

// Throws ConfigError if the file cannot be read.
harness::ExperimentConfig load(const std::filesystem::path& path,
                               std::span<const std::string> overrides = {});

// Every field spelled out, keys sorted, round-trip doubles. parse() of the
// result reproduces the config exactly.
std::string canonical_json(const harness::ExperimentConfig& config);

// FNV-1a 64 of the canonical form without `name`, which is only a label.
std::uint64_t config_hash(const harness::ExperimentConfig& config);
std::string hash_hex(std::uint64_t h);

}  // namespace dilemma_forge::config

#endif  // DILEMMA_FORGE_CONFIG_HPP_
