// Copyright 2026 The agetoken Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scenario engine. Each run builds a fresh deployment on a virtual clock,
// drives clients through it and scores explicit adversary strategies. All
// randomness derives from the seed, so a run is reproducible byte for byte
// and the in-process and HTTP deployments produce the same report.

#ifndef AGETOKEN_SIMHARNESS_HPP_
#define AGETOKEN_SIMHARNESS_HPP_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agetoken/actors.hpp"
#include "agetoken/exchange.hpp"
#include "agetoken/registry.hpp"

namespace agetoken::sim {

inline constexpr double kAlpha = 0.01;
inline constexpr double kSigmaBound = 3.0;
inline constexpr double kRequiredPower = 0.9;

enum class DeploymentKind { kInProcess, kHttp };

std::string_view deployment_name(DeploymentKind kind);
DeploymentKind parse_deployment(std::string_view name);

struct ScenarioConfig {
  std::string scenario;
  std::uint64_t seed = 1;
  std::uint32_t clients = 16;   // unlinkability anonymity set
  std::uint32_t origins = 2;    // double-spend
  std::uint32_t issuers = 2;    // issuer hiding: source issuers
  std::uint32_t tokens = 100;   // double-spend tokens per curve point
  std::uint32_t trials = 500;
  unsigned key_bits = 1024;
  bool sync = false;
  std::chrono::seconds sync_interval{5};
  std::chrono::seconds spend_spacing{10};
  bool collude_issuer_origin = true;
  bool collude_attester = false;
  DeploymentKind deployment = DeploymentKind::kInProcess;

  // Throws kInvalidArgument.
  void validate() const;
};

struct Metric {
  std::string name;
  double value = 0;
  std::uint64_t n = 0;  // sample size, 0 when not a proportion
  std::optional<double> expected;
  std::optional<std::pair<double, double>> ci;  // 99% Wilson interval

  friend bool operator==(const Metric&, const Metric&) = default;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;

  friend bool operator==(const Check&, const Check&) = default;
};

struct ScenarioReport {
  ScenarioConfig config;
  std::vector<Metric> metrics;
  std::vector<Check> checks;
  std::vector<std::string> flags;

  bool pass() const;
  const Metric* metric(std::string_view name) const;
  const Check* check(std::string_view name) const;

  // One JSON object per line: a header, the metrics, the checks, then the
  // verdict. The deployment kind is not recorded.
  std::string to_json_lines() const;
  static ScenarioReport from_json_lines(std::string_view text);
  // Plain-text table for `scenario report`.
  std::string render_table() const;
};

std::vector<std::string> scenario_names();

ScenarioReport run_unlinkability(const ScenarioConfig& config);
ScenarioReport run_double_spend(const ScenarioConfig& config);
ScenarioReport run_issuer_hiding(const ScenarioConfig& config);
ScenarioReport run_token_transfer(const ScenarioConfig& config);

// Dispatches on config.scenario; kInvalidArgument for an unknown name.
ScenarioReport run_scenario(const ScenarioConfig& config);

// Test key for the harness: cached per (bits, seed, label), toy mode below
// 2048 bits.
const blindsig::KeyPair& harness_key(unsigned bits, std::uint64_t seed, const std::string& label);

}  // namespace agetoken::sim

#endif  // AGETOKEN_SIMHARNESS_HPP_
