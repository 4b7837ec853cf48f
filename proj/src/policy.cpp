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

#include "agetoken/policy.hpp"

#include <charconv>

#include "agetoken/common.hpp"

namespace agetoken {

std::string_view assurance_name(Assurance a) {
  switch (a) {
    case Assurance::kLow: return "low";
    case Assurance::kSubstantial: return "substantial";
    case Assurance::kHigh: return "high";
  }
  return "low";
}

Assurance parse_assurance(std::string_view name) {
  if (name == "low") return Assurance::kLow;
  if (name == "substantial") return Assurance::kSubstantial;
  if (name == "high") return Assurance::kHigh;
  throw Error(ErrorCode::kInvalidArgument, "unknown assurance level '" + std::string(name) + "'");
}

AgePolicy AgePolicy::make(unsigned minimum_age_years, Assurance required_assurance) {
  if (minimum_age_years < kMinPolicyAge || minimum_age_years > kMaxPolicyAge) {
    throw Error(ErrorCode::kInvalidArgument, "minimum age must be within [1, 150]");
  }
  return AgePolicy{minimum_age_years, required_assurance};
}

AgePolicy AgePolicy::parse(std::string_view label) {
  const auto plus = label.find("+/");
  if (plus == std::string_view::npos || plus == 0) {
    throw Error(ErrorCode::kInvalidArgument, "policy label must look like 18+/low");
  }
  unsigned age = 0;
  auto [ptr, ec] = std::from_chars(label.data(), label.data() + plus, age);
  if (ec != std::errc() || ptr != label.data() + plus) {
    throw Error(ErrorCode::kInvalidArgument, "policy age is not a number");
  }
  return make(age, parse_assurance(label.substr(plus + 2)));
}

std::string AgePolicy::label() const {
  return std::to_string(minimum_age_years) + "+/" + std::string(assurance_name(required_assurance));
}

std::vector<AgePolicy> parse_policy_list(std::string_view text) {
  std::vector<AgePolicy> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    out.push_back(AgePolicy::parse(item));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_policy_list(const std::vector<AgePolicy>& policies) {
  std::string out;
  for (const AgePolicy& p : policies) {
    if (!out.empty()) out += ',';
    out += p.label();
  }
  return out;
}

}  // namespace agetoken
