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

#ifndef AGETOKEN_POLICY_HPP_
#define AGETOKEN_POLICY_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace agetoken {

enum class Assurance : std::uint8_t { kLow = 1, kSubstantial = 2, kHigh = 3 };

std::string_view assurance_name(Assurance a);
Assurance parse_assurance(std::string_view name);

inline constexpr unsigned kMinPolicyAge = 1;
inline constexpr unsigned kMaxPolicyAge = 150;

// Age threshold plus the minimum assurance of the evidence behind it.
// Text form: "<age>+/<assurance>", e.g. "18+/substantial".
struct AgePolicy {
  unsigned minimum_age_years = 18;
  Assurance required_assurance = Assurance::kLow;

  // Throws kInvalidArgument outside [1, 150].
  static AgePolicy make(unsigned minimum_age_years, Assurance required_assurance);
  static AgePolicy parse(std::string_view label);
  std::string label() const;

  // True when a credential for *this also proves `required`.
  bool satisfies(const AgePolicy& required) const {
    return minimum_age_years >= required.minimum_age_years &&
           required_assurance >= required.required_assurance;
  }

  friend bool operator==(const AgePolicy&, const AgePolicy&) = default;
};

// Comma-separated labels, as stored in trusted-list metadata.
std::vector<AgePolicy> parse_policy_list(std::string_view text);
std::string format_policy_list(const std::vector<AgePolicy>& policies);

}  // namespace agetoken

#endif  // AGETOKEN_POLICY_HPP_
