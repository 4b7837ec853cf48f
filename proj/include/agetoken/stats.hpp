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

// Binomial statistics for the adversary experiments.

#ifndef AGETOKEN_STATS_HPP_
#define AGETOKEN_STATS_HPP_

#include <cmath>
#include <cstdint>

namespace agetoken::stats {

inline double binomial_log_pmf(std::uint64_t k, std::uint64_t n, double p) {
  if (p <= 0.0) return k == 0 ? 0.0 : -INFINITY;
  if (p >= 1.0) return k == n ? 0.0 : -INFINITY;
  const double dk = static_cast<double>(k);
  const double dn = static_cast<double>(n);
  return std::lgamma(dn + 1) - std::lgamma(dk + 1) - std::lgamma(dn - dk + 1) + dk * std::log(p) +
         (dn - dk) * std::log1p(-p);
}

// Exact two-sided p-value: total probability of outcomes no more likely
// than the observed one under Binomial(n, p).
inline double binomial_two_sided_p(std::uint64_t successes, std::uint64_t n, double p) {
  const double observed = binomial_log_pmf(successes, n, p);
  const double slack = 1e-7;
  double total = 0.0;
  for (std::uint64_t i = 0; i <= n; ++i) {
    const double lp = binomial_log_pmf(i, n, p);
    if (lp <= observed + slack) total += std::exp(lp);
  }
  return total > 1.0 ? 1.0 : total;
}

// Probability of rejecting H0: rate = p0 at level alpha when the true rate
// is p1.
inline double binomial_test_power(std::uint64_t n, double p0, double p1, double alpha) {
  double power = 0.0;
  for (std::uint64_t i = 0; i <= n; ++i) {
    if (binomial_two_sided_p(i, n, p0) < alpha) power += std::exp(binomial_log_pmf(i, n, p1));
  }
  return power;
}

// Standard deviation of a mean of n Bernoulli(p) draws.
inline double proportion_sigma(std::uint64_t n, double p) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Wilson score interval at z standard deviations.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double dn = static_cast<double>(n);
  const double phat = static_cast<double>(successes) / dn;
  const double denom = 1.0 + z * z / dn;
  const double centre = (phat + z * z / (2 * dn)) / denom;
  const double half = z * std::sqrt(phat * (1 - phat) / dn + z * z / (4 * dn * dn)) / denom;
  return {centre - half < 0 ? 0 : centre - half, centre + half > 1 ? 1 : centre + half};
}

}  // namespace agetoken::stats

#endif  // AGETOKEN_STATS_HPP_
