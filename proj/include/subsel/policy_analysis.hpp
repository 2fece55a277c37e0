#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "subsel/rng.hpp"

namespace subsel {

// Random selection on an (n, l)-CSL graph: l equally sized components,
// nodes drawn uniformly with replacement.
struct PolicyStats {
  double success_prob = 0.0;    // first l draws hit l distinct components
  double expected_draws = 0.0;  // mean draws until every component is hit
  std::size_t trials = 0;
  double std_err = 0.0;  // of whichever quantity the producing call estimates
};

// l! / l^l, evaluated as exp(sum log i - l log l).
inline double random_success_exact(int l) {
  if (l <= 0) throw std::invalid_argument("random_success_exact: l must be >= 1");
  double log_value = 0.0;
  for (int i = 2; i <= l; ++i) log_value += std::log(static_cast<double>(i));
  log_value -= l * std::log(static_cast<double>(l));
  return std::exp(log_value);
}

// l * H_l.
inline double expected_draws_exact(int l) {
  if (l <= 0) throw std::invalid_argument("expected_draws_exact: l must be >= 1");
  double harmonic = 0.0;
  for (int i = l; i >= 1; --i) harmonic += 1.0 / i;
  return l * harmonic;
}

// l * ln l, the leading term of l * H_l (about 460 for l = 100, against
// 518.7 exactly).
inline double expected_draws_asymptotic(int l) {
  if (l <= 0) throw std::invalid_argument("expected_draws_asymptotic: l must be >= 1");
  return l * std::log(static_cast<double>(l));
}

namespace detail {

struct CollectorTally {
  std::size_t successes = 0;
  double draw_sum = 0.0;
  double draw_sq_sum = 0.0;
  std::size_t trials = 0;
};

// One coupon-collector run per trial over l*n node ids. A run succeeds in
// the "l distinct draws" sense iff it finishes after exactly l draws.
inline CollectorTally run_collector(std::size_t n, std::size_t l, std::size_t trials,
                                    std::uint64_t seed) {
  if (n == 0 || l == 0) throw std::invalid_argument("policy simulation: n, l must be >= 1");
  if (trials == 0) throw std::invalid_argument("policy simulation: trials must be >= 1");
  Rng rng(seed);
  CollectorTally tally;
  tally.trials = trials;
  std::vector<bool> hit(l);
  for (std::size_t t = 0; t < trials; ++t) {
    std::fill(hit.begin(), hit.end(), false);
    std::size_t covered = 0;
    std::size_t draws = 0;
    while (covered < l) {
      const std::size_t component = rng.below(l * n) / n;
      ++draws;
      if (!hit[component]) {
        hit[component] = true;
        ++covered;
      }
    }
    if (draws == l) ++tally.successes;
    tally.draw_sum += static_cast<double>(draws);
    tally.draw_sq_sum += static_cast<double>(draws) * static_cast<double>(draws);
  }
  return tally;
}

inline PolicyStats to_stats(const CollectorTally& t) {
  PolicyStats s;
  s.trials = t.trials;
  s.success_prob = static_cast<double>(t.successes) / static_cast<double>(t.trials);
  s.expected_draws = t.draw_sum / static_cast<double>(t.trials);
  return s;
}

}  // namespace detail

// std_err is the binomial standard error of success_prob.
inline PolicyStats random_success_mc(std::size_t n, std::size_t l, std::size_t trials,
                                     std::uint64_t seed) {
  auto stats = detail::to_stats(detail::run_collector(n, l, trials, seed));
  stats.std_err =
      std::sqrt(stats.success_prob * (1.0 - stats.success_prob) / static_cast<double>(trials));
  return stats;
}

// std_err is the standard error of the mean draw count.
inline PolicyStats expected_draws_mc(std::size_t n, std::size_t l, std::size_t trials,
                                     std::uint64_t seed) {
  const auto tally = detail::run_collector(n, l, trials, seed);
  auto stats = detail::to_stats(tally);
  const double m = static_cast<double>(trials);
  const double var =
      trials > 1 ? std::max(0.0, (tally.draw_sq_sum - m * stats.expected_draws *
                                                          stats.expected_draws) /
                                     (m - 1.0))
                 : 0.0;
  stats.std_err = std::sqrt(var / m);
  return stats;
}

}  // namespace subsel
