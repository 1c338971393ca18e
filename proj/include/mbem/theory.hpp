/* Copyright (c) 2026 The mbem Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

// Worker-quality functionals for binary classification and the redundancy
// trade-off they induce under a fixed annotation budget N = n * r.
//
// For a batch of r workers w, labels Z in {0,1}^r and truth y:
//   rho_hat(y | Z, w) = posterior of y under the estimated confusions,
//   tau(y, Z, w)      = P[Z | Y = y, w] under the true confusions,
//   beta = E_w[ max_y sum_Z rho_hat(1 - y | Z, w) * tau(y, Z, w) ],
//   alpha = E_w[ max_y P[Z != y | Y = y, w] ]   (single worker).
// Excess risk scales with sqrt(r) / (1 - 2 beta); logarithms are natural.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mbem/core.hpp"
#include "mbem/matrix.hpp"
#include "mbem/rng.hpp"

namespace mbem {

/// Input outside the region where a quantity is finite or defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Upper bound on beta for identical single-parameter workers whose
/// confusion estimates are off by at most epsilon:
///   (rho+eps)^r * sum_u C(r,u) / (tau^u + tau^(r-u)),  tau = (rho+eps)/(1-rho-eps).
inline double beta_eps_closed_form(double rho, double epsilon, std::size_t r) {
  const double p = rho + epsilon;
  if (!(rho >= 0.0) || !(epsilon >= 0.0)) throw DomainError("beta_eps: rho and epsilon must be nonnegative");
  if (!(p < 0.5)) throw DomainError("beta_eps: rho + epsilon must be below 1/2");
  if (r == 0) throw DomainError("beta_eps: redundancy must be >= 1");
  if (p == 0.0) return 0.0;

  const double tau = p / (1.0 - p);
  const auto rr = static_cast<double>(r);
  double sum = 0.0;
  if (r <= 30) {
    double binom = 1.0;
    for (std::size_t u = 0; u <= r; ++u) {
      sum += binom / (std::pow(tau, static_cast<double>(u)) + std::pow(tau, static_cast<double>(r - u)));
      binom = binom * static_cast<double>(r - u) / static_cast<double>(u + 1);
    }
    return std::pow(p, rr) * sum;
  }
  const double log_tau = std::log(tau);
  const double log_p = std::log(p);
  for (std::size_t u = 0; u <= r; ++u) {
    const auto uu = static_cast<double>(u);
    const double log_binom = std::lgamma(rr + 1.0) - std::lgamma(uu + 1.0) - std::lgamma(rr - uu + 1.0);
    const double a = uu * log_tau, b = (rr - uu) * log_tau;
    const double log_den = std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
    sum += std::exp(log_binom + rr * log_p - log_den);
  }
  return sum;
}

/// sqrt(r) / (1 - 2 beta_eps): the redundancy-dependent part of the excess
/// risk bound with constants dropped. +infinity when beta_eps >= 1/2.
inline double bound_factor(double rho, double epsilon, std::size_t r) {
  if (!(rho + epsilon < 0.5)) return std::numeric_limits<double>::infinity();
  const double beta = beta_eps_closed_form(rho, epsilon, r);
  if (beta >= 0.5) return std::numeric_limits<double>::infinity();
  return std::sqrt(static_cast<double>(r)) / (1.0 - 2.0 * beta);
}

/// Redundancy in 1..r_max minimising bound_factor; ties go to the smaller r.
inline std::size_t optimal_redundancy(double rho, double epsilon, std::size_t r_max) {
  if (!(rho + epsilon < 0.5)) throw DomainError("optimal_redundancy: rho + epsilon must be below 1/2");
  if (r_max < 1) throw DomainError("optimal_redundancy: r_max must be >= 1");
  std::size_t best = 1;
  double best_factor = bound_factor(rho, epsilon, 1);
  for (std::size_t r = 2; r <= r_max; ++r) {
    const double f = bound_factor(rho, epsilon, r);
    if (f < best_factor) {
      best = r;
      best_factor = f;
    }
  }
  return best;
}

/// Mean over workers of the larger off-diagonal entry (binary only).
inline double alpha_general(std::span<const ConfusionMatrix> confusions) {
  if (confusions.empty()) throw Error("alpha: empty worker pool");
  double acc = 0.0;
  for (const auto& c : confusions) {
    if (c.num_classes() != 2) throw Error("alpha is defined for binary classification only");
    acc += std::max(c(0, 1), c(1, 0));
  }
  return acc / static_cast<double>(confusions.size());
}

struct BetaEstimate {
  double value = 0.0;
  /// Zero when computed by exact enumeration.
  double std_error = 0.0;
  bool exact = true;
  std::size_t tuples = 0;
};

struct BetaOptions {
  /// Enumerate every worker tuple when m^r does not exceed this.
  std::uint64_t max_exact_tuples = 1'000'000;
  std::size_t monte_carlo_tuples = 100'000;
  RngSeed seed{};
};

namespace detail {

// max_y sum_Z rho_hat(1-y | Z, w) tau(y, Z, w) for one worker tuple.
inline double beta_inner(std::span<const ConfusionMatrix> truth, std::span<const ConfusionMatrix> estimate,
                         const ClassPrior& prior, std::span<const std::size_t> tuple) {
  const std::size_t r = tuple.size();
  double best = 0.0;
  for (std::size_t y = 0; y < 2; ++y) {
    double acc = 0.0;
    for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << r); ++pattern) {
      double tau = 1.0, lik_y = prior.probs[y], lik_other = prior.probs[1 - y];
      for (std::size_t j = 0; j < r; ++j) {
        const std::size_t z = (pattern >> j) & 1U;
        tau *= truth[tuple[j]](y, z);
        lik_y *= estimate[tuple[j]](y, z);
        lik_other *= estimate[tuple[j]](1 - y, z);
      }
      if (tau == 0.0) continue;
      const double den = lik_y + lik_other;
      const double rho_other = den > 0.0 ? lik_other / den : prior.probs[1 - y];
      acc += rho_other * tau;
    }
    best = std::max(best, acc);
  }
  return best;
}

}  // namespace detail

/// beta for arbitrary binary workers drawn uniformly with replacement from the
/// pool. Exact over all m^r worker tuples when that count is small enough,
/// otherwise a Monte-Carlo average with its standard error.
inline BetaEstimate beta_general_binary(std::span<const ConfusionMatrix> confusions,
                                        std::span<const ConfusionMatrix> estimates, const ClassPrior& prior,
                                        std::size_t r, const BetaOptions& opts = {}) {
  if (confusions.empty() || confusions.size() != estimates.size()) {
    throw Error("beta: need one true and one estimated confusion matrix per worker");
  }
  for (std::size_t a = 0; a < confusions.size(); ++a) {
    if (confusions[a].num_classes() != 2 || estimates[a].num_classes() != 2) {
      throw Error("beta is defined for binary classification only");
    }
  }
  if (prior.probs.size() != 2) throw Error("beta: prior must have two entries");
  if (r < 1 || r > 12) throw DomainError("beta: redundancy must be in 1..12");

  const std::uint64_t m = confusions.size();
  std::uint64_t total = 1;
  bool exact = true;
  for (std::size_t j = 0; j < r; ++j) {
    if (total > opts.max_exact_tuples / m) {
      exact = false;
      break;
    }
    total *= m;
  }

  BetaEstimate out;
  std::vector<std::size_t> tuple(r, 0);
  if (exact) {
    double acc = 0.0;
    for (std::uint64_t t = 0; t < total; ++t) {
      std::uint64_t code = t;
      for (std::size_t j = 0; j < r; ++j) {
        tuple[j] = static_cast<std::size_t>(code % m);
        code /= m;
      }
      acc += detail::beta_inner(confusions, estimates, prior, tuple);
    }
    out.value = acc / static_cast<double>(total);
    out.tuples = static_cast<std::size_t>(total);
    return out;
  }

  Rng rng(opts.seed);
  double mean = 0.0, m2 = 0.0;
  const std::size_t samples = opts.monte_carlo_tuples;
  for (std::size_t t = 0; t < samples; ++t) {
    for (auto& w : tuple) w = static_cast<std::size_t>(rng.uniform_int(m));
    const double v = detail::beta_inner(confusions, estimates, prior, tuple);
    const double delta = v - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (v - mean);
  }
  out.value = mean;
  out.exact = false;
  out.tuples = samples;
  out.std_error = samples > 1 ? std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples)) : 0.0;
  return out;
}

/// Inputs of the sample-size and error-bound formulas. `budget` is the total
/// annotation count N; `vc_dim` stands in for the VC dimension.
struct TheoryParams {
  double rho = 0.0;
  double epsilon = 0.0;
  std::size_t redundancy = 1;
  double vc_dim = 1.0;
  double delta = 0.1;
  std::size_t num_workers = 1;
  double budget = 0.0;
};

struct SampleSizeCondition {
  double learning_branch = 0.0;
  double estimation_branch = 0.0;
  double required_budget = 0.0;
  bool satisfied = false;
};

/// N >= max{ C r ((sqrt(V) + sqrt(log(1/delta))) / (1 - 2 alpha))^2,
///           2^12 m log(2^6 m / delta) }.
inline SampleSizeCondition sample_size_condition(const TheoryParams& p, double alpha, double constant = 1.0) {
  if (!(alpha < 0.5)) throw DomainError("sample_size_condition: alpha must be below 1/2");
  if (!(p.delta > 0.0 && p.delta <= 1.0)) throw DomainError("sample_size_condition: delta must be in (0,1]");
  const double root = (std::sqrt(p.vc_dim) + std::sqrt(std::log(1.0 / p.delta))) / (1.0 - 2.0 * alpha);
  SampleSizeCondition out;
  out.learning_branch = constant * static_cast<double>(p.redundancy) * root * root;
  const auto m = static_cast<double>(p.num_workers);
  out.estimation_branch = 4096.0 * m * std::log(64.0 * m / p.delta);
  out.required_budget = std::max(out.learning_branch, out.estimation_branch);
  out.satisfied = p.budget >= out.required_budget;
  return out;
}

/// Excess-risk term of the first-round model:
///   min_risk + C (sqrt(V) + sqrt(log(1/delta))) / ((1 - 2 quality) sqrt(N / r)),
/// where quality is alpha (or beta_eps for the later rounds).
inline double excess_risk_gamma(double min_risk, const TheoryParams& p, double quality, double constant = 1.0) {
  if (!(quality < 0.5)) throw DomainError("excess_risk_gamma: worker quality term must be below 1/2");
  const double n = p.budget / static_cast<double>(p.redundancy);
  return min_risk + constant * (std::sqrt(p.vc_dim) + std::sqrt(std::log(1.0 / p.delta))) /
                        ((1.0 - 2.0 * quality) * std::sqrt(n));
}

/// Bound on the largest confusion-estimation error:
///   2^4 gamma + 2^8 sqrt(m log(2^6 m / delta) / N).
inline double confusion_error_bound(double gamma, const TheoryParams& p) {
  const auto m = static_cast<double>(p.num_workers);
  return 16.0 * gamma + 256.0 * std::sqrt(m * std::log(64.0 * m / p.delta) / p.budget);
}

}  // namespace mbem
