// Copyright 2026 The Tabaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Closed-form privacy mathematics: effective epsilon from attack error rates,
// exact binomial confidence intervals, and Gaussian-DP accounting.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "tabaudit/error.hpp"

namespace tabaudit {

// A non-negative real that may also be "unbounded". Used for effective
// epsilon, which is infinite when an attack makes no errors of one kind.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr explicit ExtendedReal(double value) : value_(value) {}

  static constexpr ExtendedReal Unbounded() {
    ExtendedReal r;
    r.unbounded_ = true;
    return r;
  }

  constexpr bool bounded() const { return !unbounded_; }

  // Finite value; +infinity when unbounded (for arithmetic convenience only).
  constexpr double value() const {
    return unbounded_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr bool operator==(const ExtendedReal& a,
                                   const ExtendedReal& b) {
    return a.unbounded_ == b.unbounded_ && (a.unbounded_ || a.value_ == b.value_);
  }
  friend constexpr bool operator<(const ExtendedReal& a,
                                  const ExtendedReal& b) {
    if (a.unbounded_) return false;
    if (b.unbounded_) return true;
    return a.value_ < b.value_;
  }
  friend constexpr bool operator<=(const ExtendedReal& a,
                                   const ExtendedReal& b) {
    return !(b < a);
  }

  std::string ToString() const {
    return unbounded_ ? std::string("unbounded") : std::to_string(value_);
  }

 private:
  double value_ = 0.0;
  bool unbounded_ = false;
};

struct PrivacyParams {
  double epsilon = 0.0;
  double delta = 0.0;

  void Validate() const {
    Require(std::isfinite(epsilon) && epsilon >= 0.0,
            "epsilon must be finite and non-negative");
    Require(delta >= 0.0 && delta < 1.0, "delta must lie in [0, 1)");
  }
};

struct ErrorRates {
  double alpha = 0.0;  // type-I: predicted member although target absent
  double beta = 0.0;   // type-II: predicted non-member although present

  void Validate() const {
    Require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    Require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0, 1]");
  }
};

// Counts over attack trials. Positive = "target was in the training data".
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }
};

struct GdpParam {
  double mu = 0.0;
};

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 1.0;
  double confidence = 0.95;
};

// H0 is "target NOT in training data": alpha = fp/(fp+tn), beta = fn/(fn+tp).
inline ErrorRates ComputeErrorRates(const ConfusionCounts& c) {
  if (c.positives() == 0 || c.negatives() == 0) {
    Fail(ErrorCode::kDegenerateInput,
         "error rates need at least one positive and one negative trial");
  }
  return {static_cast<double>(c.fp) / static_cast<double>(c.negatives()),
          static_cast<double>(c.fn) / static_cast<double>(c.positives())};
}

namespace internal {

// One branch of the effective-epsilon bound: numerator / denominator, where a
// zero denominator with positive numerator is unbounded.
inline ExtendedReal RatioBranch(double numerator, double denominator) {
  if (numerator <= 0.0) return ExtendedReal(0.0);
  if (denominator <= 0.0) return ExtendedReal::Unbounded();
  return ExtendedReal(numerator / denominator);
}

}  // namespace internal

// log max((1-alpha-delta)/beta, (1-beta-delta)/alpha), clamped below at 0.
inline ExtendedReal EffectiveEpsilonPoint(const ErrorRates& r, double delta) {
  r.Validate();
  Require(delta >= 0.0 && delta < 1.0, "delta must lie in [0, 1)");
  const ExtendedReal a = internal::RatioBranch(1.0 - r.alpha - delta, r.beta);
  const ExtendedReal b = internal::RatioBranch(1.0 - r.beta - delta, r.alpha);
  const ExtendedReal ratio = a < b ? b : a;
  if (!ratio.bounded()) return ratio;
  if (ratio.value() <= 1.0) return ExtendedReal(0.0);
  return ExtendedReal(std::log(ratio.value()));
}

// Upper bound on the accuracy of any membership test against an
// (epsilon, delta)-DP mechanism.
inline double AccuracyBound(const PrivacyParams& p) {
  p.Validate();
  // (e^eps + delta) / (1 + e^eps), written to stay finite for huge epsilon.
  const double t = std::exp(-p.epsilon);
  return std::min(1.0, (1.0 + p.delta * t) / (t + 1.0));
}

// One-sided upper confidence limit for a binomial proportion at `level`:
// the `level` quantile of Beta(k + 1, n - k).
inline double ClopperPearsonUpper(std::uint64_t successes, std::uint64_t trials,
                                  double level) {
  Require(trials >= 1, "trials must be >= 1");
  Require(successes <= trials, "successes must not exceed trials");
  Require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
  if (successes == trials) return 1.0;
  return boost::math::ibeta_inv(static_cast<double>(successes + 1),
                                static_cast<double>(trials - successes), level);
}

// One-sided lower confidence limit: the (1 - level) quantile of
// Beta(k, n - k + 1).
inline double ClopperPearsonLower(std::uint64_t successes, std::uint64_t trials,
                                  double level) {
  Require(trials >= 1, "trials must be >= 1");
  Require(successes <= trials, "successes must not exceed trials");
  Require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
  if (successes == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(successes),
                                static_cast<double>(trials - successes + 1),
                                1.0 - level);
}

// Exact two-sided Clopper-Pearson interval.
inline ConfidenceInterval ClopperPearson(std::uint64_t successes,
                                         std::uint64_t trials,
                                         double confidence) {
  Require(confidence > 0.0 && confidence < 1.0,
          "confidence must lie in (0, 1)");
  const double tail_level = 1.0 - (1.0 - confidence) / 2.0;
  ConfidenceInterval ci;
  ci.lo = ClopperPearsonLower(successes, trials, tail_level);
  ci.hi = ClopperPearsonUpper(successes, trials, tail_level);
  ci.confidence = confidence;
  return ci;
}

// Upper confidence limits on alpha and beta, each one-sided at
// 1 - (1 - confidence) / 2 so that they hold jointly (Bonferroni).
inline ErrorRates UpperErrorRates(const ConfusionCounts& c, double confidence) {
  if (c.positives() == 0 || c.negatives() == 0) {
    Fail(ErrorCode::kDegenerateInput,
         "error rates need at least one positive and one negative trial");
  }
  Require(confidence > 0.0 && confidence < 1.0,
          "confidence must lie in (0, 1)");
  const double level = 1.0 - (1.0 - confidence) / 2.0;
  return {ClopperPearsonUpper(c.fp, c.negatives(), level),
          ClopperPearsonUpper(c.fn, c.positives(), level)};
}

inline ExtendedReal EffectiveEpsilonLowerBound(const ConfusionCounts& c,
                                               double delta,
                                               double confidence) {
  return EffectiveEpsilonPoint(UpperErrorRates(c, confidence), delta);
}

// Standard normal CDF. Saturates outside [-8, 8].
inline double NormalCdf(double x) {
  if (x < -8.0) return 0.0;
  if (x > 8.0) return 1.0;
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// delta(eps) = Phi(-eps/mu + mu/2) - e^eps Phi(-eps/mu - mu/2) for mu-GDP.
inline double GdpDeltaOfEpsilon(const GdpParam& g, double epsilon) {
  Require(g.mu >= 0.0, "mu must be non-negative");
  Require(epsilon >= 0.0, "epsilon must be non-negative");
  if (g.mu == 0.0) return 0.0;
  if (std::isinf(epsilon)) return 0.0;
  const double first = NormalCdf(-epsilon / g.mu + g.mu / 2.0);
  // e^eps * Phi(t) in log space and without saturating Phi: the saturated
  // tail would be multiplied by a potentially huge e^eps.
  const double t = -epsilon / g.mu - g.mu / 2.0;
  const double tail = 0.5 * std::erfc(-t / std::numbers::sqrt2);
  const double second = tail > 0.0 ? std::exp(epsilon + std::log(tail)) : 0.0;
  return std::clamp(first - second, 0.0, 1.0);
}

// Smallest epsilon with delta(epsilon) <= delta, found by bisection.
inline double GdpEpsilonForDelta(const GdpParam& g, double delta) {
  Require(g.mu >= 0.0 && std::isfinite(g.mu), "mu must be finite and >= 0");
  Require(delta > 0.0 && delta < 1.0,
          "delta must lie in (0, 1) for Gaussian accounting");
  if (g.mu == 0.0 || GdpDeltaOfEpsilon(g, 0.0) <= delta) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (GdpDeltaOfEpsilon(g, hi) > delta) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (GdpDeltaOfEpsilon(g, mid) > delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

// Largest mu whose (epsilon, delta(epsilon)) satisfies delta(epsilon) <= delta.
inline GdpParam GdpMuForEpsilon(double epsilon, double delta) {
  Require(epsilon >= 0.0 && std::isfinite(epsilon),
          "epsilon must be finite and >= 0");
  Require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  while (GdpDeltaOfEpsilon({hi}, epsilon) <= delta) {
    lo = hi;
    hi *= 2.0;
    Require(hi < 1e6, "no finite mu bound found");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (GdpDeltaOfEpsilon({mid}, epsilon) <= delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo};
}

// Root-sum-square composition.
inline GdpParam GdpCompose(std::span<const GdpParam> mus) {
  double sum_sq = 0.0;
  for (const auto& g : mus) {
    Require(g.mu >= 0.0, "mu must be non-negative");
    sum_sq += g.mu * g.mu;
  }
  return {std::sqrt(sum_sq)};
}

// CLT approximation for `steps` Poisson-subsampled Gaussian steps:
// mu = p * sqrt(T * (e^(1/sigma^2) - 1)).
inline GdpParam SubsampledGdpMu(double noise_multiplier, double sample_rate,
                                std::uint64_t steps) {
  Require(noise_multiplier > 0.0,
          "noise multiplier must be positive for a finite GDP bound");
  Require(sample_rate > 0.0 && sample_rate <= 1.0,
          "sample rate must lie in (0, 1]");
  Require(steps >= 1, "steps must be positive");
  const double growth =
      std::expm1(1.0 / (noise_multiplier * noise_multiplier));
  const double mu =
      sample_rate * std::sqrt(static_cast<double>(steps) * growth);
  Require(std::isfinite(mu), "noise multiplier too small for finite GDP");
  return {mu};
}

// Gaussian noise std that makes a query with the given L2 sensitivity
// (epsilon, delta)-DP via GDP.
inline double GaussianNoiseStdFor(double epsilon, double delta,
                                  double l2_sensitivity) {
  Require(l2_sensitivity > 0.0, "sensitivity must be positive");
  const GdpParam g = GdpMuForEpsilon(epsilon, delta);
  Require(g.mu > 0.0, "epsilon/delta admit no finite noise level");
  return l2_sensitivity / g.mu;
}

}  // namespace tabaudit
