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

// Test-only reference implementations. None of these share code with the
// library; they exist to check it by an independent route.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace tabaudit::oracle {

// Binomial pmf in long double via log-gamma.
inline long double BinomialPmf(int k, int n, long double p) {
  if (p <= 0.0L) return k == 0 ? 1.0L : 0.0L;
  if (p >= 1.0L) return k == n ? 1.0L : 0.0L;
  const long double log_coef =
      std::lgamma(static_cast<long double>(n) + 1) -
      std::lgamma(static_cast<long double>(k) + 1) -
      std::lgamma(static_cast<long double>(n - k) + 1);
  return std::exp(log_coef + k * std::log(p) + (n - k) * std::log1p(-p));
}

// log(i!) from a table grown on demand; single-threaded use only.
inline long double LogFactorial(int i) {
  static std::vector<long double> table{0.0L};
  while (static_cast<int>(table.size()) <= i) {
    table.push_back(table.back() + std::log(static_cast<long double>(table.size())));
  }
  return table[i];
}

// Sum of pmf terms i in [from, to], logs of p hoisted out of the loop.
inline long double BinomialRange(int from, int to, int n, long double p) {
  if (p <= 0.0L || p >= 1.0L) {
    long double s = 0.0L;
    for (int i = from; i <= to; ++i) s += BinomialPmf(i, n, p);
    return s;
  }
  const long double lp = std::log(p), lq = std::log1p(-p);
  long double s = 0.0L;
  for (int i = from; i <= to; ++i) {
    s += std::exp(LogFactorial(n) - LogFactorial(i) - LogFactorial(n - i) + i * lp +
                  (n - i) * lq);
  }
  return s;
}

// P(X <= k) for X ~ Binomial(n, p), summed term by term.
inline long double BinomialCdf(int k, int n, long double p) {
  return BinomialRange(0, k, n, p);
}

// P(X >= k).
inline long double BinomialUpperTail(int k, int n, long double p) {
  return BinomialRange(k, n, n, p);
}

// Bisection for a monotone function on [0, 1]: finds p with f(p) = target,
// where `increasing` states the direction of f.
inline double Bisect01(const std::function<long double(long double)>& f,
                       long double target, bool increasing) {
  long double lo = 0.0L, hi = 1.0L;
  for (int i = 0; i < 96; ++i) {
    const long double mid = 0.5L * (lo + hi);
    const bool below = f(mid) < target;
    if (below == increasing) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return static_cast<double>(0.5L * (lo + hi));
}

// Clopper-Pearson two-sided interval by inverting exact binomial tails.
struct Interval {
  double lo;
  double hi;
};

inline Interval ClopperPearsonByBisection(int k, int n, double confidence) {
  const long double tail = (1.0L - confidence) / 2.0L;
  Interval r{0.0, 1.0};
  if (k > 0) {
    // Lower limit: P(X >= k | p) = tail, increasing in p.
    r.lo = Bisect01([&](long double p) { return BinomialUpperTail(k, n, p); },
                    tail, true);
  }
  if (k < n) {
    // Upper limit: P(X <= k | p) = tail, decreasing in p.
    r.hi = Bisect01([&](long double p) { return BinomialCdf(k, n, p); }, tail,
                    false);
  }
  return r;
}

// One-sided upper limit at `level`.
inline double UpperLimitByBisection(int k, int n, double level) {
  if (k == n) return 1.0;
  return Bisect01([&](long double p) { return BinomialCdf(k, n, p); },
                  1.0L - level, false);
}

// erf by its Maclaurin series in long double; accurate for |x| <= 3.
inline long double ErfSeries(long double x) {
  long double sum = 0.0L;
  long double term = x;  // x^(2n+1) (-1)^n / n!
  for (int n = 0; n < 200; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
  }
  return 2.0L / std::sqrt(3.14159265358979323846264338327950288L) * sum;
}

inline long double NormalCdfSeries(long double x) {
  return 0.5L * (1.0L + ErfSeries(x / std::sqrt(2.0L)));
}

// Brute-force effective epsilon: evaluate both inequalities explicitly.
inline double EffectiveEpsilonBruteForce(double alpha, double beta,
                                         double delta) {
  double best = 1.0;
  const double n1 = 1.0 - alpha - delta;
  const double n2 = 1.0 - beta - delta;
  if (n1 > 0) best = std::max(best, beta > 0 ? n1 / beta : INFINITY);
  if (n2 > 0) best = std::max(best, alpha > 0 ? n2 / alpha : INFINITY);
  return std::log(best);
}

// Central finite-difference gradient of f at x.
inline std::vector<double> FiniteDifference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace tabaudit::oracle
