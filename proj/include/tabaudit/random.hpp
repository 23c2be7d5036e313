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

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

namespace tabaudit {

// SplitMix64 finalizer. Every derived seed in the toolkit goes through this
// function; std::hash is never used for seeding.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Keyed 64-bit hash: Hash64(seed, key) is the seed of stream `key` under
// master `seed`.
constexpr std::uint64_t Hash64(std::uint64_t seed, std::uint64_t key) {
  return Mix64(seed ^ Mix64(key ^ 0xD1B54A32D192ED03ULL));
}

// Stream tags so that independent consumers of one seed never share draws.
namespace stream_tag {
inline constexpr std::uint64_t kInit = 0x696E6974;      // "init"
inline constexpr std::uint64_t kBatch = 0x62617463;     // "batc"
inline constexpr std::uint64_t kNoise = 0x6E6F6973;     // "nois"
inline constexpr std::uint64_t kBits = 0x62697473;      // "bits"
inline constexpr std::uint64_t kSubsample = 0x73756273; // "subs"
inline constexpr std::uint64_t kSample = 0x73616D70;    // "samp"
inline constexpr std::uint64_t kTargets = 0x74617267;   // "targ"
inline constexpr std::uint64_t kLatent = 0x6C61746E;    // "latn"
inline constexpr std::uint64_t kTrials = 0x7472696C;    // "tril"
}  // namespace stream_tag

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t key) : engine_(Hash64(seed, key)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  double Normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Uniform index in [0, n).
  std::size_t Index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  template <typename Container>
  void Shuffle(Container& c) {
    std::shuffle(c.begin(), c.end(), engine_);
  }

 private:
  std::mt19937_64 engine_;
};

// Sample k distinct indices from [0, n) uniformly, returned in draw order.
inline std::vector<std::size_t> SampleWithoutReplacement(std::size_t n,
                                                         std::size_t k,
                                                         Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.Index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index; the first exception is rethrown after all threads join.
template <typename Fn>
void ParallelFor(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace tabaudit
