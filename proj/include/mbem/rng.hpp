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

#include <cmath>
#include <cstdint>
#include <span>

namespace mbem {

/// Seed of one reproducible random stream.
struct RngSeed {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
};

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Purpose tags that separate the independent streams of one experiment.
enum class StreamTag : std::uint64_t {
  kWorkers = 1,
  kAssignment = 2,
  kCorruption = 3,
  kTrainData = 4,
  kTestData = 5,
  kLearner = 6,
  kSubsample = 7,
  kMonteCarlo = 8,
};

/// Derives the seed of substream (tag, index) below `parent`.
constexpr RngSeed substream(RngSeed parent, StreamTag tag, std::uint64_t index = 0) {
  std::uint64_t s = detail::mix64(parent.stream_id + detail::kGolden);
  s = detail::mix64(s ^ (static_cast<std::uint64_t>(tag) * detail::kGolden));
  s = detail::mix64(s ^ (index + 0x632BE59BD9B4E019ULL));
  return {parent.master_seed, s};
}

/// Counter-based generator: draw i is a pure function of (seed, i).
/// Only integer arithmetic and IEEE-exact operations are used for uniforms,
/// so streams are identical across platforms and thread schedules.
class Rng {
 public:
  explicit Rng(RngSeed seed)
      : key_(detail::mix64(seed.master_seed ^ detail::mix64(seed.stream_id ^ detail::kGolden))) {}

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t uniform_int(std::uint64_t bound) {
    if (bound <= 1) return 0;
    unsigned __int128 product = static_cast<unsigned __int128>(next_u64()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<unsigned __int128>(next_u64()) * bound;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

  /// Index drawn from a discrete distribution given by `probs`.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return k;
    }
    // Rounding left the cumulative sum just below 1; pick the last nonzero cell.
    for (std::size_t k = probs.size(); k-- > 0;) {
      if (probs[k] > 0.0) return k;
    }
    return probs.size() - 1;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mbem
