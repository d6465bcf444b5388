#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace dmloc {

/// What a random stream is used for. Part of the stream key, so adding a new
/// consumer never shifts the draws of an existing one.
enum class Purpose : std::uint32_t {
  kInitAgent = 1,
  kInitAnchor,
  kSynthesis,
  kPredictAgent,
  kInterPanel,
  kPredictAnchor,
  kResampleAgent,
  kResampleAnchor,
  kTest = 99,
};

/// Identifies an independent stream: (seed, run, time, panel, purpose, slot).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t run = 0;
  std::uint32_t time = 0;
  std::uint32_t panel = 0;
  Purpose purpose = Purpose::kTest;
  std::uint32_t slot = 0;
};

/// Counter-based generator: output k is a SplitMix64 finalizer applied to
/// (hash(key) + k * golden). Any stream can be reconstructed from its key alone,
/// which is what makes distributed and in-process runs draw identical numbers.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(const StreamKey &key) : base_(hash_key(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(base_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(*this); }
  double normal(double mean, double sd) { return mean + sd * normal_(*this); }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t hash_key(const StreamKey &k) {
    std::uint64_t h = mix(k.seed ^ 0x6A09E667F3BCC908ULL);
    h = mix(h ^ (static_cast<std::uint64_t>(k.run) << 32 | k.time));
    h = mix(h ^ (static_cast<std::uint64_t>(k.panel) << 32 |
                 static_cast<std::uint32_t>(k.purpose)));
    h = mix(h ^ k.slot);
    return h;
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};  // ziggurat
};

}  // namespace dmloc
