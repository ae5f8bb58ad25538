#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

namespace ssqp {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (stream_id, iteration, tag, index), so replays are bitwise identical no
// matter how runs are ordered or threaded.
namespace philox {

inline void round_once(std::array<std::uint32_t, 4>& ctr,
                       std::array<std::uint32_t, 2>& key) {
  constexpr std::uint64_t kMul0 = 0xD2511F53u;
  constexpr std::uint64_t kMul1 = 0xCD9E8D57u;
  const std::uint64_t p0 = kMul0 * ctr[0];
  const std::uint64_t p1 = kMul1 * ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  key[0] += 0x9E3779B9u;
  key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) round_once(ctr, key);
  return ctr;
}

}  // namespace philox

// FNV-1a, used to derive stream ids from human-readable run keys.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Component tags keep draws for different quantities on disjoint counters.
enum class StreamTag : std::uint32_t {
  kGradientNoise = 1,
  kConstraintNoise = 2,
  kJacobianNoise = 3,
  kObjectiveBatch = 4,
  kConstraintBatch = 5,
  kInitialPoint = 6,
  kConstraintPool = 7,
  kLipschitzSamples = 8,
  kDataset = 9,
};

// One logical substream: the draws consumed by one component at one iteration.
// Stateful cursor; construction resets it, so replay is deterministic.
class SubStream {
 public:
  SubStream(std::uint64_t stream_id, std::uint32_t iteration, StreamTag tag,
            std::uint32_t attempt = 0)
      : key_{static_cast<std::uint32_t>(stream_id),
             static_cast<std::uint32_t>(stream_id >> 32)},
        c0_(iteration),
        c1_((static_cast<std::uint32_t>(tag) << 8) | (attempt & 0xFFu)) {}

  // 53-bit uniform in [0, 1).
  double uniform() {
    const std::uint64_t bits = next_u64();
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes two uniforms.
  double gaussian() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Unbiased integer in [0, bound) by rejection on the top multiple.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

 private:
  std::uint64_t next_u64() {
    const std::uint64_t block_index = cursor_ >> 1;
    const unsigned half = static_cast<unsigned>(cursor_ & 1u);
    ++cursor_;
    const auto words = philox::block(
        {c0_, c1_, static_cast<std::uint32_t>(block_index),
         static_cast<std::uint32_t>(block_index >> 32)},
        key_);
    return (static_cast<std::uint64_t>(words[2 * half + 1]) << 32) |
           words[2 * half];
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t c0_, c1_;
  std::uint64_t cursor_ = 0;
};

// Handle for a run's randomness. Cheap to copy; all state is the id.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t stream_id) : id_(stream_id) {}

  static RandomStream from_key(const std::string& canonical_key) {
    return RandomStream(fnv1a64(canonical_key));
  }

  std::uint64_t id() const { return id_; }

  SubStream at(std::uint32_t iteration, StreamTag tag,
               std::uint32_t attempt = 0) const {
    return SubStream(id_, iteration, tag, attempt);
  }

 private:
  std::uint64_t id_;
};

}  // namespace ssqp
