#pragma once

#include <cstdint>
#include <string_view>

namespace alcr {

/// Counter-based random stream: the i-th value depends only on (seed, i).
/// Streams can therefore be keyed per utterance/epoch/purpose and consumed in
/// any order, which keeps parallel and serial execution byte-identical.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  std::uint64_t next_u64() { return value_at(counter_++); }

  /// Uniform double in [0, 1).
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be >= 1.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal deviate (Box-Muller; consumes two counter slots).
  double gaussian();

  /// Value at an explicit counter position, without advancing the stream.
  std::uint64_t value_at(std::uint64_t i) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

/// FNV-1a hash of a byte string; used to key streams by name.
std::uint64_t fnv1a(std::string_view s);

/// Mixes one extra key into a seed (order-sensitive).
std::uint64_t mix_key(std::uint64_t seed, std::uint64_t key);

/// Stream keyed by (seed, parts...) — e.g. (global_seed, utterance_id, epoch).
RngStream keyed_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);
RngStream keyed_stream(std::uint64_t seed, std::string_view tag);
RngStream keyed_stream(std::uint64_t seed, std::string_view tag, std::uint64_t a);
RngStream keyed_stream(std::uint64_t seed, std::string_view tag, std::string_view id,
                       std::uint64_t a);

}  // namespace alcr
