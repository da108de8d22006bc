#include "alcr/rng.hpp"

#include <cmath>
#include <numbers>

namespace alcr {

namespace {

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::value_at(std::uint64_t i) const {
  return mix64(seed_ + 0x9E3779B97F4A7C15ull * (i + 1));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

double RngStream::gaussian() {
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t mix_key(std::uint64_t seed, std::uint64_t key) {
  return mix64(seed ^ mix64(key));
}

RngStream keyed_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = seed;
  for (std::uint64_t p : parts) s = mix_key(s, p);
  return RngStream(s);
}

RngStream keyed_stream(std::uint64_t seed, std::string_view tag) {
  return keyed_stream(seed, {fnv1a(tag)});
}

RngStream keyed_stream(std::uint64_t seed, std::string_view tag, std::uint64_t a) {
  return keyed_stream(seed, {fnv1a(tag), a});
}

RngStream keyed_stream(std::uint64_t seed, std::string_view tag, std::string_view id,
                       std::uint64_t a) {
  return keyed_stream(seed, {fnv1a(tag), fnv1a(id), a});
}

}  // namespace alcr
