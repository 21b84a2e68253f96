#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tulip::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; a bijective mixer on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over a stream name, so that substreams are addressed by role.
constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the substream `name`/`index` derived from one global seed.
/// Independent of thread count and evaluation order.
constexpr std::uint64_t substream_seed(std::uint64_t global, std::string_view name,
                                       std::uint64_t index = 0) noexcept {
  return mix64(mix64(global ^ hash_name(name)) + mix64(index));
}

inline Engine make_engine(std::uint64_t global, std::string_view name, std::uint64_t index = 0) {
  return Engine(substream_seed(global, name, index));
}

}  // namespace tulip::rng
