#pragma once

#include <cstdint>
#include <random>

namespace nowcast {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream `stream` under a run seed. Streams for different
// purposes are separated by `domain` (chains, predictive draws, backtest
// cells, ...).
inline Rng make_stream(std::uint64_t seed, std::uint64_t domain, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(domain + 0x632be59bd9b4e019ULL));
  const std::uint64_t b = splitmix64(a + stream);
  std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
  return Rng(seq);
}

enum StreamDomain : std::uint64_t {
  kChainStream = 1,
  kPredictiveStream = 2,
  kBacktestStream = 3,
  kSimulateStream = 4,
};

}  // namespace nowcast
