#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

namespace archimax {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent engine for substream `stream` of a root seed. Streams are keyed
// by a counter, so the draws of a given block never depend on how many
// blocks exist or which thread runs them.
inline Engine substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s))};
  return Engine(seq);
}

// Uniform on the open interval (0,1) from the top 53 bits.
inline double uniform01(Engine& g) {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

inline double std_exponential(Engine& g) { return -std::log(uniform01(g)); }

// Box-Muller without caching, so every call consumes exactly two words.
inline double std_normal(Engine& g) {
  const double u1 = uniform01(g);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------------------
// Thread cap. Results never depend on it: work is split into fixed-size
// blocks with their own substreams and merged in block order.

inline unsigned& thread_cap_ref() {
  static unsigned cap = 0;
  return cap;
}

inline void set_thread_cap(unsigned n) { thread_cap_ref() = n; }

// Worker count: the explicit cap when set, otherwise the hardware width.
inline unsigned thread_count() {
  const unsigned cap = thread_cap_ref();
  return cap == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cap;
}

// Calls fn(block, begin, end) for every block of `block_size` items in
// [0, n). Blocks are distributed round-robin over the worker threads.
inline void parallel_blocks(std::size_t n, std::size_t block_size,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t nblocks = (n + block_size - 1) / block_size;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), nblocks));
  auto run = [&](unsigned w) {
    for (std::size_t b = w; b < nblocks; b += workers) {
      const std::size_t lo = b * block_size;
      fn(b, lo, std::min(n, lo + block_size));
    }
  };
  if (workers <= 1) {
    run(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  for (auto& t : pool) t.join();
}

}  // namespace archimax
