#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace hrc {

// mt19937_64 output is fixed by the standard; the helpers below avoid the
// <random> distributions, whose output differs between standard libraries.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream for (seed, stream id).
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

// Uniform in [0, 1) with 53 bits of resolution.
double uniform01(Rng& rng);

// Uniform in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

bool bernoulli(Rng& rng, double p);

enum class StreamId : std::uint64_t {
  variant = 1,
  human = 2,
  robot = 3,
};

inline Rng make_stream(std::uint64_t seed, StreamId id) {
  return make_stream(seed, static_cast<std::uint64_t>(id));
}

}  // namespace hrc
