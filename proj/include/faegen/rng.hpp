#pragma once

#include <cstdint>
#include <random>

#include "faegen/linalg.hpp"

namespace faegen {

// Seeded random source.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard library distributions are implementation-defined,
// so every transform below is written out here:
//   uniform01  : top 53 bits of one engine draw, scaled by 2^-53, in [0, 1)
//   gaussian   : Box-Muller on two uniform01 draws (1 - u avoids log(0));
//                both outputs of a pair are used, the spare is cached
//   index(n)   : rejection sampling on the raw 64-bit draw, then modulo
// Identical seed and call order give identical sequences on any build.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform01();
    double uniform(double lo, double hi);
    double gaussian(double mean, double stddev);
    // Uniform integer in [0, n). n must be >= 1.
    std::uint64_t index(std::uint64_t n);

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Vector draw_uniform(SeededRng& rng, double lo, double hi, std::size_t n);
Vector draw_gaussian(SeededRng& rng, double mean, double stddev, std::size_t n);

// Derives an independent seed for a named sub-stream (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace faegen
