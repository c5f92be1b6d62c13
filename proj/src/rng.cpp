#include "faegen/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "faegen/errors.hpp"

namespace faegen {

double SeededRng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double SeededRng::gaussian(double mean, double stddev) {
    double z;
    if (has_spare_) {
        has_spare_ = false;
        z = spare_;
    } else {
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        z = radius * std::cos(angle);
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
    }
    return mean + stddev * z;
}

std::uint64_t SeededRng::index(std::uint64_t n) {
    if (n == 0) {
        throw InputError("SeededRng::index: empty range");
    }
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

Vector draw_uniform(SeededRng& rng, double lo, double hi, std::size_t n) {
    if (!(lo < hi)) {
        throw InputError("draw_uniform: requires lo < hi");
    }
    Vector out(n);
    for (double& x : out) {
        x = rng.uniform(lo, hi);
    }
    return out;
}

Vector draw_gaussian(SeededRng& rng, double mean, double stddev, std::size_t n) {
    if (stddev < 0.0) {
        throw InputError("draw_gaussian: negative stddev");
    }
    Vector out(n);
    for (double& x : out) {
        x = rng.gaussian(mean, stddev);
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace faegen
