#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace stdit {

// 64-bit FNV-1a. Stable everywhere, used to turn stream names and gene ids
// into seed material.
std::uint64_t fnv1a64(std::string_view s);

// Derives the seed of a named stream ("split", "mask", "noise", "downsample",
// "sample/<gene>") from one base seed. All randomness in the pipeline flows
// through streams derived this way, so parallel and serial execution draw the
// same numbers.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

// Deterministic random source. The normal and binomial draws are implemented
// on top of raw 64-bit output only, so identical seeds give identical values
// on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform double in [0, 1)
    double uniform();

    // standard normal via Box-Muller (no cached spare; the state is exactly
    // the engine state)
    double normal();

    // uniform integer in [0, n), unbiased
    std::uint64_t uniform_int(std::uint64_t n);

    // Binomial(count, rate) by direct Bernoulli summation
    long binomial(long count, double rate);

    // Poisson(lambda); Knuth for small lambda, rounded normal approximation
    // above 50
    long poisson(double lambda);

    std::string save_state() const;
    void restore_state(const std::string& text);

  private:
    std::mt19937_64 engine_;
};

}  // namespace stdit
