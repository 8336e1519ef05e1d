#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dsf {

/// Seedable generator with platform-independent uniform and normal draws.
///
/// `std::uniform_real_distribution` and `std::normal_distribution` are
/// implementation-defined, so the draws are derived directly from the raw
/// mt19937_64 stream to keep runs bit-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream derived from (seed, name); used for the named
    /// sub-streams (codec, unet-init, noise, augment, sampler, ...).
    static Rng stream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal (Box-Muller, one cached spare).
    double normal();

    /// Child generator; advances this one by a single draw.
    Rng split() { return Rng(mix(next_u64())); }

    static std::uint64_t mix(std::uint64_t x);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// FNV-1a over a string.
std::uint64_t hash_string(std::string_view s);

} // namespace dsf
