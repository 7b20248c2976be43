#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace nsrl {

/// Mixes a stream id into a base seed (splitmix64 finalizer). Used to derive
/// independent sub-streams, e.g. one reward table per schedule block.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random stream. The engine is the standardized mt19937_64;
/// every distribution transform is implemented explicitly so that a given
/// seed produces the same draws on every platform. Streams are caller-owned
/// and never shared between parallel workers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Requires n >= 1.
    int uniform_int(int n);

    /// Draws an index proportionally to non-negative weights. The weights
    /// need not be normalized; at least one must be positive.
    int categorical(std::span<const double> weights);

    /// Standard normal (Box-Muller, no cached spare).
    double normal();

    /// Gamma(shape, 1) for shape > 0 (Marsaglia-Tsang).
    double gamma(double shape);

  private:
    std::mt19937_64 engine_;
};

}  // namespace nsrl
