#pragma once

#include <cstdint>
#include <random>

namespace survey {

/// Reproducible random stream identified by (seed, stream).
///
/// The engine is std::mt19937_64 whose state words are splitmix64 outputs
/// keyed by splitmix64(seed) and splitmix64(stream). Uniform variates are
/// built from the top 53 bits so results do not depend on the standard
/// library's distribution classes.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on (0, 1].
    double uniform_open_closed() { return 1.0 - uniform(); }
    /// Uniform integer on [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);
    bool bernoulli(double p) { return uniform() < p; }
    double normal();

    /// Child stream, independent of this one's state.
    RngStream child(std::uint64_t index) const;

    static std::uint64_t splitmix64(std::uint64_t x);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

}  // namespace survey
