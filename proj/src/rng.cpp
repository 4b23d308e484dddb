#include "survey/rng.hpp"

#include <cmath>
#include <numbers>

namespace survey {

std::uint64_t RngStream::splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

// Seed-sequence stand-in: fills the engine state with splitmix64 output keyed
// by both halves, far cheaper than std::seed_seq's mixing passes.
struct SplitMixFill {
    using result_type = std::uint32_t;
    std::uint64_t a, b;

    template <class It>
    void generate(It first, It last) const {
        std::uint64_t k = 0;
        while (first != last) {
            const std::uint64_t v = RngStream::splitmix64(a + k * 0x9e3779b97f4a7c15ULL) ^
                                    RngStream::splitmix64(b + k * 0xd1b54a32d192ed03ULL);
            ++k;
            *first++ = static_cast<std::uint32_t>(v);
            if (first != last) *first++ = static_cast<std::uint32_t>(v >> 32);
        }
    }
};

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
    SplitMixFill fill{splitmix64(seed), splitmix64(stream ^ 0x5851f42d4c957f2dULL)};
    engine_.seed(fill);
}

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t bound) {
    // rejection on the top of the range keeps the draw exactly uniform
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

double RngStream::normal() {
    double u1 = uniform_open_closed();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::child(std::uint64_t index) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(stream_ + 0x632be59bd9b4e019ULL)), index);
}

}  // namespace survey
