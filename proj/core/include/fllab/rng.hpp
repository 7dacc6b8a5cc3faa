#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace fllab {

/// SplitMix64 finalizer. Used to expand seeds and to derive child seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives a child seed from a parent seed and a stream tag. Order matters:
/// derive_seed(s, a, b) != derive_seed(s, b, a) in general.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) noexcept;

/// xoshiro256** seeded through SplitMix64.
///
/// Every distribution below is implemented here from raw 64-bit outputs with
/// fixed arithmetic (no <random> distributions, whose algorithms are
/// implementation-defined), so a given seed yields the same stream on every
/// platform with IEEE-754 doubles.
///
///   uniform01()      (next() >> 11) * 2^-53, in [0, 1)
///   uniform(a, b)    a + (b - a) * uniform01()
///   below(n)         Lemire multiply-shift with rejection, in [0, n)
///   normal()         Box-Muller, cosine branch only, one normal per two draws
///   gamma(shape)     Marsaglia-Tsang; shape < 1 via the U^(1/shape) boost
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next() noexcept;

    double uniform01() noexcept;
    double uniform(double lo, double hi) noexcept;
    std::uint64_t below(std::uint64_t n) noexcept;
    double normal() noexcept;

    /// log of a Gamma(shape, 1) draw. Stays finite for tiny shapes where the
    /// draw itself would underflow to zero.
    double log_gamma_draw(double shape) noexcept;

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t s_[4];
};

}  // namespace fllab
