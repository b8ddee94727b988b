#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace esreg {

namespace detail {
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace detail

/// Derives an independent stream key from a base seed and a path of identifiers
/// (replication index, sub-stream tag, ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t k = detail::mix64(seed ^ 0x6a09e667f3bcc908ULL);
    for (auto id : path) k = detail::mix64(k ^ detail::mix64(id + 0x9e3779b97f4a7c15ULL));
    return k;
}

/// Counter-based generator: the k-th output is a keyed hash of k, so a stream is fully
/// determined by its key and replications can run in any order.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) : key_(detail::mix64(key)) {}
    CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) : CounterRng(derive_seed(seed, path)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t c = counter_++;
        return detail::mix64(key_ ^ detail::mix64(c * 0x9e3779b97f4a7c15ULL + 0x3c6ef372fe94f82bULL));
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace esreg
