#pragma once

#include <cstdint>
#include <vector>

#include "forge/errors.hpp"

namespace forge {

// Deterministic RNG with portable output. We deliberately avoid the
// standard <random> distributions: their output is implementation-defined,
// and benchmark artifacts must be reproducible byte-for-byte across
// toolchains. The core is splitmix64, which is more than adequate for
// sampling decisions and level draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ContractViolation("Rng::below requires n > 0");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        if (items.empty()) throw ContractViolation("Rng::pick on empty vector");
        return items[below(items.size())];
    }

    // Derives an independent stream; forked streams do not perturb the
    // parent state, so adding a consumer never shifts sibling draws.
    Rng fork(std::uint64_t stream) const {
        Rng mixer(state_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
        std::uint64_t derived = mixer.next_u64();
        return Rng(derived);
    }

private:
    std::uint64_t state_;
};

} // namespace forge
