#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace classbench {

// Portable seed derivation. The standard distributions are
// implementation-defined, so everything that must replay identically
// across toolchains goes through these helpers instead.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_text(std::string_view s);  // FNV-1a, 64-bit
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view salt);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound); bound > 0.
    std::uint64_t below(std::uint64_t bound);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

    template <typename Container>
    void shuffle(Container& items) {
        shuffle(std::span(items.data(), items.size()));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace classbench
