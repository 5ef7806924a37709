#pragma once

#include <cstdint>
#include <random>

namespace canids::detail {

// std distributions are implementation-defined; these draws keep results
// identical across standard libraries for a given mt19937_64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }
    std::uint8_t byte() { return static_cast<std::uint8_t>(engine_() >> 56); }
    std::uint64_t next() { return engine_(); }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace canids::detail
