#pragma once

#include <cstdint>
#include <type_traits>
#include <string_view>

namespace eagleeye {

/// Deterministic, stream-labelled pseudo-random generator. No global state:
/// every consumer derives its own stream from (seed, labels...).
///
/// Algorithm (fixed; golden values are frozen in the test suite):
///  - each label (u64, or string folded with FNV-1a 64) is absorbed by
///    key = splitmix64_mix(key ^ label)
///  - the final key seeds four xoshiro256** words via successive
///    splitmix64 draws
///  - outputs come from xoshiro256** 1.0 (Blackman/Vigna)
/// uniform01 uses the top 53 bits; normals use Box-Muller on two uniforms.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) { absorb(seed); finalize(); }

    template <typename... Labels>
    RngStream(std::uint64_t seed, Labels... labels) {
        absorb(seed);
        (absorb_label(labels), ...);
        finalize();
    }

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01();

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal via Box-Muller (consumes two uniforms per pair).
    double normal();

    bool bernoulli(double p) { return uniform01() < p; }

    static std::uint64_t fold_label(std::string_view s);

private:
    void absorb(std::uint64_t v);
    template <typename T>
        requires std::is_integral_v<T>
    void absorb_label(T v) {
        absorb(static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
    }
    void absorb_label(std::string_view s) { absorb(fold_label(s)); }
    void absorb_label(const char* s) { absorb(fold_label(s)); }
    void finalize();

    std::uint64_t key_ = 0;
    std::uint64_t s_[4] = {0, 0, 0, 0};
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

}  // namespace eagleeye
