#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace epinn {

inline constexpr double kPi = 3.14159265358979323846;

inline double square(double x) { return x * x; }

// Overflow-safe on both tails.
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
}

// Violated precondition or misuse of an interface.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, solver non-convergence, failed factorizations.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed configs, checkpoints, datasets.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void strf_cat(std::ostringstream&) {}
template <class T, class... Rest>
void strf_cat(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    strf_cat(os, rest...);
}
} // namespace detail

template <class... Args>
std::string strf(const Args&... args) {
    std::ostringstream os;
    os.precision(17);
    detail::strf_cat(os, args...);
    return os.str();
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stable sub-seed derivation: one master seed fans out into independent
// streams keyed by (tag, index). Same inputs always give the same seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
    std::uint64_t s = master ^ fnv1a64(tag);
    s += 0x9e3779b97f4a7c15ULL * (index + 1);
    std::uint64_t a = splitmix64(s);
    return splitmix64(s) ^ a;
}

// Uniform in [0,1) from a counter-based hash; used where draws must be
// addressable by coordinates (step, point, unit) instead of stream order.
inline double hash_uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                           std::uint64_t d = 0) {
    std::uint64_t s = a;
    s = splitmix64(s) ^ (b * 0xff51afd7ed558ccdULL);
    s = splitmix64(s) ^ (c * 0xc4ceb9fe1a85ec53ULL);
    s = splitmix64(s) ^ (d * 0x2545f4914f6cdd1dULL);
    std::uint64_t bits = splitmix64(s) >> 11; // 53 random bits
    return static_cast<double>(bits) * 0x1.0p-53;
}

} // namespace epinn
