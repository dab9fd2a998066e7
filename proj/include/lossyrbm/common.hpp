#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lossyrbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

// Error hierarchy. The CLI maps each family onto an exit code.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// A metric that is not defined for the given inputs (empty pool, one class only).
struct UndefinedMetric : std::domain_error {
    using std::domain_error::domain_error;
};
/// Brute-force enumeration refused because the model is too large.
struct BudgetExceeded : std::length_error {
    using std::length_error::length_error;
};

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// splitmix64 finalizer; used to derive independent stream seeds from a tuple of tags.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = mix64(base);
    for (std::uint64_t t : tags) {
        s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
    }
    return s;
}

/// Uniform double in [0,1) built from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p;
}

}  // namespace lossyrbm
