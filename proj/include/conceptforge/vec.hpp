#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conceptforge/error.hpp"

namespace conceptforge {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("dot: dimension mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vec normalized(std::span<const double> a) {
    const double n = norm(a);
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("cannot normalize a zero or non-finite vector");
    Vec out(a.begin(), a.end());
    for (double& x : out) x /= n;
    return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    return dot(a, b) / (norm(a) * norm(b));
}

// out += s * x
inline void axpy(double s, std::span<const double> x, std::span<double> out) {
    if (x.size() != out.size()) throw DimensionError("axpy: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += s * x[i];
}

inline bool all_finite(std::span<const double> a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

// Vector-Jacobian product of x -> x/|x| at x: (g - y (y.g)) / |x|, with y = x/|x|.
inline Vec normalize_vjp(std::span<const double> x, std::span<const double> g) {
    const double n = norm(x);
    Vec y(x.begin(), x.end());
    for (double& v : y) v /= n;
    const double yg = dot(y, g);
    Vec out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = (g[i] - y[i] * yg) / n;
    return out;
}

/// Dense row-major square matrix, only what the stub prior needs.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

    static SquareMatrix identity(std::size_t n) {
        SquareMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }

    Vec apply(std::span<const double> x) const {
        if (x.size() != n_) throw DimensionError("matrix apply: dimension mismatch");
        Vec y(n_, 0.0);
        for (std::size_t r = 0; r < n_; ++r) {
            const double* row = &data_[r * n_];
            double s = 0.0;
            for (std::size_t c = 0; c < n_; ++c) s += row[c] * x[c];
            y[r] = s;
        }
        return y;
    }

    Vec apply_transposed(std::span<const double> x) const {
        if (x.size() != n_) throw DimensionError("matrix apply: dimension mismatch");
        Vec y(n_, 0.0);
        for (std::size_t r = 0; r < n_; ++r) {
            const double* row = &data_[r * n_];
            for (std::size_t c = 0; c < n_; ++c) y[c] += row[c] * x[r];
        }
        return y;
    }

private:
    std::size_t n_ = 0;
    Vec data_;
};

// Modified Gram-Schmidt in place. Throws if the set is (numerically) rank deficient.
inline void orthonormalize(std::vector<Vec>& vectors) {
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double p = dot(vectors[j], vectors[i]);
            axpy(-p, vectors[j], vectors[i]);
        }
        const double n = norm(vectors[i]);
        if (n < 1e-10) throw NumericError("orthonormalize: rank-deficient vector set");
        for (double& x : vectors[i]) x /= n;
    }
}

// ---- seeding ----

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

// FNV-1a; std::hash is not stable across standard libraries.
inline std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline Vec gaussian_vector(std::size_t dim, std::uint64_t seed, double sigma = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    Vec v(dim);
    for (double& x : v) x = normal(rng);
    return v;
}

inline Vec random_unit_vector(std::size_t dim, std::uint64_t seed) { return normalized(gaussian_vector(dim, seed)); }

} // namespace conceptforge
