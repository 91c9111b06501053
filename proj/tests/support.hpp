#pragma once

// Shared test-side oracles. Nothing here calls into the code under test for the quantity it checks.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "conceptforge.hpp"

namespace cftest {

using conceptforge::Vec;

inline conceptforge::StubConfig noiseless_stub(std::vector<std::string> templates = {}) {
    conceptforge::StubConfig c;
    c.prior_noise = 0.0;
    c.prior_twist = 0.0;
    c.templates = std::move(templates);
    return c;
}

// Central differences, one coordinate at a time.
inline Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-4) {
    Vec g(x.size());
    Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// |a - b| / max(|a|, |b|), 0 when both vanish.
inline double relative_error(const Vec& a, const Vec& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale < 1e-12 ? 0.0 : std::sqrt(diff) / scale;
}

inline double plain_dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec unit(Vec v) {
    double n = std::sqrt(plain_dot(v, v));
    for (double& x : v) x /= n;
    return v;
}

// Brute-force minimizer of neg + lambda (1 - pos) over unit vectors p = a*pos + b*n1 + c*n2 in an
// orthonormal 3-word subspace, neg = ((b + c)/2 + max(b, c))/2, on a grid of step `res` in (a, b).
struct GridOptimum {
    double loss = 1e9, s_pos = 0.0, s_neg = 0.0;
};

inline GridOptimum grid_search_three_words(double lambda, double res = 0.01) {
    GridOptimum best;
    const int n = static_cast<int>(std::lround(2.0 / res));
    for (int i = 0; i <= n; ++i) {
        const double a = -1.0 + i * res;
        for (int j = 0; j <= n; ++j) {
            const double b = -1.0 + j * res;
            const double rest = 1.0 - a * a - b * b;
            if (rest < 0.0) continue;
            for (double sign : {-1.0, 1.0}) {
                const double c = sign * std::sqrt(rest);
                const double neg = 0.5 * (0.5 * (b + c) + std::max(b, c));
                const double loss = neg + lambda * (1.0 - a);
                if (loss < best.loss) best = {loss, a, neg};
            }
        }
    }
    return best;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("conceptforge_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace cftest
