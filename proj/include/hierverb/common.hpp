#pragma once

// Shared basics: error type, deterministic RNG, and the small dense
// matrix/vector helpers the rest of the library is built on.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hierverb {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool ok, const std::string& msg) {
    if (!ok) {
        fail(msg);
    }
}

// Seeded 64-bit generator. The draw helpers avoid std::*_distribution so the
// same seed yields the same stream on every standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Unbiased draw in [0, n).
    std::uint64_t below(std::uint64_t n) {
        require(n > 0, "Rng::below: empty range");
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t rem = (max % n + 1) % n;  // 2^64 mod n
        std::uint64_t x = gen_();
        while (rem != 0 && x > max - rem) {
            x = gen_();
        }
        return x % n;
    }

    int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    // [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    double& operator()(int i, int j) {
        return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
    }
    double operator()(int i, int j) const {
        return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline Vec matvec(const Mat& a, const Vec& x) {
    require(static_cast<int>(x.size()) == a.cols, "matvec: dimension mismatch");
    Vec y(static_cast<std::size_t>(a.rows), 0.0);
    for (int i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            s += a(i, j) * x[static_cast<std::size_t>(j)];
        }
        y[static_cast<std::size_t>(i)] = s;
    }
    return y;
}

// y = A^T x
inline Vec tmatvec(const Mat& a, const Vec& x) {
    require(static_cast<int>(x.size()) == a.rows, "tmatvec: dimension mismatch");
    Vec y(static_cast<std::size_t>(a.cols), 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        for (int j = 0; j < a.cols; ++j) {
            y[static_cast<std::size_t>(j)] += a(i, j) * xi;
        }
    }
    return y;
}

// A += s * x y^T
inline void add_outer(Mat& a, const Vec& x, const Vec& y, double s = 1.0) {
    require(static_cast<int>(x.size()) == a.rows && static_cast<int>(y.size()) == a.cols,
            "add_outer: dimension mismatch");
    for (int i = 0; i < a.rows; ++i) {
        const double xi = s * x[static_cast<std::size_t>(i)];
        for (int j = 0; j < a.cols; ++j) {
            a(i, j) += xi * y[static_cast<std::size_t>(j)];
        }
    }
}

inline void axpy(Vec& y, const Vec& x, double s = 1.0) {
    require(x.size() == y.size(), "axpy: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += s * x[i];
    }
}

inline double dot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double x : m.data) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

inline constexpr double kProbEps = 1e-12;

inline double clamp_prob(double p) {
    if (p < kProbEps) {
        return kProbEps;
    }
    if (p > 1.0 - kProbEps) {
        return 1.0 - kProbEps;
    }
    return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace hierverb
