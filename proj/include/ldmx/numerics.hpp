#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ldmx/error.hpp"

namespace ldmx {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

inline void require_valid_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("shape must have at least one extent");
    for (auto e : shape)
        if (e == 0) throw ShapeError("zero extent in shape " + shape_string(shape));
}

/// Dense row-major array of doubles. Every public constructor and arithmetic
/// operation rejects non-finite values, so a Tensor that exists is finite.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        require_valid_shape(shape_);
        check_finite_value(fill);
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        require_valid_shape(shape_);
        if (data_.size() != shape_size(shape_))
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
        check_finite();
    }

    static Tensor vector(std::vector<double> values) {
        Shape s{values.size()};
        return Tensor(std::move(s), std::move(values));
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::size_t i) const {
        if (i >= data_.size()) throw ShapeError("tensor index out of range");
        return data_[i];
    }

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

    /// Builds a tensor of `shape` whose element i is f(i).
    template <typename F>
    static Tensor generate(const Shape& shape, F&& f) {
        require_valid_shape(shape);
        std::vector<double> d(shape_size(shape));
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = f(i);
        return Tensor(shape, std::move(d));
    }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  private:
    static void check_finite_value(double v) {
        if (!std::isfinite(v)) throw NumericError("non-finite value in tensor");
    }
    void check_finite() const {
        for (double v : data_) check_finite_value(v);
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

/// Elementwise combination alpha*a + beta*b.
inline Tensor axpby(double alpha, const Tensor& a, double beta, const Tensor& b) {
    require_same_shape(a, b, "axpby");
    return Tensor::generate(a.shape(), [&](std::size_t i) { return alpha * a[i] + beta * b[i]; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return Tensor::generate(a.shape(), [&](std::size_t i) { return a[i] + b[i]; });
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    return Tensor::generate(a.shape(), [&](std::size_t i) { return a[i] - b[i]; });
}

inline Tensor operator*(double s, const Tensor& a) {
    return Tensor::generate(a.shape(), [&](std::size_t i) { return s * a[i]; });
}

inline Tensor operator*(const Tensor& a, double s) { return s * a; }

inline Tensor operator+(const Tensor& a, double s) {
    return Tensor::generate(a.shape(), [&](std::size_t i) { return a[i] + s; });
}

/// Pairwise (tree) summation. The reduction order depends only on the length,
/// so results are run-to-run identical.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double squared_norm(const Tensor& a) {
    std::vector<double> sq(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) sq[i] = a[i] * a[i];
    return pairwise_sum(sq);
}

inline double mean_squared_difference(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mean_squared_difference");
    std::vector<double> sq(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq[i] = d * d;
    }
    return pairwise_sum(sq) / static_cast<double>(a.size());
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// ---------------------------------------------------------------------------
// Random streams

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

/// Counter-based generator: output i is a pure function of (seed, i), so the
/// stream state is exactly the pair below and can be saved or compared.
/// Child streams are keyed by label and never touch the parent's counter.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed = 0) noexcept : seed_(seed), key_(detail::mix64(seed ^ detail::kGolden)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t c = counter_++;
        return detail::mix64(key_ + (c + 1) * detail::kGolden);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) throw ConfigError("uniform_int: empty range");
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(next_u64());
        // Rejection keeps the draw exactly uniform.
        const std::uint64_t limit = (~std::uint64_t{0} / span) * span;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    /// Standard normal pair via Box-Muller (consumes two counter values).
    std::pair<double, double> normal_pair() noexcept {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    double normal() noexcept { return normal_pair().first; }

    RngStream child(std::string_view label) const noexcept {
        return RngStream(detail::mix64(key_ ^ detail::fnv1a64(label)));
    }

    RngStream child(std::string_view label, std::uint64_t index) const noexcept {
        return RngStream(detail::mix64(key_ ^ detail::fnv1a64(label)) + detail::mix64(index + detail::kGolden));
    }

    friend bool operator==(const RngStream& a, const RngStream& b) noexcept {
        return a.seed_ == b.seed_ && a.counter_ == b.counter_;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// I.i.d. standard normal tensor.
inline Tensor gaussian(const Shape& shape, RngStream& rng) {
    require_valid_shape(shape);
    std::vector<double> d(shape_size(shape));
    std::size_t i = 0;
    for (; i + 1 < d.size(); i += 2) {
        auto [a, b] = rng.normal_pair();
        d[i] = a;
        d[i + 1] = b;
    }
    if (i < d.size()) d[i] = rng.normal();
    return Tensor(shape, std::move(d));
}

// ---------------------------------------------------------------------------
// Statistics

struct SampleStats {
    Tensor mean;        // (d)
    Tensor covariance;  // (d, d), divisor n - 1
};

inline SampleStats sample_stats(std::span<const Tensor> batch) {
    if (batch.empty()) throw ShapeError("sample_stats: empty batch");
    if (batch.size() < 2) throw NumericError("sample_stats: covariance undefined for a single sample");
    const Shape& shape = batch.front().shape();
    const std::size_t d = shape_size(shape);
    const std::size_t n = batch.size();
    for (const auto& t : batch)
        if (t.shape() != shape) throw ShapeError("sample_stats: shape mismatch within batch");

    std::vector<double> mean(d), column(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < n; ++k) column[k] = batch[k][j];
        mean[j] = pairwise_sum(column) / static_cast<double>(n);
    }
    std::vector<double> cov(d * d);
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            for (std::size_t k = 0; k < n; ++k) column[k] = (batch[k][a] - mean[a]) * (batch[k][b] - mean[b]);
            cov[a * d + b] = cov[b * d + a] = pairwise_sum(column) / static_cast<double>(n - 1);
        }
    }
    return {Tensor(Shape{d}, std::move(mean)), Tensor(Shape{d, d}, std::move(cov))};
}

/// Numerically stable softmax (max-subtracted).
inline std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) throw ShapeError("softmax: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) throw NumericError("softmax: non-finite input");
    std::vector<double> out(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw NumericError("softmax: non-finite input");
        out[i] = std::exp(v[i] - m);
        z += out[i];
    }
    for (auto& x : out) x /= z;
    return out;
}

// ---------------------------------------------------------------------------
// Dense linear algebra on flat row-major views

struct MatrixView {
    std::span<const double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline MatrixView view_of(const Tensor& m) {
    if (m.shape().size() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_string(m.shape()));
    return {m.values(), m.shape()[0], m.shape()[1]};
}

/// y = W x (+ y when accumulate).
inline void gemv(const MatrixView& w, std::span<const double> x, std::span<double> y, bool accumulate = false) {
    if (x.size() != w.cols || y.size() != w.rows) throw ShapeError("gemv: dimension mismatch");
    for (std::size_t r = 0; r < w.rows; ++r) {
        double s = accumulate ? y[r] : 0.0;
        const double* row = w.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
}

/// y += Wᵀ x.
inline void gemv_transposed_acc(const MatrixView& w, std::span<const double> x, std::span<double> y) {
    if (x.size() != w.rows || y.size() != w.cols) throw ShapeError("gemv_t: dimension mismatch");
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double xr = x[r];
        const double* row = w.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) y[c] += row[c] * xr;
    }
}

/// G += a bᵀ for a G of shape (a.size(), b.size()).
inline void outer_acc(std::span<const double> a, std::span<const double> b, std::span<double> g) {
    if (g.size() != a.size() * b.size()) throw ShapeError("outer_acc: dimension mismatch");
    for (std::size_t r = 0; r < a.size(); ++r) {
        double* row = g.data() + r * b.size();
        for (std::size_t c = 0; c < b.size(); ++c) row[c] += a[r] * b[c];
    }
}

// ---------------------------------------------------------------------------
// Correctly rounded small integer combinations

namespace detail {

struct DoubleDouble {
    double hi = 0.0;
    double lo = 0.0;
};

inline void two_sum(double a, double b, double& s, double& e) {
    s = a + b;
    const double bb = s - a;
    e = (a - (s - bb)) + (b - bb);
}

}  // namespace detail

/// Returns (Σ coeffs[i]·values[i]) / divisor rounded once. Products and sums
/// are carried in double-double, so constant inputs whose coefficients sum to
/// the divisor come back bit-exact, and basis inputs give the correctly
/// rounded coefficient ratio.
inline double exact_combination(std::span<const int> coeffs, std::span<const double> values, int divisor) {
    double hi = 0.0, lo = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        const double c = static_cast<double>(coeffs[i]);
        const double p = c * values[i];
        const double pe = std::fma(c, values[i], -p);
        double s, e;
        detail::two_sum(hi, p, s, e);
        hi = s;
        lo += e + pe;
    }
    double s, e;
    detail::two_sum(hi, lo, s, e);
    hi = s;
    lo = e;
    const double d = static_cast<double>(divisor);
    const double q = hi / d;
    const double r = std::fma(-q, d, hi) + lo;
    return q + r / d;
}

}  // namespace ldmx
