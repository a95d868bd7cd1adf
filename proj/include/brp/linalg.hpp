#pragma once

#include "brp/errors.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace brp {

using Vec = std::vector<double>;

// =============================================================================
// Mat — dense row-major f64 matrix
// =============================================================================

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    [[nodiscard]] double* data() noexcept { return data_.data(); }
    [[nodiscard]] const double* data() const noexcept { return data_.data(); }

    [[nodiscard]] bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Mat&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// =============================================================================
// Rng — xoshiro256** seeded via splitmix64
//
// The integer stream is bit-identical across platforms for a given seed.
// split(label) derives an independent substream from (seed, label) only, so
// substreams do not depend on how many draws the parent has made; this is
// what makes index-parallel Monte-Carlo reductions order-independent.
// =============================================================================

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t z = seed;
        for (auto& s : state_) s = splitmix64(z);
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0,1), 53-bit resolution.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0,1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Rademacher sign from one stream bit.
    double sign() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire-style rejection-free multiply-shift is biased for huge n;
        // all uses here have n << 2^32, where the bias is negligible and the
        // result stays platform independent.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Independent substream derived from (construction seed, label).
    [[nodiscard]] Rng split(std::uint64_t label) const {
        std::uint64_t z = seed_ ^ (0x9e3779b97f4a7c15ULL * (label + 1));
        return Rng(splitmix64(z));
    }

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }
    static std::uint64_t splitmix64(std::uint64_t& z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        std::uint64_t r = z;
        r = (r ^ (r >> 30)) * 0xbf58476d1ce4e5b9ULL;
        r = (r ^ (r >> 27)) * 0x94d049bb133111ebULL;
        return r ^ (r >> 31);
    }

    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// =============================================================================
// Vector / matrix kernels
// =============================================================================

inline Vec matvec(const Mat& a, std::span<const double> x) {
    if (a.cols() != x.size())
        throw dim_error("matvec: matrix has " + std::to_string(a.cols()) +
                        " cols, vector has " + std::to_string(x.size()));
    Vec out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.data() + i * a.cols();
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
    return out;
}

// out = Aᵀ x, i.e. out[j] = Σ_i A[i,j]·x[i].
inline Vec matvec_t(const Mat& a, std::span<const double> x) {
    if (a.rows() != x.size())
        throw dim_error("matvec_t: matrix has " + std::to_string(a.rows()) +
                        " rows, vector has " + std::to_string(x.size()));
    Vec out(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.data() + i * a.cols();
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += row[j] * xi;
    }
    return out;
}

inline Mat outer(std::span<const double> u, std::span<const double> v) {
    Mat out(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
    return out;
}

// Column-major vectorization: out[j·M + i] = A[i,j].
inline Vec vec_col(const Mat& a) {
    Vec out(a.rows() * a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) out[j * a.rows() + i] = a(i, j);
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw dim_error("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw dim_error("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Pairwise (cascade) summation. The result depends only on the contents of
// the span, never on thread count or accumulation order upstream.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 32) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

// =============================================================================
// Random sampling
// =============================================================================

// Chi-distributed draw: sqrt of a chi-squared variate with `dof` degrees of
// freedom, computed as the norm of `dof` i.i.d. standard normals.
inline double chi_sample(Rng& rng, std::size_t dof) {
    if (dof < 1) throw config_error("chi_sample: dof must be >= 1");
    double acc = 0.0;
    for (std::size_t k = 0; k < dof; ++k) {
        const double g = rng.normal();
        acc += g * g;
    }
    return std::sqrt(acc);
}

namespace detail {

// One Householder QR sweep over `a` in place; returns the reflector vectors
// plus their squared norms, or false when a column is numerically rank
// deficient (caller resamples).
inline bool householder_qr(Mat& a, std::vector<Vec>& vs, Vec& betas) {
    const std::size_t n = a.rows();
    vs.assign(n, {});
    betas.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        Vec v(n - k);
        double norm_sq = 0.0;
        for (std::size_t i = k; i < n; ++i) {
            v[i - k] = a(i, k);
            norm_sq += a(i, k) * a(i, k);
        }
        const double norm = std::sqrt(norm_sq);
        if (norm < 1e-300) return false;
        const double alpha = (v[0] >= 0.0) ? -norm : norm;
        v[0] -= alpha;
        double beta = 0.0;
        for (double t : v) beta += t * t;
        if (beta < 1e-300) return false;
        // Apply H = I - 2vvᵀ/β to the trailing block.
        for (std::size_t j = k; j < n; ++j) {
            double proj = 0.0;
            for (std::size_t i = k; i < n; ++i) proj += v[i - k] * a(i, j);
            const double scale = 2.0 * proj / beta;
            for (std::size_t i = k; i < n; ++i) a(i, j) -= scale * v[i - k];
        }
        vs[k] = std::move(v);
        betas[k] = beta;
    }
    return true;
}

} // namespace detail

// Haar-distributed orthogonal matrix: QR of an i.i.d. standard-normal matrix
// with each column of Q scaled by the sign of the matching diagonal entry of
// the triangular factor.
inline Mat haar_orthogonal(Rng& rng, std::size_t n) {
    if (n < 1) throw config_error("haar_orthogonal: n must be >= 1");
    std::vector<Vec> vs;
    Vec betas;
    Mat a;
    while (true) {
        a = Mat(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a(i, j) = rng.normal();
        if (detail::householder_qr(a, vs, betas)) break;
    }
    // Q = H_0 · H_1 · ... · H_{n-1} applied to the identity.
    Mat q = Mat::identity(n);
    for (std::size_t k = n; k-- > 0;) {
        const Vec& v = vs[k];
        const double beta = betas[k];
        for (std::size_t j = 0; j < n; ++j) {
            double proj = 0.0;
            for (std::size_t i = k; i < n; ++i) proj += v[i - k] * q(i, j);
            const double scale = 2.0 * proj / beta;
            for (std::size_t i = k; i < n; ++i) q(i, j) -= scale * v[i - k];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (a(i, i) < 0.0)
            for (std::size_t r = 0; r < n; ++r) q(r, i) = -q(r, i);
    }
    return q;
}

} // namespace brp
