#pragma once

#include "brp/linalg.hpp"
#include "brp/projections.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace brp {

enum class PoolVariant : std::uint32_t {
    Rademacher = 0,
    OrthGaussianFull = 1,
    OrthGaussianSimplified = 2,
    Learnable = 3,
    HadamardBaseline = 4,
};

inline const char* to_string(PoolVariant v) {
    switch (v) {
        case PoolVariant::Rademacher: return "rpbinary";
        case PoolVariant::OrthGaussianFull: return "rpgaussianfull";
        case PoolVariant::OrthGaussianSimplified: return "rpgaussian";
        case PoolVariant::Learnable: return "learnable";
        case PoolVariant::HadamardBaseline: return "hadamard";
    }
    return "?";
}

// =============================================================================
// BilinearConfig
// =============================================================================

struct BilinearConfig {
    PoolVariant variant = PoolVariant::Rademacher;
    std::size_t rank = 1;
    std::size_t m = 1;   // rows of each Eʳ
    std::size_t n = 1;   // rows of each Fʳ
    std::size_t d_x = 1; // input dim of x
    std::size_t d_y = 1; // input dim of y
    // Linear forms: scale the pooled vector by 1/(R·sqrt(M·N)).
    // Sin/cos form: scale by 1/R so the R-rank kernel stays an average.
    bool normalize = true;

    [[nodiscard]] std::size_t output_dim() const {
        return (variant == PoolVariant::OrthGaussianFull) ? 4 * m * n : m * n;
    }
    [[nodiscard]] double linear_scale() const {
        return 1.0 / (static_cast<double>(rank) * std::sqrt(static_cast<double>(m * n)));
    }
};

inline void check_pool_inputs(const ProjectionStack& s, const BilinearConfig& cfg,
                              std::span<const double> x, std::span<const double> y) {
    if (s.rank != cfg.rank || s.m() != cfg.m || s.n() != cfg.n || s.d_x() != cfg.d_x ||
        s.d_y() != cfg.d_y)
        throw dim_error("bilinear: config does not match projection stack");
    if (x.size() != cfg.d_x || y.size() != cfg.d_y)
        throw dim_error("bilinear: input sizes (" + std::to_string(x.size()) + ", " +
                        std::to_string(y.size()) + ") do not match (D_X, D_Y)");
}

// Gradients of one pooling call. d_e/d_f are filled iff the stack is
// trainable, d_sigma/d_rho iff its bandwidths are.
struct PoolGrads {
    Vec d_x;
    Vec d_y;
    std::vector<Mat> d_e;
    std::vector<Mat> d_f;
    Vec d_sigma;
    Vec d_rho;
};

// =============================================================================
// Flop accounting
//
// Convention: one flop per scalar multiply and one per add; a fused
// `acc += a*b` counts 2. The *_flops formulas below are exact for the loops
// in this header, and the counted code paths are asserted against them in
// the test suite.
// =============================================================================

using FlopCount = std::uint64_t;

constexpr FlopCount forward_rp_flops(std::size_t rank, std::size_t m, std::size_t n,
                                     std::size_t dx, std::size_t dy, bool normalize) {
    const FlopCount proj = static_cast<FlopCount>(rank) * (2ULL * m * dx + 2ULL * n * dy);
    const FlopCount accum = static_cast<FlopCount>(rank) * 2ULL * m * n;
    const FlopCount scale = normalize ? static_cast<FlopCount>(m) * n : 0ULL;
    return proj + accum + scale;
}

constexpr FlopCount forward_hadamard_flops(std::size_t d_h, std::size_t dx, std::size_t dy,
                                           std::size_t d_out_with_p) {
    // d_out_with_p = 0 when the output projection P is omitted (z = h).
    const FlopCount proj = 2ULL * d_h * dx + 2ULL * d_h * dy;
    const FlopCount had = static_cast<FlopCount>(d_h);
    const FlopCount mix = 2ULL * d_out_with_p * d_h;
    return proj + had + mix;
}

namespace detail {

template <bool Counted>
inline void counted_matvec(const Mat& a, std::span<const double> x, Vec& out, FlopCount* fc) {
    out.assign(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.data() + i * a.cols();
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
    if constexpr (Counted) *fc += 2ULL * a.rows() * a.cols();
}

template <bool Counted>
Vec forward_rp_impl(const ProjectionStack& s, const BilinearConfig& cfg,
                    std::span<const double> x, std::span<const double> y, FlopCount* fc) {
    check_pool_inputs(s, cfg, x, y);
    const std::size_t m = cfg.m, n = cfg.n;
    Vec z(m * n, 0.0);
    Vec u, v;
    for (std::size_t r = 0; r < cfg.rank; ++r) {
        counted_matvec<Counted>(s.e[r], x, u, fc);
        counted_matvec<Counted>(s.f[r], y, v, fc);
        for (std::size_t j = 0; j < n; ++j) {
            double* col = z.data() + j * m;
            const double vj = v[j];
            for (std::size_t i = 0; i < m; ++i) col[i] += u[i] * vj;
        }
        if constexpr (Counted) *fc += 2ULL * m * n;
    }
    if (cfg.normalize) {
        const double c = cfg.linear_scale();
        for (double& t : z) t *= c;
        if constexpr (Counted) *fc += static_cast<FlopCount>(m) * n;
    }
    return z;
}

inline void sincos_features(std::span<const double> u, double inv_sqrt_rows, Vec& phi) {
    const std::size_t m = u.size();
    phi.resize(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        phi[i] = inv_sqrt_rows * std::sin(u[i]);
        phi[m + i] = inv_sqrt_rows * std::cos(u[i]);
    }
}

} // namespace detail

// =============================================================================
// Linear random-projection pooling (RPBinary / RPGaussian / Learnable)
//
// z[j·M+i] = c · Σ_r (Eʳx)[i] · (Fʳy)[j],  c = 1/(R√(MN)) when normalizing.
// =============================================================================

inline Vec forward_rp(const ProjectionStack& s, const BilinearConfig& cfg,
                      std::span<const double> x, std::span<const double> y) {
    return detail::forward_rp_impl<false>(s, cfg, x, y, nullptr);
}

inline Vec forward_rp(const ProjectionStack& s, const BilinearConfig& cfg,
                      std::span<const double> x, std::span<const double> y, FlopCount& fc) {
    return detail::forward_rp_impl<true>(s, cfg, x, y, &fc);
}

inline PoolGrads backward_rp(const ProjectionStack& s, const BilinearConfig& cfg,
                             std::span<const double> x, std::span<const double> y,
                             std::span<const double> d_z) {
    check_pool_inputs(s, cfg, x, y);
    const std::size_t m = cfg.m, n = cfg.n;
    if (d_z.size() != m * n) throw dim_error("backward_rp: cotangent size != M*N");
    const double c = cfg.normalize ? cfg.linear_scale() : 1.0;

    PoolGrads g;
    g.d_x.assign(cfg.d_x, 0.0);
    g.d_y.assign(cfg.d_y, 0.0);
    if (s.trainable) {
        g.d_e.assign(cfg.rank, Mat(m, cfg.d_x));
        g.d_f.assign(cfg.rank, Mat(n, cfg.d_y));
    }
    if (s.train_bandwidths) {
        g.d_sigma.assign(cfg.rank, 0.0);
        g.d_rho.assign(cfg.rank, 0.0);
    }

    Vec du(m), dv(n);
    for (std::size_t r = 0; r < cfg.rank; ++r) {
        const Vec u = matvec(s.e[r], x);
        const Vec v = matvec(s.f[r], y);
        // du = c·G v, dv = c·Gᵀ u with G the column-major M×N reshape of d_z.
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += d_z[j * m + i] * v[j];
            du[i] = c * acc;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += d_z[j * m + i] * u[i];
            dv[j] = c * acc;
        }
        axpy(1.0, matvec_t(s.e[r], du), g.d_x);
        axpy(1.0, matvec_t(s.f[r], dv), g.d_y);
        if (s.trainable) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < cfg.d_x; ++j) g.d_e[r](i, j) += du[i] * x[j];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < cfg.d_y; ++j) g.d_f[r](i, j) += dv[i] * y[j];
        }
        if (s.train_bandwidths) {
            // σ enters as a 1/σ factor on Eʳ, so ∂u/∂σ = -u/σ.
            g.d_sigma[r] = -dot(du, u) / s.sigma[r];
            g.d_rho[r] = -dot(dv, v) / s.rho[r];
        }
    }
    return g;
}

// =============================================================================
// Sin/cos pooling (RPGaussianFull)
//
// z = a · vec(Σ_r φ(Eʳx) ⊗ φ(Fʳy)), φ(u) = √(1/M)[sin u, cos u],
// a = 1/R when cfg.normalize (keeps outputs O(1); disable to match the raw
// sum form).
// =============================================================================

inline Vec forward_full(const ProjectionStack& s, const BilinearConfig& cfg,
                        std::span<const double> x, std::span<const double> y) {
    if (s.variant != ProjectionVariant::OrthGaussianFull &&
        s.variant != ProjectionVariant::OrthGaussianSimplified)
        throw config_error("forward_full: requires an orthogonal-Gaussian stack");
    check_pool_inputs(s, cfg, x, y);
    const std::size_t m2 = 2 * cfg.m, n2 = 2 * cfg.n;
    const double su = std::sqrt(1.0 / static_cast<double>(cfg.m));
    const double sv = std::sqrt(1.0 / static_cast<double>(cfg.n));
    Vec z(m2 * n2, 0.0);
    Vec u, v, phi_u, phi_v;
    for (std::size_t r = 0; r < cfg.rank; ++r) {
        detail::counted_matvec<false>(s.e[r], x, u, nullptr);
        detail::counted_matvec<false>(s.f[r], y, v, nullptr);
        detail::sincos_features(u, su, phi_u);
        detail::sincos_features(v, sv, phi_v);
        for (std::size_t j = 0; j < n2; ++j) {
            double* col = z.data() + j * m2;
            const double pv = phi_v[j];
            for (std::size_t i = 0; i < m2; ++i) col[i] += phi_u[i] * pv;
        }
    }
    if (cfg.normalize && cfg.rank > 1) {
        const double a = 1.0 / static_cast<double>(cfg.rank);
        for (double& t : z) t *= a;
    }
    return z;
}

inline PoolGrads backward_full(const ProjectionStack& s, const BilinearConfig& cfg,
                               std::span<const double> x, std::span<const double> y,
                               std::span<const double> d_z) {
    if (s.variant != ProjectionVariant::OrthGaussianFull &&
        s.variant != ProjectionVariant::OrthGaussianSimplified)
        throw config_error("backward_full: requires an orthogonal-Gaussian stack");
    check_pool_inputs(s, cfg, x, y);
    const std::size_t m = cfg.m, n = cfg.n, m2 = 2 * m, n2 = 2 * n;
    if (d_z.size() != m2 * n2) throw dim_error("backward_full: cotangent size != 4*M*N");
    const double a = (cfg.normalize && cfg.rank > 1) ? 1.0 / static_cast<double>(cfg.rank) : 1.0;
    const double su = std::sqrt(1.0 / static_cast<double>(m));
    const double sv = std::sqrt(1.0 / static_cast<double>(n));

    PoolGrads g;
    g.d_x.assign(cfg.d_x, 0.0);
    g.d_y.assign(cfg.d_y, 0.0);
    if (s.trainable) {
        g.d_e.assign(cfg.rank, Mat(m, cfg.d_x));
        g.d_f.assign(cfg.rank, Mat(n, cfg.d_y));
    }
    if (s.train_bandwidths) {
        g.d_sigma.assign(cfg.rank, 0.0);
        g.d_rho.assign(cfg.rank, 0.0);
    }

    Vec u, v, phi_u, phi_v, dphi_u(m2), dphi_v(n2), du(m), dv(n);
    for (std::size_t r = 0; r < cfg.rank; ++r) {
        detail::counted_matvec<false>(s.e[r], x, u, nullptr);
        detail::counted_matvec<false>(s.f[r], y, v, nullptr);
        detail::sincos_features(u, su, phi_u);
        detail::sincos_features(v, sv, phi_v);
        for (std::size_t i = 0; i < m2; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n2; ++j) acc += d_z[j * m2 + i] * phi_v[j];
            dphi_u[i] = a * acc;
        }
        for (std::size_t j = 0; j < n2; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m2; ++i) acc += d_z[j * m2 + i] * phi_u[i];
            dphi_v[j] = a * acc;
        }
        // Chain through φ: ∂φ_i/∂u_i = s·cos u_i, ∂φ_{M+i}/∂u_i = -s·sin u_i.
        for (std::size_t i = 0; i < m; ++i)
            du[i] = su * (dphi_u[i] * std::cos(u[i]) - dphi_u[m + i] * std::sin(u[i]));
        for (std::size_t j = 0; j < n; ++j)
            dv[j] = sv * (dphi_v[j] * std::cos(v[j]) - dphi_v[n + j] * std::sin(v[j]));
        axpy(1.0, matvec_t(s.e[r], du), g.d_x);
        axpy(1.0, matvec_t(s.f[r], dv), g.d_y);
        if (s.trainable) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < cfg.d_x; ++j) g.d_e[r](i, j) += du[i] * x[j];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < cfg.d_y; ++j) g.d_f[r](i, j) += dv[i] * y[j];
        }
        if (s.train_bandwidths) {
            g.d_sigma[r] = -dot(du, u) / s.sigma[r];
            g.d_rho[r] = -dot(dv, v) / s.rho[r];
        }
    }
    return g;
}

// =============================================================================
// Low-rank Hadamard baseline: z = P((Ux) ∘ (Vy)), activation-free.
// P may be omitted, in which case z = (Ux) ∘ (Vy).
// =============================================================================

struct HadamardGrads {
    Vec d_x, d_y;
    Mat d_u, d_v, d_p;
};

namespace detail {

template <bool Counted>
Vec forward_hadamard_impl(const Mat& u, const Mat& v, const Mat* p, std::span<const double> x,
                          std::span<const double> y, FlopCount* fc) {
    if (u.rows() != v.rows()) throw dim_error("forward_hadamard: U and V row counts differ");
    if (u.cols() != x.size() || v.cols() != y.size())
        throw dim_error("forward_hadamard: input sizes do not match U/V");
    if (p && p->cols() != u.rows()) throw dim_error("forward_hadamard: P cols != hidden dim");
    Vec ux, vy;
    counted_matvec<Counted>(u, x, ux, fc);
    counted_matvec<Counted>(v, y, vy, fc);
    Vec h(u.rows());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = ux[i] * vy[i];
    if constexpr (Counted) *fc += h.size();
    if (!p) return h;
    Vec z;
    counted_matvec<Counted>(*p, h, z, fc);
    return z;
}

} // namespace detail

inline Vec forward_hadamard(const Mat& u, const Mat& v, const Mat& p, std::span<const double> x,
                            std::span<const double> y) {
    return detail::forward_hadamard_impl<false>(u, v, &p, x, y, nullptr);
}

inline Vec forward_hadamard(const Mat& u, const Mat& v, std::span<const double> x,
                            std::span<const double> y) {
    return detail::forward_hadamard_impl<false>(u, v, nullptr, x, y, nullptr);
}

inline Vec forward_hadamard(const Mat& u, const Mat& v, std::span<const double> x,
                            std::span<const double> y, FlopCount& fc) {
    return detail::forward_hadamard_impl<true>(u, v, nullptr, x, y, &fc);
}

inline HadamardGrads backward_hadamard(const Mat& u, const Mat& v, const Mat* p,
                                       std::span<const double> x, std::span<const double> y,
                                       std::span<const double> d_z) {
    const std::size_t d_h = u.rows();
    if (u.rows() != v.rows()) throw dim_error("backward_hadamard: U and V row counts differ");
    if (u.cols() != x.size() || v.cols() != y.size())
        throw dim_error("backward_hadamard: input sizes do not match U/V");
    const std::size_t d_out = p ? p->rows() : d_h;
    if (d_z.size() != d_out) throw dim_error("backward_hadamard: cotangent size mismatch");

    const Vec ux = matvec(u, x);
    const Vec vy = matvec(v, y);
    Vec dh(d_h);
    if (p) {
        dh = matvec_t(*p, d_z);
    } else {
        dh.assign(d_z.begin(), d_z.end());
    }

    HadamardGrads g;
    Vec dh_vy(d_h), dh_ux(d_h);
    for (std::size_t i = 0; i < d_h; ++i) {
        dh_vy[i] = dh[i] * vy[i];
        dh_ux[i] = dh[i] * ux[i];
    }
    g.d_x = matvec_t(u, dh_vy);
    g.d_y = matvec_t(v, dh_ux);
    g.d_u = outer(dh_vy, x);
    g.d_v = outer(dh_ux, y);
    if (p) {
        Vec h(d_h);
        for (std::size_t i = 0; i < d_h; ++i) h[i] = ux[i] * vy[i];
        g.d_p = outer(d_z, h);
    }
    return g;
}

} // namespace brp
