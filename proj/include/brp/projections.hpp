#pragma once

#include "brp/linalg.hpp"
#include "brp/serial.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace brp {

enum class ProjectionVariant : std::uint32_t {
    Rademacher = 0,
    OrthGaussianFull = 1,
    OrthGaussianSimplified = 2,
    Learnable = 3,
};

inline const char* to_string(ProjectionVariant v) {
    switch (v) {
        case ProjectionVariant::Rademacher: return "rademacher";
        case ProjectionVariant::OrthGaussianFull: return "orth_gaussian_full";
        case ProjectionVariant::OrthGaussianSimplified: return "orth_gaussian_simplified";
        case ProjectionVariant::Learnable: return "learnable";
    }
    return "?";
}

// =============================================================================
// ProjectionStack — the R pairs (Eʳ, Fʳ) with their bandwidths
//
// Bandwidths are baked into the stored matrices: every Eʳ row already carries
// its 1/σʳ factor. Trainers that update σ must rescale the rows to keep that
// invariant (segnet does).
// =============================================================================

struct ProjectionStack {
    ProjectionVariant variant = ProjectionVariant::Rademacher;
    std::size_t rank = 0;
    std::vector<Mat> e; // rank matrices, each M×D_X
    std::vector<Mat> f; // rank matrices, each N×D_Y
    Vec sigma;          // rank bandwidths for the E side
    Vec rho;            // rank bandwidths for the F side
    bool trainable = false;        // E, F updated by back-propagation
    bool train_bandwidths = false; // sigma, rho updated by back-propagation

    [[nodiscard]] std::size_t m() const { return e.empty() ? 0 : e.front().rows(); }
    [[nodiscard]] std::size_t n() const { return f.empty() ? 0 : f.front().rows(); }
    [[nodiscard]] std::size_t d_x() const { return e.empty() ? 0 : e.front().cols(); }
    [[nodiscard]] std::size_t d_y() const { return f.empty() ? 0 : f.front().cols(); }
};

namespace detail {

inline void check_dims(std::size_t r, std::size_t m, std::size_t n, std::size_t dx,
                       std::size_t dy) {
    if (r < 1 || m < 1 || n < 1 || dx < 1 || dy < 1)
        throw config_error("projection build: all dimensions must be >= 1");
}

inline void check_bandwidths(const Vec& sigma, const Vec& rho, std::size_t r) {
    if (sigma.size() != r || rho.size() != r)
        throw config_error("projection build: need one bandwidth per rank");
    for (double s : sigma)
        if (!(s > 0.0)) throw config_error("projection build: sigma must be > 0");
    for (double s : rho)
        if (!(s > 0.0)) throw config_error("projection build: rho must be > 0");
}

// ±1 entries drawn 64 per stream word.
class SignSource {
public:
    explicit SignSource(Rng& rng) : rng_(rng) {}
    double next() {
        if (bits_left_ == 0) {
            word_ = rng_.next_u64();
            bits_left_ = 64;
        }
        const double s = (word_ & 1u) ? 1.0 : -1.0;
        word_ >>= 1;
        --bits_left_;
        return s;
    }

private:
    Rng& rng_;
    std::uint64_t word_ = 0;
    int bits_left_ = 0;
};

} // namespace detail

// =============================================================================
// Builders
// =============================================================================

inline ProjectionStack build_rademacher(Rng& rng, std::size_t rank, std::size_t m, std::size_t n,
                                        std::size_t dx, std::size_t dy) {
    detail::check_dims(rank, m, n, dx, dy);
    ProjectionStack s;
    s.variant = ProjectionVariant::Rademacher;
    s.rank = rank;
    s.sigma.assign(rank, 1.0);
    s.rho.assign(rank, 1.0);
    detail::SignSource signs(rng);
    for (std::size_t r = 0; r < rank; ++r) {
        Mat e(m, dx), f(n, dy);
        for (std::size_t i = 0; i < m * dx; ++i) e.data()[i] = signs.next();
        for (std::size_t i = 0; i < n * dy; ++i) f.data()[i] = signs.next();
        s.e.push_back(std::move(e));
        s.f.push_back(std::move(f));
    }
    return s;
}

// Eʳ = (1/σʳ)·I_{M×D_X}·Rʳ·Pʳ with Rʳ diagonal chi(D_X) and Pʳ Haar.
inline ProjectionStack build_orth_gaussian_full(Rng& rng, std::size_t rank, std::size_t m,
                                                std::size_t n, std::size_t dx, std::size_t dy,
                                                const Vec& sigma, const Vec& rho) {
    detail::check_dims(rank, m, n, dx, dy);
    detail::check_bandwidths(sigma, rho, rank);
    if (m > dx || n > dy)
        throw config_error("orth_gaussian_full: row truncation needs M <= D_X and N <= D_Y");
    ProjectionStack s;
    s.variant = ProjectionVariant::OrthGaussianFull;
    s.rank = rank;
    s.sigma = sigma;
    s.rho = rho;
    auto make = [&](std::size_t rows, std::size_t d, double bw) {
        const Mat p = haar_orthogonal(rng, d);
        Mat out(rows, d);
        for (std::size_t i = 0; i < rows; ++i) {
            const double scale = chi_sample(rng, d) / bw;
            for (std::size_t j = 0; j < d; ++j) out(i, j) = scale * p(i, j);
        }
        return out;
    };
    for (std::size_t r = 0; r < rank; ++r) {
        s.e.push_back(make(m, dx, sigma[r]));
        s.f.push_back(make(n, dy, rho[r]));
    }
    return s;
}

// Eʳ = (√D_X/σʳ)·I_{M×D_X}·Pʳ — every row has norm √D_X/σʳ exactly.
inline ProjectionStack build_orth_gaussian_simplified(Rng& rng, std::size_t rank, std::size_t m,
                                                      std::size_t n, std::size_t dx,
                                                      std::size_t dy, const Vec& sigma,
                                                      const Vec& rho) {
    detail::check_dims(rank, m, n, dx, dy);
    detail::check_bandwidths(sigma, rho, rank);
    if (m > dx || n > dy)
        throw config_error("orth_gaussian_simplified: row truncation needs M <= D_X and N <= D_Y");
    ProjectionStack s;
    s.variant = ProjectionVariant::OrthGaussianSimplified;
    s.rank = rank;
    s.sigma = sigma;
    s.rho = rho;
    auto make = [&](std::size_t rows, std::size_t d, double bw) {
        const Mat p = haar_orthogonal(rng, d);
        const double scale = std::sqrt(static_cast<double>(d)) / bw;
        Mat out(rows, d);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d; ++j) out(i, j) = scale * p(i, j);
        return out;
    };
    for (std::size_t r = 0; r < rank; ++r) {
        s.e.push_back(make(m, dx, sigma[r]));
        s.f.push_back(make(n, dy, rho[r]));
    }
    return s;
}

// Entries i.i.d. N(0, 1/D) per input dimension; marked trainable.
inline ProjectionStack init_learnable(Rng& rng, std::size_t rank, std::size_t m, std::size_t n,
                                      std::size_t dx, std::size_t dy) {
    detail::check_dims(rank, m, n, dx, dy);
    ProjectionStack s;
    s.variant = ProjectionVariant::Learnable;
    s.rank = rank;
    s.sigma.assign(rank, 1.0);
    s.rho.assign(rank, 1.0);
    s.trainable = true;
    const double std_e = 1.0 / std::sqrt(static_cast<double>(dx));
    const double std_f = 1.0 / std::sqrt(static_cast<double>(dy));
    for (std::size_t r = 0; r < rank; ++r) {
        Mat e(m, dx), f(n, dy);
        for (std::size_t i = 0; i < m * dx; ++i) e.data()[i] = std_e * rng.normal();
        for (std::size_t i = 0; i < n * dy; ++i) f.data()[i] = std_f * rng.normal();
        s.e.push_back(std::move(e));
        s.f.push_back(std::move(f));
    }
    return s;
}

// Convenience: uniform bandwidth across ranks.
inline Vec uniform_bandwidths(std::size_t rank, double value) { return Vec(rank, value); }

// =============================================================================
// Serialization — "BRPS" blob, all numerics little-endian
// =============================================================================

inline void save_stack(const ProjectionStack& s, serial::Writer& w) {
    serial::write_magic(w, "BRPS");
    w.u32(1); // version
    w.u32(static_cast<std::uint32_t>(s.variant));
    w.u32(static_cast<std::uint32_t>(s.rank));
    w.u32(static_cast<std::uint32_t>(s.m()));
    w.u32(static_cast<std::uint32_t>(s.n()));
    w.u32(static_cast<std::uint32_t>(s.d_x()));
    w.u32(static_cast<std::uint32_t>(s.d_y()));
    w.u32((s.trainable ? 1u : 0u) | (s.train_bandwidths ? 2u : 0u));
    for (const Mat& m : s.e)
        for (std::size_t i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
    for (const Mat& m : s.f)
        for (std::size_t i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
    for (double v : s.sigma) w.f64(v);
    for (double v : s.rho) w.f64(v);
}

inline ProjectionStack load_stack(serial::Reader& r) {
    serial::expect_magic(r, "BRPS", "projection stack");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw io_error(io_error::kind::bad_version,
                       "projection stack: unsupported version " + std::to_string(version));
    const std::uint32_t variant = r.u32();
    if (variant > 3)
        throw io_error(io_error::kind::malformed, "projection stack: unknown variant tag");
    ProjectionStack s;
    s.variant = static_cast<ProjectionVariant>(variant);
    s.rank = r.u32();
    const std::size_t m = r.u32(), n = r.u32(), dx = r.u32(), dy = r.u32();
    if (s.rank < 1 || m < 1 || n < 1 || dx < 1 || dy < 1)
        throw io_error(io_error::kind::malformed, "projection stack: zero dimension in header");
    const std::uint32_t flags = r.u32();
    s.trainable = (flags & 1u) != 0;
    s.train_bandwidths = (flags & 2u) != 0;
    for (std::size_t k = 0; k < s.rank; ++k) {
        Mat e(m, dx);
        for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = r.f64();
        s.e.push_back(std::move(e));
    }
    for (std::size_t k = 0; k < s.rank; ++k) {
        Mat f(n, dy);
        for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = r.f64();
        s.f.push_back(std::move(f));
    }
    s.sigma.resize(s.rank);
    for (double& v : s.sigma) v = r.f64();
    s.rho.resize(s.rank);
    for (double& v : s.rho) v = r.f64();
    return s;
}

inline void save_stack_file(const ProjectionStack& s, const std::string& path) {
    serial::Writer w;
    save_stack(s, w);
    w.to_file(path);
}

inline ProjectionStack load_stack_file(const std::string& path) {
    serial::Reader r = serial::Reader::from_file(path);
    return load_stack(r);
}

} // namespace brp
