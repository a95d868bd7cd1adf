#include "brp/projections.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

using namespace brp;

TEST_CASE("rademacher builder", "[projections]") {
    Rng rng(21);
    SECTION("1x1 scalars are signs") {
        ProjectionStack s = build_rademacher(rng, 1, 1, 1, 1, 1);
        CHECK(std::abs(s.e[0](0, 0)) == 1.0);
        CHECK(std::abs(s.f[0](0, 0)) == 1.0);
        CHECK(s.sigma == Vec{1.0});
        CHECK(s.rho == Vec{1.0});
    }
    SECTION("entries take no value outside {-1,+1}") {
        ProjectionStack s = build_rademacher(rng, 3, 8, 8, 16, 16);
        for (const Mat& m : s.e)
            for (std::size_t i = 0; i < m.size(); ++i)
                REQUIRE((m.data()[i] == 1.0 || m.data()[i] == -1.0));
        for (const Mat& m : s.f)
            for (std::size_t i = 0; i < m.size(); ++i)
                REQUIRE((m.data()[i] == 1.0 || m.data()[i] == -1.0));
    }
    SECTION("sign balance over one million entries") {
        // binomial Monte-Carlo oracle: fraction of +1 within 4 SE of 0.5
        ProjectionStack s = build_rademacher(rng, 1, 1000, 1, 1000, 1);
        std::size_t plus = 0;
        for (std::size_t i = 0; i < s.e[0].size(); ++i)
            if (s.e[0].data()[i] > 0) ++plus;
        const double n = static_cast<double>(s.e[0].size());
        const double frac = static_cast<double>(plus) / n;
        const double se = std::sqrt(0.25 / n);
        CHECK(std::abs(frac - 0.5) <= 4.0 * se);
    }
    SECTION("M > D_X allowed for Rademacher") {
        CHECK_NOTHROW(build_rademacher(rng, 1, 8, 8, 4, 4));
    }
}

TEST_CASE("orthogonal gaussian full builder", "[projections]") {
    Rng rng(22);
    SECTION("rows mutually orthogonal") {
        ProjectionStack s = build_orth_gaussian_full(rng, 2, 6, 6, 8, 8,
                                                     uniform_bandwidths(2, 1.5),
                                                     uniform_bandwidths(2, 0.7));
        for (const Mat& e : s.e)
            for (std::size_t i = 0; i < e.rows(); ++i)
                for (std::size_t j = i + 1; j < e.rows(); ++j)
                    CHECK(std::abs(dot(e.row(i), e.row(j))) < 1e-9);
    }
    SECTION("M = D_X gram is diagonal with squared chi draws") {
        ProjectionStack s = build_orth_gaussian_full(rng, 1, 8, 8, 8, 8,
                                                     uniform_bandwidths(1, 1.0),
                                                     uniform_bandwidths(1, 1.0));
        const Mat& e = s.e[0];
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                const double g = dot(e.row(i), e.row(j));
                if (i == j)
                    CHECK(g > 0.0);
                else
                    CHECK(std::abs(g) < 1e-9);
            }
    }
    SECTION("row norm squared has chi-squared mean D_X") {
        // E[chi²(D)] = D; Monte-Carlo over builds at sigma=1, M=D_X
        Rng local(5);
        const std::size_t d = 4;
        const int n = 100000;
        Vec samples(n);
        for (int i = 0; i < n; ++i) {
            ProjectionStack s = build_orth_gaussian_full(local, 1, 1, 1, d, d,
                                                         uniform_bandwidths(1, 1.0),
                                                         uniform_bandwidths(1, 1.0));
            samples[i] = dot(s.e[0].row(0), s.e[0].row(0));
        }
        double mean = 0.0;
        for (double x : samples) mean += x;
        mean /= n;
        double var = 0.0;
        for (double x : samples) var += (x - mean) * (x - mean);
        var /= (n - 1);
        const double se = std::sqrt(var / n);
        CHECK(std::abs(mean - static_cast<double>(d)) <= 4.0 * se);
    }
    SECTION("doubling sigma halves entries exactly") {
        Rng a(7), b(7);
        ProjectionStack s1 = build_orth_gaussian_full(a, 1, 3, 3, 4, 4,
                                                      uniform_bandwidths(1, 1.0),
                                                      uniform_bandwidths(1, 1.0));
        ProjectionStack s2 = build_orth_gaussian_full(b, 1, 3, 3, 4, 4,
                                                      uniform_bandwidths(1, 2.0),
                                                      uniform_bandwidths(1, 1.0));
        for (std::size_t i = 0; i < s1.e[0].size(); ++i)
            CHECK(s2.e[0].data()[i] == s1.e[0].data()[i] * 0.5);
    }
    SECTION("row truncation precondition") {
        CHECK_THROWS_AS(build_orth_gaussian_full(rng, 1, 9, 4, 8, 8,
                                                 uniform_bandwidths(1, 1.0),
                                                 uniform_bandwidths(1, 1.0)),
                        config_error);
    }
}

TEST_CASE("orthogonal gaussian simplified builder", "[projections]") {
    Rng rng(23);
    const double sigma = 1.7, rho = 0.9;
    ProjectionStack s = build_orth_gaussian_simplified(rng, 2, 5, 4, 8, 6,
                                                       uniform_bandwidths(2, sigma),
                                                       uniform_bandwidths(2, rho));
    SECTION("every row norm is sqrt(D)/sigma") {
        for (const Mat& e : s.e)
            for (std::size_t i = 0; i < e.rows(); ++i)
                CHECK(std::abs(norm2(e.row(i)) - std::sqrt(8.0) / sigma) < 1e-10);
        for (const Mat& f : s.f)
            for (std::size_t i = 0; i < f.rows(); ++i)
                CHECK(std::abs(norm2(f.row(i)) - std::sqrt(6.0) / rho) < 1e-10);
    }
    SECTION("sigma = sqrt(D) gives unit rows") {
        Rng local(3);
        ProjectionStack u = build_orth_gaussian_simplified(
            local, 1, 4, 4, 9, 9, uniform_bandwidths(1, 3.0), uniform_bandwidths(1, 3.0));
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(norm2(u.e[0].row(i)) - 1.0) < 1e-10);
    }
    SECTION("E Eᵀ = (D/sigma²) I") {
        const Mat& e = s.e[0];
        const double scale = 8.0 / (sigma * sigma);
        for (std::size_t i = 0; i < e.rows(); ++i)
            for (std::size_t j = 0; j < e.rows(); ++j) {
                const double g = dot(e.row(i), e.row(j));
                CHECK(std::abs(g - (i == j ? scale : 0.0)) < 1e-9);
            }
    }
}

TEST_CASE("learnable init", "[projections]") {
    SECTION("flags and bandwidths") {
        Rng rng(31);
        ProjectionStack s = init_learnable(rng, 2, 3, 3, 5, 5);
        CHECK(s.trainable);
        CHECK(s.sigma == Vec{1.0, 1.0});
        CHECK(s.rho == Vec{1.0, 1.0});
    }
    SECTION("entry variance is 1/D") {
        Rng rng(32);
        const std::size_t d = 16;
        ProjectionStack s = init_learnable(rng, 1, 625, 625, d, d);
        double mean = 0.0, var = 0.0;
        const std::size_t n = s.e[0].size() + s.f[0].size();
        auto accum_mean = [&](const Mat& m) {
            for (std::size_t i = 0; i < m.size(); ++i) mean += m.data()[i];
        };
        accum_mean(s.e[0]);
        accum_mean(s.f[0]);
        mean /= static_cast<double>(n);
        auto accum_var = [&](const Mat& m) {
            for (std::size_t i = 0; i < m.size(); ++i)
                var += (m.data()[i] - mean) * (m.data()[i] - mean);
        };
        accum_var(s.e[0]);
        accum_var(s.f[0]);
        var /= static_cast<double>(n - 1);
        // SE of sample variance of a normal is var·sqrt(2/(n-1))
        const double se = (1.0 / d) * std::sqrt(2.0 / static_cast<double>(n - 1));
        CHECK(std::abs(var - 1.0 / d) <= 4.0 * se);
    }
    SECTION("bit-identical under fixed seed") {
        Rng a(33), b(33);
        ProjectionStack s1 = init_learnable(a, 2, 4, 4, 8, 8);
        ProjectionStack s2 = init_learnable(b, 2, 4, 4, 8, 8);
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(s1.e[r] == s2.e[r]);
            CHECK(s1.f[r] == s2.f[r]);
        }
    }
}

TEST_CASE("builder determinism across variants", "[projections]") {
    for (int which = 0; which < 3; ++which) {
        Rng a(55), b(55);
        auto build = [&](Rng& r) {
            switch (which) {
                case 0: return build_rademacher(r, 2, 3, 4, 6, 5);
                case 1:
                    return build_orth_gaussian_full(r, 2, 3, 4, 6, 5,
                                                    uniform_bandwidths(2, 1.0),
                                                    uniform_bandwidths(2, 1.0));
                default:
                    return build_orth_gaussian_simplified(r, 2, 3, 4, 6, 5,
                                                          uniform_bandwidths(2, 1.0),
                                                          uniform_bandwidths(2, 1.0));
            }
        };
        ProjectionStack s1 = build(a), s2 = build(b);
        for (std::size_t r = 0; r < s1.rank; ++r) {
            REQUIRE(s1.e[r] == s2.e[r]);
            REQUIRE(s1.f[r] == s2.f[r]);
        }
    }
}

TEST_CASE("stack serialization round trip", "[projections]") {
    Rng rng(66);
    ProjectionStack s = build_orth_gaussian_full(rng, 3, 4, 5, 8, 9,
                                                 uniform_bandwidths(3, 1.25),
                                                 uniform_bandwidths(3, 0.5));
    s.train_bandwidths = true;
    const std::string path = "/tmp/brp_test_stack.bin";
    save_stack_file(s, path);
    ProjectionStack r = load_stack_file(path);
    CHECK(r.variant == s.variant);
    CHECK(r.rank == s.rank);
    CHECK(r.train_bandwidths);
    CHECK_FALSE(r.trainable);
    for (std::size_t k = 0; k < s.rank; ++k) {
        CHECK(r.e[k] == s.e[k]);
        CHECK(r.f[k] == s.f[k]);
    }
    CHECK(r.sigma == s.sigma);
    CHECK(r.rho == s.rho);

    SECTION("truncated blob rejected") {
        serial::Writer w;
        save_stack(s, w);
        std::vector<char> bytes = w.bytes();
        bytes.resize(bytes.size() / 2);
        serial::Reader rd(std::move(bytes));
        CHECK_THROWS_AS(load_stack(rd), io_error);
    }
    SECTION("bad magic rejected") {
        serial::Writer w;
        w.raw("NOPE", 4);
        w.u32(1);
        serial::Reader rd(w.bytes());
        try {
            load_stack(rd);
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.which() == io_error::kind::bad_magic);
        }
    }
}
