#include "brp/dataio.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace brp;

TEST_CASE("gen_synthetic", "[dataio]") {
    SECTION("reproducible from seed") {
        SynthConfig cfg;
        cfg.n_classes = 4;
        cfg.dim = 8;
        cfg.t_min = 20;
        cfg.t_max = 30;
        cfg.seed = 99;
        const auto a = gen_synthetic(cfg, 5);
        const auto b = gen_synthetic(cfg, 5);
        REQUIRE(a.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) {
            REQUIRE(a[i].features == b[i].features);
            REQUIRE(a[i].labels == b[i].labels);
            REQUIRE(a[i].id == b[i].id);
        }
    }
    SECTION("near-deterministic labels at extreme stickiness") {
        SynthConfig cfg;
        cfg.n_classes = 5;
        cfg.dim = 8;
        cfg.t_min = cfg.t_max = 100;
        cfg.stickiness = 0.999;
        cfg.seed = 3;
        const auto seqs = gen_synthetic(cfg, 200);
        std::size_t single_segment = 0;
        for (const auto& s : seqs) {
            bool constant = true;
            for (int l : s.labels) constant = constant && (l == s.labels[0]);
            if (constant) ++single_segment;
        }
        CHECK(single_segment >= 170); // P(no switch in 99 steps) ≈ 0.906
    }
    SECTION("mean segment length tracks 1/(1-s)") {
        SynthConfig cfg;
        cfg.n_classes = 5;
        cfg.dim = 8;
        cfg.t_min = cfg.t_max = 200;
        cfg.stickiness = 0.9;
        cfg.seed = 4;
        const auto seqs = gen_synthetic(cfg, 1000);
        std::size_t segments = 0, frames = 0;
        for (const auto& s : seqs) {
            frames += s.labels.size();
            for (std::size_t t = 1; t < s.labels.size(); ++t)
                if (s.labels[t] != s.labels[t - 1]) ++segments;
            ++segments; // first segment of each sequence
        }
        const double mean_len = static_cast<double>(frames) / static_cast<double>(segments);
        CHECK(mean_len > 9.0);
        CHECK(mean_len < 11.0);
    }
    SECTION("noiseless features are separable by nearest mean") {
        SynthConfig cfg;
        cfg.n_classes = 4;
        cfg.dim = 6;
        cfg.t_min = cfg.t_max = 50;
        cfg.noise_std = 0.0;
        cfg.seed = 5;
        const auto means = class_means(cfg);
        const auto seqs = gen_synthetic(cfg, 10);
        for (const auto& s : seqs)
            for (std::size_t t = 0; t < s.length(); ++t) {
                int best = -1;
                double best_d = 1e300;
                for (std::size_t c = 0; c < cfg.n_classes; ++c) {
                    double d2 = 0.0;
                    for (std::size_t j = 0; j < cfg.dim; ++j) {
                        const double diff = s.features(t, j) - means[c][j];
                        d2 += diff * diff;
                    }
                    if (d2 < best_d) {
                        best_d = d2;
                        best = static_cast<int>(c);
                    }
                }
                REQUIRE(best == s.labels[t]);
            }
    }
    SECTION("class means sit at the configured pairwise distance") {
        SynthConfig cfg;
        cfg.n_classes = 5;
        cfg.dim = 8;
        cfg.mean_separation = 3.5;
        const auto means = class_means(cfg);
        for (std::size_t a = 0; a < 5; ++a)
            for (std::size_t b = a + 1; b < 5; ++b) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < 8; ++j) {
                    const double diff = means[a][j] - means[b][j];
                    d2 += diff * diff;
                }
                REQUIRE(std::sqrt(d2) == Catch::Approx(3.5).epsilon(1e-12));
            }
    }
    SECTION("config validation") {
        SynthConfig cfg;
        cfg.stickiness = 1.0;
        CHECK_THROWS_AS(gen_synthetic(cfg, 1), config_error);
        cfg.stickiness = 0.5;
        cfg.n_classes = 40;
        cfg.dim = 8;
        CHECK_THROWS_AS(gen_synthetic(cfg, 1), config_error);
    }
}

TEST_CASE("BRPF round trip", "[dataio]") {
    SynthConfig cfg;
    cfg.n_classes = 3;
    cfg.dim = 5;
    cfg.t_min = 7;
    cfg.t_max = 9;
    cfg.seed = 8;
    auto seqs = gen_synthetic(cfg, 1);
    FeatureSequence& seq = seqs[0];
    // exercise signed zero and extreme values
    seq.features(0, 0) = -0.0;
    seq.features(0, 1) = 1e-300;
    seq.features(0, 2) = -1.7976931348623157e308;
    const std::string path = "/tmp/brp_test_roundtrip.brpf";
    write_features(path, seq, cfg.n_classes);
    const ReadResult r = read_features(path);
    REQUIRE(r.n_classes == cfg.n_classes);
    REQUIRE(r.seq.labels == seq.labels);
    REQUIRE(r.seq.features.rows() == seq.features.rows());
    for (std::size_t i = 0; i < seq.features.size(); ++i) {
        const double a = seq.features.data()[i], b = r.seq.features.data()[i];
        REQUIRE(std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b));
    }
    CHECK(r.seq.id == "brp_test_roundtrip");
}

TEST_CASE("BRPF error handling", "[dataio]") {
    SynthConfig cfg;
    cfg.n_classes = 3;
    cfg.dim = 4;
    cfg.t_min = cfg.t_max = 6;
    const auto seqs = gen_synthetic(cfg, 1);
    const std::string path = "/tmp/brp_test_errors.brpf";
    write_features(path, seqs[0], cfg.n_classes);

    auto file_bytes = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::vector<char>((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
    };
    auto write_bytes = [&](const std::vector<char>& bytes, const std::string& p) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };

    SECTION("truncated payload") {
        auto bytes = file_bytes();
        bytes.resize(bytes.size() - 7);
        write_bytes(bytes, "/tmp/brp_test_trunc.brpf");
        try {
            read_features("/tmp/brp_test_trunc.brpf");
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.which() == io_error::kind::truncated);
        }
    }
    SECTION("bad magic") {
        auto bytes = file_bytes();
        bytes[0] = 'X';
        write_bytes(bytes, "/tmp/brp_test_magic.brpf");
        try {
            read_features("/tmp/brp_test_magic.brpf");
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.which() == io_error::kind::bad_magic);
        }
    }
    SECTION("version mismatch") {
        auto bytes = file_bytes();
        bytes[4] = 9; // little-endian version word
        write_bytes(bytes, "/tmp/brp_test_version.brpf");
        try {
            read_features("/tmp/brp_test_version.brpf");
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.which() == io_error::kind::bad_version);
        }
    }
    SECTION("empty T rejected") {
        serial::Writer w;
        serial::write_magic(w, "BRPF");
        w.u32(1);
        w.u32(0); // T
        w.u32(4);
        w.u32(3);
        w.to_file("/tmp/brp_test_empty.brpf");
        try {
            read_features("/tmp/brp_test_empty.brpf");
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.which() == io_error::kind::malformed);
        }
    }
    SECTION("missing file") {
        try {
            read_features("/tmp/brp_no_such_file.brpf");
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.which() == io_error::kind::open_failed);
        }
    }
    SECTION("writer rejects invalid sequences") {
        FeatureSequence bad = seqs[0];
        bad.labels[0] = 99;
        CHECK_THROWS_AS(write_features("/tmp/brp_bad.brpf", bad, cfg.n_classes), config_error);
    }
}

TEST_CASE("labels text export", "[dataio]") {
    SynthConfig cfg;
    cfg.n_classes = 3;
    cfg.dim = 4;
    cfg.t_min = cfg.t_max = 4;
    const auto seqs = gen_synthetic(cfg, 1);
    write_labels_text("/tmp/brp_labels.txt", seqs[0]);
    std::ifstream in("/tmp/brp_labels.txt");
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        CHECK(line == "class_" + std::to_string(seqs[0].labels[count]));
        ++count;
    }
    CHECK(count == seqs[0].length());
}

TEST_CASE("make_folds", "[dataio]") {
    SECTION("leave-one-out") {
        const auto folds = make_folds(4, 4);
        REQUIRE(folds.size() == 4);
        for (std::size_t f = 0; f < 4; ++f) {
            REQUIRE(folds[f].test_ids.size() == 1);
            REQUIRE(folds[f].train_ids.size() == 3);
            CHECK(folds[f].test_ids[0] == f);
        }
    }
    SECTION("folds partition: disjoint and covering") {
        const auto folds = make_folds(23, 5);
        std::vector<int> seen(23, 0);
        for (const auto& f : folds)
            for (std::size_t id : f.test_ids) ++seen[id];
        for (int s : seen) REQUIRE(s == 1);
        for (const auto& f : folds) {
            std::vector<bool> in_test(23, false);
            for (std::size_t id : f.test_ids) in_test[id] = true;
            for (std::size_t id : f.train_ids) REQUIRE_FALSE(in_test[id]);
            REQUIRE(f.test_ids.size() + f.train_ids.size() == 23);
        }
    }
    SECTION("ten sequences in five folds of two") {
        const auto folds = make_folds(10, 5);
        for (const auto& f : folds) REQUIRE(f.test_ids.size() == 2);
    }
    SECTION("invalid k") {
        CHECK_THROWS_AS(make_folds(5, 1), config_error);
        CHECK_THROWS_AS(make_folds(5, 6), config_error);
    }
}
