#pragma once

#include "brp/linalg.hpp"
#include "brp/serial.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace brp {

// =============================================================================
// FeatureSequence — T×D frame features with frame-wise labels
// =============================================================================

struct FeatureSequence {
    Mat features; // T×D
    std::vector<int> labels;
    std::string id;

    [[nodiscard]] std::size_t length() const { return features.rows(); }
    [[nodiscard]] std::size_t dim() const { return features.cols(); }
};

inline void validate_sequence(const FeatureSequence& seq, std::size_t n_classes) {
    if (seq.length() < 1) throw config_error("feature sequence: T must be >= 1");
    if (seq.labels.size() != seq.length())
        throw dim_error("feature sequence: label count != frame count");
    for (int l : seq.labels)
        if (l < 0 || static_cast<std::size_t>(l) >= n_classes)
            throw config_error("feature sequence: label out of [0, n_classes)");
    if (!seq.features.all_finite())
        throw config_error("feature sequence: non-finite feature value");
}

// =============================================================================
// Synthetic generation: sticky-Markov labels, class means on a scaled
// simplex, isotropic Gaussian emission noise
// =============================================================================

struct SynthConfig {
    std::size_t n_classes = 5;
    std::size_t dim = 32;
    std::size_t t_min = 450;
    std::size_t t_max = 550;
    std::uint64_t seed = 1;
    double stickiness = 0.9;  // stay probability per frame; mean segment len 1/(1-s)
    double noise_std = 1.0;   // shared isotropic emission std (0 = noiseless)
    double mean_separation = 2.0 * 1.4142135623730951; // pairwise distance between class means
};

inline void validate_config(const SynthConfig& cfg) {
    if (cfg.n_classes < 1) throw config_error("gen_synthetic: need n_classes >= 1");
    if (cfg.dim < cfg.n_classes)
        throw config_error("gen_synthetic: simplex placement needs D >= n_classes");
    if (cfg.t_min < 1 || cfg.t_max < cfg.t_min) throw config_error("gen_synthetic: bad T range");
    if (!(cfg.stickiness > 0.0 && cfg.stickiness < 1.0))
        throw config_error("gen_synthetic: stickiness must lie in (0,1)");
    if (cfg.noise_std < 0.0) throw config_error("gen_synthetic: noise_std must be >= 0");
    if (!(cfg.mean_separation > 0.0))
        throw config_error("gen_synthetic: mean_separation must be > 0");
}

// Class c's mean is a·e_c with a = separation/√2, so any two means are
// exactly `mean_separation` apart.
inline std::vector<Vec> class_means(const SynthConfig& cfg) {
    const double a = cfg.mean_separation / std::sqrt(2.0);
    std::vector<Vec> means(cfg.n_classes, Vec(cfg.dim, 0.0));
    for (std::size_t c = 0; c < cfg.n_classes; ++c) means[c][c] = a;
    return means;
}

inline std::vector<FeatureSequence> gen_synthetic(const SynthConfig& cfg,
                                                  std::size_t n_sequences) {
    validate_config(cfg);
    const std::vector<Vec> means = class_means(cfg);
    const Rng base(cfg.seed);
    std::vector<FeatureSequence> out;
    out.reserve(n_sequences);
    for (std::size_t s = 0; s < n_sequences; ++s) {
        Rng rng = base.split(s);
        const std::size_t t_len = cfg.t_min + rng.below(cfg.t_max - cfg.t_min + 1);
        FeatureSequence seq;
        seq.features = Mat(t_len, cfg.dim);
        seq.labels.resize(t_len);
        int label = static_cast<int>(rng.below(cfg.n_classes));
        for (std::size_t t = 0; t < t_len; ++t) {
            if (t > 0 && rng.uniform() >= cfg.stickiness && cfg.n_classes > 1) {
                // jump uniformly over the other classes
                auto jump = rng.below(cfg.n_classes - 1);
                label = static_cast<int>(jump >= static_cast<std::uint64_t>(label) ? jump + 1
                                                                                   : jump);
            }
            seq.labels[t] = label;
            for (std::size_t j = 0; j < cfg.dim; ++j)
                seq.features(t, j) = means[label][j] + cfg.noise_std * rng.normal();
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "seq_%03zu", s);
        seq.id = buf;
        out.push_back(std::move(seq));
    }
    return out;
}

// =============================================================================
// BRPF on-disk format
//
// magic "BRPF" | u32 version=1 | u32 T | u32 D | u32 n_classes |
// T×D little-endian f64 features (frame-major) | T little-endian u32 labels
// =============================================================================

inline void write_features(const std::string& path, const FeatureSequence& seq,
                           std::size_t n_classes) {
    validate_sequence(seq, n_classes);
    serial::Writer w;
    serial::write_magic(w, "BRPF");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(seq.length()));
    w.u32(static_cast<std::uint32_t>(seq.dim()));
    w.u32(static_cast<std::uint32_t>(n_classes));
    for (std::size_t i = 0; i < seq.features.size(); ++i) w.f64(seq.features.data()[i]);
    for (int l : seq.labels) w.u32(static_cast<std::uint32_t>(l));
    w.to_file(path);
}

struct ReadResult {
    FeatureSequence seq;
    std::size_t n_classes = 0;
};

inline ReadResult read_features(const std::string& path) {
    serial::Reader r = serial::Reader::from_file(path);
    serial::expect_magic(r, "BRPF", "feature file " + path);
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw io_error(io_error::kind::bad_version,
                       "feature file " + path + ": unsupported version " +
                           std::to_string(version));
    const std::uint32_t t_len = r.u32();
    const std::uint32_t dim = r.u32();
    const std::uint32_t n_classes = r.u32();
    if (t_len == 0)
        throw io_error(io_error::kind::malformed, "feature file " + path + ": empty T");
    if (dim == 0 || n_classes == 0)
        throw io_error(io_error::kind::malformed, "feature file " + path + ": zero dimension");
    ReadResult out;
    out.n_classes = n_classes;
    out.seq.features = Mat(t_len, dim);
    for (std::size_t i = 0; i < out.seq.features.size(); ++i)
        out.seq.features.data()[i] = r.f64();
    out.seq.labels.resize(t_len);
    for (std::uint32_t t = 0; t < t_len; ++t) {
        const std::uint32_t l = r.u32();
        if (l >= n_classes)
            throw io_error(io_error::kind::malformed,
                           "feature file " + path + ": label out of range");
        out.seq.labels[t] = static_cast<int>(l);
    }
    if (!r.exhausted())
        throw io_error(io_error::kind::malformed,
                       "feature file " + path + ": trailing bytes after payload");
    // id from filename stem
    std::size_t slash = path.find_last_of("/\\");
    std::string stem = (slash == std::string::npos) ? path : path.substr(slash + 1);
    if (const std::size_t dot = stem.rfind('.'); dot != std::string::npos)
        stem = stem.substr(0, dot);
    out.seq.id = stem;
    return out;
}

// Human-readable companion: one class name per frame line.
inline void write_labels_text(const std::string& path, const FeatureSequence& seq) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error(io_error::kind::open_failed, "cannot open for write: " + path);
    for (int l : seq.labels) out << "class_" << l << "\n";
}

// =============================================================================
// Cross-validation folds: partition by sequence index modulo k
// =============================================================================

struct Fold {
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;
};

inline std::vector<Fold> make_folds(std::size_t n_sequences, std::size_t k) {
    if (k < 2 || k > n_sequences)
        throw config_error("make_folds: need 2 <= k <= n_sequences");
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < n_sequences; ++i) {
        const std::size_t f = i % k;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == f)
                folds[j].test_ids.push_back(i);
            else
                folds[j].train_ids.push_back(i);
        }
    }
    return folds;
}

} // namespace brp
