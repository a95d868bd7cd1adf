#pragma once

#include "brp/bilinear.hpp"
#include "brp/dataio.hpp"
#include "brp/linalg.hpp"
#include "brp/metrics.hpp"
#include "brp/projections.hpp"
#include "brp/serial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace brp {

// =============================================================================
// Configuration
// =============================================================================

enum class HeadKind : std::uint32_t {
    Bilinear = 0, // pooling -> temporal conv (receptive field 25) -> dropout
    Conv1x1 = 1,  // plain 1x1 projection to class logits (baseline)
};

struct StageConfig {
    std::size_t in_dim = 32;
    std::size_t hidden = 32;
    std::size_t layers = 6; // residual blocks, dilation 2^l
    std::size_t n_classes = 5;
    HeadKind head = HeadKind::Bilinear;
    PoolVariant pool_variant = PoolVariant::OrthGaussianSimplified;
    std::size_t pool_rank = 4;
    std::size_t pool_rows = 16; // M = N
    std::size_t head_kernel = 25;
    double dropout = 0.25;       // inverted dropout on the head logits
    double block_dropout = 0.0;  // inverted dropout on each block's conv branch

    [[nodiscard]] std::size_t pooled_dim() const {
        if (head == HeadKind::Conv1x1) return hidden;
        return (pool_variant == PoolVariant::OrthGaussianFull) ? 4 * pool_rows * pool_rows
                                                               : pool_rows * pool_rows;
    }
    [[nodiscard]] BilinearConfig pool_config() const {
        return BilinearConfig{pool_variant, pool_rank, pool_rows, pool_rows,
                              hidden,       hidden,    true};
    }
    void validate() const {
        if (layers < 1) throw config_error("stage: need at least one residual block");
        if (hidden < 2) throw config_error("stage: hidden width must be >= 2");
        if (n_classes < 2) throw config_error("stage: need >= 2 classes");
        if (head_kernel % 2 == 0) throw config_error("stage: head kernel must be odd");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw config_error("stage: dropout must lie in [0,1)");
        if (!(block_dropout >= 0.0 && block_dropout < 1.0))
            throw config_error("stage: block_dropout must lie in [0,1)");
        if (head == HeadKind::Bilinear && pool_variant != PoolVariant::HadamardBaseline &&
            pool_variant != PoolVariant::Rademacher && pool_rows > hidden)
            throw config_error("stage: orthogonal pooling needs M <= hidden width");
    }
};

struct TrainConfig {
    double learning_rate = 5e-4;
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

// =============================================================================
// Parameters
// =============================================================================

struct ResidualBlock {
    std::array<Mat, 3> w; // dilated conv taps at offsets {-d, 0, +d}, each H×H
    Vec b;
    Mat wp; // pointwise conv H×H
    Vec bp;
};

struct StageParams {
    StageConfig cfg;
    Mat w_in; // H×D_in
    Vec b_in;
    std::vector<ResidualBlock> blocks;
    ProjectionStack stack; // bilinear head (rp variants); unused otherwise
    Mat had_u, had_v;      // hadamard head, each d_pool×H
    std::vector<Mat> w_head; // head_kernel taps, each C×d_pool
    Vec b_head;
};

// Same shapes as the trainable tensors of StageParams.
struct StageGrads {
    Mat w_in;
    Vec b_in;
    std::vector<ResidualBlock> blocks;
    std::vector<Mat> d_e, d_f;
    Vec d_sigma, d_rho;
    Mat had_u, had_v;
    std::vector<Mat> w_head;
    Vec b_head;
};

namespace detail {

inline Mat normal_mat(Rng& rng, std::size_t rows, std::size_t cols, double std) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = std * rng.normal();
    return m;
}

} // namespace detail

inline StageParams init_stage(Rng& rng, const StageConfig& cfg) {
    cfg.validate();
    StageParams p;
    p.cfg = cfg;
    p.w_in = detail::normal_mat(rng, cfg.hidden, cfg.in_dim,
                                1.0 / std::sqrt(static_cast<double>(cfg.in_dim)));
    p.b_in.assign(cfg.hidden, 0.0);
    const double std_d = 1.0 / std::sqrt(3.0 * static_cast<double>(cfg.hidden));
    const double std_p = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        ResidualBlock blk;
        for (auto& w : blk.w) w = detail::normal_mat(rng, cfg.hidden, cfg.hidden, std_d);
        blk.b.assign(cfg.hidden, 0.0);
        blk.wp = detail::normal_mat(rng, cfg.hidden, cfg.hidden, std_p);
        blk.bp.assign(cfg.hidden, 0.0);
        p.blocks.push_back(std::move(blk));
    }
    if (cfg.head == HeadKind::Bilinear) {
        const std::size_t r = cfg.pool_rank, m = cfg.pool_rows, h = cfg.hidden;
        switch (cfg.pool_variant) {
            case PoolVariant::Rademacher:
                p.stack = build_rademacher(rng, r, m, m, h, h);
                break;
            case PoolVariant::OrthGaussianSimplified:
                p.stack = build_orth_gaussian_simplified(rng, r, m, m, h, h,
                                                         uniform_bandwidths(r, 1.0),
                                                         uniform_bandwidths(r, 1.0));
                p.stack.train_bandwidths = true;
                break;
            case PoolVariant::OrthGaussianFull:
                p.stack = build_orth_gaussian_full(rng, r, m, m, h, h,
                                                   uniform_bandwidths(r, 1.0),
                                                   uniform_bandwidths(r, 1.0));
                p.stack.train_bandwidths = true;
                break;
            case PoolVariant::Learnable:
                p.stack = init_learnable(rng, r, m, m, h, h);
                break;
            case PoolVariant::HadamardBaseline: {
                const double std_h = 1.0 / std::sqrt(static_cast<double>(h));
                p.had_u = detail::normal_mat(rng, cfg.pooled_dim(), h, std_h);
                p.had_v = detail::normal_mat(rng, cfg.pooled_dim(), h, std_h);
                break;
            }
        }
    }
    const std::size_t d_pool = cfg.pooled_dim();
    const std::size_t taps = (cfg.head == HeadKind::Conv1x1) ? 1 : cfg.head_kernel;
    const double std_head = 1.0 / std::sqrt(static_cast<double>(taps * d_pool));
    for (std::size_t k = 0; k < taps; ++k)
        p.w_head.push_back(detail::normal_mat(rng, cfg.n_classes, d_pool, std_head));
    p.b_head.assign(cfg.n_classes, 0.0);
    return p;
}

inline StageGrads make_grads(const StageParams& p) {
    StageGrads g;
    g.w_in = Mat(p.w_in.rows(), p.w_in.cols());
    g.b_in.assign(p.b_in.size(), 0.0);
    for (const auto& blk : p.blocks) {
        ResidualBlock gb;
        for (std::size_t k = 0; k < 3; ++k) gb.w[k] = Mat(blk.w[k].rows(), blk.w[k].cols());
        gb.b.assign(blk.b.size(), 0.0);
        gb.wp = Mat(blk.wp.rows(), blk.wp.cols());
        gb.bp.assign(blk.bp.size(), 0.0);
        g.blocks.push_back(std::move(gb));
    }
    if (p.stack.trainable) {
        for (const Mat& e : p.stack.e) g.d_e.emplace_back(e.rows(), e.cols());
        for (const Mat& f : p.stack.f) g.d_f.emplace_back(f.rows(), f.cols());
    }
    if (p.stack.train_bandwidths) {
        g.d_sigma.assign(p.stack.sigma.size(), 0.0);
        g.d_rho.assign(p.stack.rho.size(), 0.0);
    }
    if (!p.had_u.empty()) {
        g.had_u = Mat(p.had_u.rows(), p.had_u.cols());
        g.had_v = Mat(p.had_v.rows(), p.had_v.cols());
    }
    for (const Mat& w : p.w_head) g.w_head.emplace_back(w.rows(), w.cols());
    g.b_head.assign(p.b_head.size(), 0.0);
    return g;
}

// Flattened trainable tensors. The two overloads must traverse in the same
// order; the end-to-end finite-difference test pins the pairing.
inline std::vector<std::span<double>> tensor_views(StageParams& p) {
    std::vector<std::span<double>> v;
    auto add_mat = [&](Mat& m) { v.emplace_back(m.data(), m.size()); };
    auto add_vec = [&](Vec& x) { v.emplace_back(x.data(), x.size()); };
    add_mat(p.w_in);
    add_vec(p.b_in);
    for (auto& blk : p.blocks) {
        for (auto& w : blk.w) add_mat(w);
        add_vec(blk.b);
        add_mat(blk.wp);
        add_vec(blk.bp);
    }
    if (p.stack.trainable) {
        for (Mat& e : p.stack.e) add_mat(e);
        for (Mat& f : p.stack.f) add_mat(f);
    }
    if (p.stack.train_bandwidths) {
        add_vec(p.stack.sigma);
        add_vec(p.stack.rho);
    }
    if (!p.had_u.empty()) {
        add_mat(p.had_u);
        add_mat(p.had_v);
    }
    for (Mat& w : p.w_head) add_mat(w);
    add_vec(p.b_head);
    return v;
}

inline std::vector<std::span<double>> tensor_views(StageGrads& g) {
    std::vector<std::span<double>> v;
    auto add_mat = [&](Mat& m) { v.emplace_back(m.data(), m.size()); };
    auto add_vec = [&](Vec& x) { v.emplace_back(x.data(), x.size()); };
    add_mat(g.w_in);
    add_vec(g.b_in);
    for (auto& blk : g.blocks) {
        for (auto& w : blk.w) add_mat(w);
        add_vec(blk.b);
        add_mat(blk.wp);
        add_vec(blk.bp);
    }
    for (Mat& e : g.d_e) add_mat(e);
    for (Mat& f : g.d_f) add_mat(f);
    if (!g.d_sigma.empty()) {
        add_vec(g.d_sigma);
        add_vec(g.d_rho);
    }
    if (!g.had_u.empty()) {
        add_mat(g.had_u);
        add_mat(g.had_v);
    }
    for (Mat& w : g.w_head) add_mat(w);
    add_vec(g.b_head);
    return v;
}

inline std::size_t parameter_count(StageParams& p) {
    std::size_t n = 0;
    for (auto s : tensor_views(p)) n += s.size();
    return n;
}

// =============================================================================
// Layer primitives
// =============================================================================

// 1x1 convolution over time: out.row(t) = w·in.row(t) + b.
inline Mat conv1x1_forward(const Mat& input, const Mat& w, const Vec& b) {
    if (w.cols() != input.cols()) throw dim_error("conv1x1: channel mismatch");
    if (b.size() != w.rows()) throw dim_error("conv1x1: bias size mismatch");
    Mat out(input.rows(), w.rows());
    for (std::size_t t = 0; t < input.rows(); ++t) {
        const double* in_row = input.data() + t * input.cols();
        double* out_row = out.data() + t * out.cols();
        for (std::size_t c = 0; c < w.rows(); ++c) {
            const double* wr = w.data() + c * w.cols();
            double acc = b[c];
            for (std::size_t j = 0; j < w.cols(); ++j) acc += wr[j] * in_row[j];
            out_row[c] = acc;
        }
    }
    return out;
}

// Acausal dilated conv, kernel 3, zero padding outside [0,T):
// out[t] = b + Σ_{k∈{-1,0,1}} w_k · input[t + k·dilation].
inline Mat dilated_conv1d_forward(const std::array<Mat, 3>& w, const Vec& b, const Mat& input,
                                  std::size_t dilation) {
    const std::size_t t_len = input.rows();
    const std::size_t c_out = w[0].rows();
    for (const Mat& wk : w)
        if (wk.cols() != input.cols() || wk.rows() != c_out)
            throw dim_error("dilated_conv1d: weight shape mismatch");
    if (b.size() != c_out) throw dim_error("dilated_conv1d: bias size mismatch");
    Mat out(t_len, c_out);
    for (std::size_t t = 0; t < t_len; ++t) {
        double* out_row = out.data() + t * c_out;
        for (std::size_t c = 0; c < c_out; ++c) out_row[c] = b[c];
        for (int k = 0; k < 3; ++k) {
            const long s = static_cast<long>(t) + (k - 1) * static_cast<long>(dilation);
            if (s < 0 || s >= static_cast<long>(t_len)) continue;
            const double* in_row = input.data() + static_cast<std::size_t>(s) * input.cols();
            const Mat& wk = w[static_cast<std::size_t>(k)];
            for (std::size_t c = 0; c < c_out; ++c) {
                const double* wr = wk.data() + c * wk.cols();
                double acc = 0.0;
                for (std::size_t j = 0; j < wk.cols(); ++j) acc += wr[j] * in_row[j];
                out_row[c] += acc;
            }
        }
    }
    return out;
}

struct BlockCache {
    Mat conv; // dilated conv output (pre-ReLU)
    Mat relu;
    Mat mask; // inverted-dropout keep mask on the conv branch; empty if unused
    Mat out;
};

namespace detail {

inline BlockCache block_forward(const ResidualBlock& blk, const Mat& input,
                                std::size_t dilation, double drop, Rng* rng) {
    BlockCache c;
    c.conv = dilated_conv1d_forward(blk.w, blk.b, input, dilation);
    c.relu = c.conv;
    for (std::size_t i = 0; i < c.relu.size(); ++i)
        c.relu.data()[i] = std::max(0.0, c.relu.data()[i]);
    c.out = conv1x1_forward(c.relu, blk.wp, blk.bp);
    if (drop > 0.0) {
        const double keep = 1.0 - drop;
        c.mask = Mat(c.out.rows(), c.out.cols());
        for (std::size_t i = 0; i < c.out.size(); ++i) {
            const double m = (rng->uniform() >= drop) ? 1.0 : 0.0;
            c.mask.data()[i] = m;
            c.out.data()[i] *= m / keep;
        }
    }
    if (c.out.rows() != input.rows() || c.out.cols() != input.cols())
        throw dim_error("residual block: skip shape mismatch");
    for (std::size_t i = 0; i < c.out.size(); ++i) c.out.data()[i] += input.data()[i];
    return c;
}

} // namespace detail

// out = input + pointwise(ReLU(dilated_conv(input)))
inline BlockCache residual_block_forward(const ResidualBlock& blk, const Mat& input,
                                         std::size_t dilation) {
    return detail::block_forward(blk, input, dilation, 0.0, nullptr);
}

// Centered temporal conv with `taps` taps: out[t] = b + Σ_k w_k·in[t+k-taps/2].
inline Mat temporal_conv_forward(const std::vector<Mat>& w, const Vec& b, const Mat& input) {
    const std::size_t t_len = input.rows();
    const std::size_t taps = w.size();
    const std::size_t c_out = w[0].rows();
    const long center = static_cast<long>(taps / 2);
    Mat out(t_len, c_out);
    for (std::size_t t = 0; t < t_len; ++t) {
        double* out_row = out.data() + t * c_out;
        for (std::size_t c = 0; c < c_out; ++c) out_row[c] = b[c];
        for (std::size_t k = 0; k < taps; ++k) {
            const long s = static_cast<long>(t) + static_cast<long>(k) - center;
            if (s < 0 || s >= static_cast<long>(t_len)) continue;
            const double* in_row = input.data() + static_cast<std::size_t>(s) * input.cols();
            const Mat& wk = w[k];
            for (std::size_t c = 0; c < c_out; ++c) {
                const double* wr = wk.data() + c * wk.cols();
                double acc = 0.0;
                for (std::size_t j = 0; j < wk.cols(); ++j) acc += wr[j] * in_row[j];
                out_row[c] += acc;
            }
        }
    }
    return out;
}

// =============================================================================
// Full stage forward
// =============================================================================

struct ForwardCache {
    Mat h0;
    std::vector<BlockCache> blocks;
    Mat pooled;
    Mat logits_raw;
    Mat dropout_mask; // empty when dropout was not applied
    Mat logits;
};

namespace detail {

inline void pool_sequence(const StageParams& p, const Mat& features, Mat& pooled) {
    const BilinearConfig cfg = p.cfg.pool_config();
    pooled = Mat(features.rows(), p.cfg.pooled_dim());
    for (std::size_t t = 0; t < features.rows(); ++t) {
        const auto h_t = features.row(t);
        Vec z;
        switch (p.cfg.pool_variant) {
            case PoolVariant::OrthGaussianFull:
                z = forward_full(p.stack, cfg, h_t, h_t);
                break;
            case PoolVariant::HadamardBaseline:
                z = forward_hadamard(p.had_u, p.had_v, h_t, h_t);
                break;
            default:
                z = forward_rp(p.stack, cfg, h_t, h_t);
        }
        std::copy(z.begin(), z.end(), pooled.row(t).begin());
    }
}

} // namespace detail

// Pooled features -> temporal conv (receptive field cfg.head_kernel) ->
// inverted dropout in train mode. For the Conv1x1 baseline the pooled
// features are the hidden features themselves and the conv has one tap.
inline ForwardCache stage_forward(const StageParams& p, const Mat& features, bool train_mode,
                                  Rng* rng) {
    if (features.cols() != p.cfg.in_dim) throw dim_error("stage_forward: input dim mismatch");
    if (features.rows() < 1) throw dim_error("stage_forward: empty sequence");
    const double block_drop = (train_mode && p.cfg.block_dropout > 0.0) ? p.cfg.block_dropout
                                                                        : 0.0;
    if (block_drop > 0.0 && !rng)
        throw config_error("stage_forward: block dropout needs an rng in train mode");
    ForwardCache c;
    c.h0 = conv1x1_forward(features, p.w_in, p.b_in);
    const Mat* h = &c.h0;
    c.blocks.reserve(p.blocks.size());
    std::size_t dilation = 1;
    for (const auto& blk : p.blocks) {
        c.blocks.push_back(detail::block_forward(blk, *h, dilation, block_drop, rng));
        h = &c.blocks.back().out;
        dilation *= 2;
    }
    if (p.cfg.head == HeadKind::Bilinear) {
        detail::pool_sequence(p, *h, c.pooled);
    } else {
        c.pooled = *h;
    }
    c.logits_raw = temporal_conv_forward(p.w_head, p.b_head, c.pooled);
    if (train_mode && p.cfg.dropout > 0.0) {
        if (!rng) throw config_error("stage_forward: dropout needs an rng in train mode");
        const double keep = 1.0 - p.cfg.dropout;
        c.dropout_mask = Mat(c.logits_raw.rows(), c.logits_raw.cols());
        c.logits = c.logits_raw;
        for (std::size_t i = 0; i < c.logits.size(); ++i) {
            const double m = (rng->uniform() >= p.cfg.dropout) ? 1.0 : 0.0;
            c.dropout_mask.data()[i] = m;
            c.logits.data()[i] *= m / keep;
        }
    } else {
        c.logits = c.logits_raw;
    }
    return c;
}

inline Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (std::size_t t = 0; t < logits.rows(); ++t) {
        const auto row = logits.row(t);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            out(t, c) = std::exp(row[c] - mx);
            sum += out(t, c);
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) out(t, c) /= sum;
    }
    return out;
}

// Mean frame-wise cross-entropy; fills d_logits when requested.
inline double cross_entropy(const Mat& logits, const std::vector<int>& labels, Mat* d_logits) {
    if (labels.size() != logits.rows()) throw dim_error("cross_entropy: label count mismatch");
    const double inv_t = 1.0 / static_cast<double>(logits.rows());
    double loss = 0.0;
    if (d_logits) *d_logits = Mat(logits.rows(), logits.cols());
    for (std::size_t t = 0; t < logits.rows(); ++t) {
        const auto row = logits.row(t);
        const int label = labels[t];
        if (label < 0 || static_cast<std::size_t>(label) >= logits.cols())
            throw config_error("cross_entropy: label out of range");
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        loss += (lse - row[label]) * inv_t;
        if (d_logits) {
            for (std::size_t c = 0; c < logits.cols(); ++c) {
                const double p = std::exp(row[c] - mx) / sum;
                (*d_logits)(t, c) =
                    (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_t;
            }
        }
    }
    return loss;
}

// =============================================================================
// Backward
// =============================================================================

namespace detail {

inline void conv1x1_backward(const Mat& input, const Mat& w, const Mat& d_out, Mat& d_w,
                             Vec& d_b, Mat* d_in) {
    for (std::size_t t = 0; t < input.rows(); ++t) {
        const double* in_row = input.data() + t * input.cols();
        const double* g_row = d_out.data() + t * d_out.cols();
        for (std::size_t c = 0; c < w.rows(); ++c) {
            const double g = g_row[c];
            if (g == 0.0) continue;
            double* dw_row = d_w.data() + c * d_w.cols();
            for (std::size_t j = 0; j < w.cols(); ++j) dw_row[j] += g * in_row[j];
            d_b[c] += g;
        }
        if (d_in) {
            double* di_row = d_in->data() + t * d_in->cols();
            for (std::size_t c = 0; c < w.rows(); ++c) {
                const double g = g_row[c];
                if (g == 0.0) continue;
                const double* wr = w.data() + c * w.cols();
                for (std::size_t j = 0; j < w.cols(); ++j) di_row[j] += g * wr[j];
            }
        }
    }
}

inline void temporal_conv_backward(const Mat& input, std::span<const Mat> w, const Mat& d_out,
                                   std::span<Mat> d_w, Vec& d_b, Mat& d_in,
                                   long tap_stride) {
    const std::size_t taps = w.size();
    const long center = static_cast<long>(taps / 2);
    const long t_len = static_cast<long>(input.rows());
    for (long t = 0; t < t_len; ++t) {
        const double* g_row = d_out.data() + static_cast<std::size_t>(t) * d_out.cols();
        for (std::size_t c = 0; c < d_out.cols(); ++c) d_b[c] += g_row[c];
        for (std::size_t k = 0; k < taps; ++k) {
            const long s = t + (static_cast<long>(k) - center) * tap_stride;
            if (s < 0 || s >= t_len) continue;
            const double* in_row = input.data() + static_cast<std::size_t>(s) * input.cols();
            double* di_row = d_in.data() + static_cast<std::size_t>(s) * d_in.cols();
            const Mat& wk = w[k];
            Mat& dwk = d_w[k];
            for (std::size_t c = 0; c < wk.rows(); ++c) {
                const double g = g_row[c];
                if (g == 0.0) continue;
                const double* wr = wk.data() + c * wk.cols();
                double* dwr = dwk.data() + c * dwk.cols();
                for (std::size_t j = 0; j < wk.cols(); ++j) {
                    dwr[j] += g * in_row[j];
                    di_row[j] += g * wr[j];
                }
            }
        }
    }
}

} // namespace detail

// Computes loss and accumulates gradients into g (which must come from
// make_grads on the same params). Returns the loss.
inline double stage_backward(const StageParams& p, const Mat& features,
                             const std::vector<int>& labels, const ForwardCache& c,
                             StageGrads& g) {
    Mat d_logits;
    const double loss = cross_entropy(c.logits, labels, &d_logits);

    if (!c.dropout_mask.empty()) {
        const double keep = 1.0 - p.cfg.dropout;
        for (std::size_t i = 0; i < d_logits.size(); ++i)
            d_logits.data()[i] *= c.dropout_mask.data()[i] / keep;
    }

    const Mat& features_final =
        p.blocks.empty() ? c.h0 : c.blocks.back().out; // head input (T×H)
    const Mat& head_in = (p.cfg.head == HeadKind::Bilinear) ? c.pooled : features_final;

    Mat d_pooled(head_in.rows(), head_in.cols());
    detail::temporal_conv_backward(head_in, {p.w_head.data(), p.w_head.size()}, d_logits,
                                   {g.w_head.data(), g.w_head.size()}, g.b_head, d_pooled, 1);

    Mat d_h(features_final.rows(), features_final.cols());
    if (p.cfg.head == HeadKind::Bilinear) {
        const BilinearConfig cfg = p.cfg.pool_config();
        for (std::size_t t = 0; t < features_final.rows(); ++t) {
            const auto h_t = features_final.row(t);
            const auto dz_t = d_pooled.row(t);
            if (p.cfg.pool_variant == PoolVariant::HadamardBaseline) {
                HadamardGrads hg = backward_hadamard(p.had_u, p.had_v, nullptr, h_t, h_t, dz_t);
                for (std::size_t j = 0; j < d_h.cols(); ++j)
                    d_h(t, j) += hg.d_x[j] + hg.d_y[j];
                for (std::size_t i = 0; i < g.had_u.size(); ++i) {
                    g.had_u.data()[i] += hg.d_u.data()[i];
                    g.had_v.data()[i] += hg.d_v.data()[i];
                }
            } else {
                PoolGrads pg = (p.cfg.pool_variant == PoolVariant::OrthGaussianFull)
                                   ? backward_full(p.stack, cfg, h_t, h_t, dz_t)
                                   : backward_rp(p.stack, cfg, h_t, h_t, dz_t);
                for (std::size_t j = 0; j < d_h.cols(); ++j)
                    d_h(t, j) += pg.d_x[j] + pg.d_y[j];
                if (p.stack.trainable) {
                    for (std::size_t r = 0; r < p.stack.rank; ++r) {
                        for (std::size_t i = 0; i < g.d_e[r].size(); ++i)
                            g.d_e[r].data()[i] += pg.d_e[r].data()[i];
                        for (std::size_t i = 0; i < g.d_f[r].size(); ++i)
                            g.d_f[r].data()[i] += pg.d_f[r].data()[i];
                    }
                }
                if (p.stack.train_bandwidths) {
                    for (std::size_t r = 0; r < p.stack.rank; ++r) {
                        g.d_sigma[r] += pg.d_sigma[r];
                        g.d_rho[r] += pg.d_rho[r];
                    }
                }
            }
        }
    } else {
        d_h = d_pooled;
    }

    // Residual blocks, reverse order.
    std::size_t dilation = std::size_t{1} << (p.blocks.size() - 1);
    for (std::size_t l = p.blocks.size(); l-- > 0;) {
        const Mat& block_in = (l == 0) ? c.h0 : c.blocks[l - 1].out;
        const BlockCache& bc = c.blocks[l];
        ResidualBlock& gb = g.blocks[l];

        // pointwise backward, through the branch dropout mask when present
        const Mat* d_pw = &d_h;
        Mat d_pw_masked;
        if (!bc.mask.empty()) {
            const double keep = 1.0 - p.cfg.block_dropout;
            d_pw_masked = d_h;
            for (std::size_t i = 0; i < d_pw_masked.size(); ++i)
                d_pw_masked.data()[i] *= bc.mask.data()[i] / keep;
            d_pw = &d_pw_masked;
        }
        Mat d_relu(bc.relu.rows(), bc.relu.cols());
        detail::conv1x1_backward(bc.relu, p.blocks[l].wp, *d_pw, gb.wp, gb.bp, &d_relu);
        // ReLU gate
        for (std::size_t i = 0; i < d_relu.size(); ++i)
            if (bc.conv.data()[i] <= 0.0) d_relu.data()[i] = 0.0;
        // dilated conv backward (3 taps, stride = dilation); skip adds d_h.
        Mat d_in(block_in.rows(), block_in.cols());
        detail::temporal_conv_backward(block_in, {p.blocks[l].w.data(), 3}, d_relu,
                                       {gb.w.data(), 3}, gb.b, d_in,
                                       static_cast<long>(dilation));
        for (std::size_t i = 0; i < d_in.size(); ++i) d_in.data()[i] += d_h.data()[i];
        d_h = std::move(d_in);
        dilation /= 2;
    }

    detail::conv1x1_backward(features, p.w_in, d_h, g.w_in, g.b_in, nullptr);
    return loss;
}

// =============================================================================
// Prediction
// =============================================================================

// Per-frame argmax over class logits, ties broken by lowest class id.
inline std::vector<int> argmax_rows(const Mat& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t t = 0; t < logits.rows(); ++t) {
        const auto row = logits.row(t);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (row[c] > row[best]) best = c;
        out[t] = static_cast<int>(best);
    }
    return out;
}

inline SegmentLabeling predict(const StageParams& p, const Mat& features) {
    const ForwardCache c = stage_forward(p, features, false, nullptr);
    return segments_from_frames(argmax_rows(c.logits));
}

// =============================================================================
// Adam
// =============================================================================

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<std::span<double>> params, std::vector<std::span<double>> grads) {
        std::size_t total = 0;
        for (auto s : params) total += s.size();
        if (m_.empty()) {
            m_.assign(total, 0.0);
            v_.assign(total, 0.0);
        }
        if (m_.size() != total) throw dim_error("adam: parameter count changed");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        std::size_t idx = 0;
        for (std::size_t s = 0; s < params.size(); ++s) {
            if (params[s].size() != grads[s].size())
                throw dim_error("adam: tensor shape mismatch between params and grads");
            for (std::size_t i = 0; i < params[s].size(); ++i, ++idx) {
                const double gr = grads[s][i];
                m_[idx] = beta1_ * m_[idx] + (1.0 - beta1_) * gr;
                v_[idx] = beta2_ * v_[idx] + (1.0 - beta2_) * gr * gr;
                const double mhat = m_[idx] / bc1;
                const double vhat = v_[idx] / bc2;
                params[s][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    [[nodiscard]] std::size_t steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    Vec m_, v_;
};

// =============================================================================
// Training
// =============================================================================

inline void zero_grads(StageGrads& g) {
    for (auto s : tensor_views(g)) std::fill(s.begin(), s.end(), 0.0);
}

namespace detail {

// Bandwidths are folded into the stored projection matrices, so after an
// optimizer step the matrices are rescaled by sigma_old/sigma_new.
inline void apply_update(StageParams& p, Adam& opt, StageGrads& g) {
    Vec sigma_old = p.stack.sigma, rho_old = p.stack.rho;
    opt.step(tensor_views(p), tensor_views(g));
    if (!p.stack.train_bandwidths) return;
    for (std::size_t r = 0; r < p.stack.rank; ++r) {
        p.stack.sigma[r] = std::max(p.stack.sigma[r], 1e-6);
        p.stack.rho[r] = std::max(p.stack.rho[r], 1e-6);
        const double fe = sigma_old[r] / p.stack.sigma[r];
        const double ff = rho_old[r] / p.stack.rho[r];
        if (fe != 1.0)
            for (std::size_t i = 0; i < p.stack.e[r].size(); ++i) p.stack.e[r].data()[i] *= fe;
        if (ff != 1.0)
            for (std::size_t i = 0; i < p.stack.f[r].size(); ++i) p.stack.f[r].data()[i] *= ff;
    }
}

} // namespace detail

// One forward/backward/update on a single sequence.
inline double train_step(StageParams& p, Adam& opt, const FeatureSequence& seq, Rng& rng,
                         StageGrads& g) {
    zero_grads(g);
    const ForwardCache cache = stage_forward(p, seq.features, true, &rng);
    const double loss = stage_backward(p, seq.features, seq.labels, cache, g);
    if (!std::isfinite(loss))
        throw train_error("train_step: non-finite loss on sequence '" + seq.id + "'");
    detail::apply_update(p, opt, g);
    return loss;
}

struct EpochStats {
    double mean_loss = 0.0;
    double train_acc = 0.0; // training-mode argmax accuracy over the epoch
};

inline EpochStats train_epoch(StageParams& p, Adam& opt,
                              const std::vector<FeatureSequence>& train_set, Rng& rng,
                              StageGrads& g) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0, total = 0;
    for (std::size_t idx : order) {
        const FeatureSequence& seq = train_set[idx];
        zero_grads(g);
        const ForwardCache cache = stage_forward(p, seq.features, true, &rng);
        const double loss = stage_backward(p, seq.features, seq.labels, cache, g);
        if (!std::isfinite(loss))
            throw train_error("train_epoch: non-finite loss on sequence '" + seq.id + "'");
        const std::vector<int> pred = argmax_rows(cache.logits);
        for (std::size_t t = 0; t < pred.size(); ++t)
            if (pred[t] == seq.labels[t]) ++correct;
        total += pred.size();
        detail::apply_update(p, opt, g);
        loss_sum += loss;
    }
    EpochStats s;
    s.mean_loss = loss_sum / static_cast<double>(train_set.size());
    s.train_acc = total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return s;
}

// =============================================================================
// Checkpoints — "BRPC" versioned header + shape manifest + LE f64 tensors
// =============================================================================

namespace detail {

inline void write_tensor(serial::Writer& w, const std::string& name, const Mat& m) {
    w.str(name);
    w.u32(2);
    w.u64(m.rows());
    w.u64(m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

inline void write_tensor(serial::Writer& w, const std::string& name, const Vec& v) {
    w.str(name);
    w.u32(1);
    w.u64(v.size());
    for (double x : v) w.f64(x);
}

inline Mat read_mat_tensor(serial::Reader& r, const std::string& expect) {
    const std::string name = r.str();
    if (name != expect)
        throw io_error(io_error::kind::malformed,
                       "checkpoint: expected tensor '" + expect + "', found '" + name + "'");
    if (r.u32() != 2) throw io_error(io_error::kind::malformed, "checkpoint: rank != 2");
    const std::size_t rows = r.u64(), cols = r.u64();
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    return m;
}

inline Vec read_vec_tensor(serial::Reader& r, const std::string& expect) {
    const std::string name = r.str();
    if (name != expect)
        throw io_error(io_error::kind::malformed,
                       "checkpoint: expected tensor '" + expect + "', found '" + name + "'");
    if (r.u32() != 1) throw io_error(io_error::kind::malformed, "checkpoint: rank != 1");
    Vec v(r.u64());
    for (double& x : v) x = r.f64();
    return v;
}

} // namespace detail

inline void save_checkpoint(const StageParams& p, const std::string& path) {
    serial::Writer w;
    serial::write_magic(w, "BRPC");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(p.cfg.in_dim));
    w.u32(static_cast<std::uint32_t>(p.cfg.hidden));
    w.u32(static_cast<std::uint32_t>(p.cfg.layers));
    w.u32(static_cast<std::uint32_t>(p.cfg.n_classes));
    w.u32(static_cast<std::uint32_t>(p.cfg.head));
    w.u32(static_cast<std::uint32_t>(p.cfg.pool_variant));
    w.u32(static_cast<std::uint32_t>(p.cfg.pool_rank));
    w.u32(static_cast<std::uint32_t>(p.cfg.pool_rows));
    w.u32(static_cast<std::uint32_t>(p.cfg.head_kernel));
    w.f64(p.cfg.dropout);
    w.f64(p.cfg.block_dropout);
    const bool has_stack = !p.stack.e.empty();
    w.u32(has_stack ? 1u : 0u);
    if (has_stack) save_stack(p.stack, w);
    const bool has_hadamard = !p.had_u.empty();
    w.u32(has_hadamard ? 1u : 0u);
    if (has_hadamard) {
        detail::write_tensor(w, "had_u", p.had_u);
        detail::write_tensor(w, "had_v", p.had_v);
    }
    detail::write_tensor(w, "w_in", p.w_in);
    detail::write_tensor(w, "b_in", p.b_in);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        const std::string base = "block" + std::to_string(l);
        for (std::size_t k = 0; k < 3; ++k)
            detail::write_tensor(w, base + ".w" + std::to_string(k), p.blocks[l].w[k]);
        detail::write_tensor(w, base + ".b", p.blocks[l].b);
        detail::write_tensor(w, base + ".wp", p.blocks[l].wp);
        detail::write_tensor(w, base + ".bp", p.blocks[l].bp);
    }
    for (std::size_t k = 0; k < p.w_head.size(); ++k)
        detail::write_tensor(w, "head.w" + std::to_string(k), p.w_head[k]);
    detail::write_tensor(w, "head.b", p.b_head);
    w.to_file(path);
}

inline StageParams load_checkpoint(const std::string& path) {
    serial::Reader r = serial::Reader::from_file(path);
    serial::expect_magic(r, "BRPC", "checkpoint " + path);
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw io_error(io_error::kind::bad_version,
                       "checkpoint " + path + ": unsupported version " + std::to_string(version));
    StageParams p;
    p.cfg.in_dim = r.u32();
    p.cfg.hidden = r.u32();
    p.cfg.layers = r.u32();
    p.cfg.n_classes = r.u32();
    p.cfg.head = static_cast<HeadKind>(r.u32());
    p.cfg.pool_variant = static_cast<PoolVariant>(r.u32());
    p.cfg.pool_rank = r.u32();
    p.cfg.pool_rows = r.u32();
    p.cfg.head_kernel = r.u32();
    p.cfg.dropout = r.f64();
    p.cfg.block_dropout = r.f64();
    if (r.u32()) p.stack = load_stack(r);
    if (r.u32()) {
        p.had_u = detail::read_mat_tensor(r, "had_u");
        p.had_v = detail::read_mat_tensor(r, "had_v");
    }
    p.w_in = detail::read_mat_tensor(r, "w_in");
    p.b_in = detail::read_vec_tensor(r, "b_in");
    for (std::size_t l = 0; l < p.cfg.layers; ++l) {
        const std::string base = "block" + std::to_string(l);
        ResidualBlock blk;
        for (std::size_t k = 0; k < 3; ++k)
            blk.w[k] = detail::read_mat_tensor(r, base + ".w" + std::to_string(k));
        blk.b = detail::read_vec_tensor(r, base + ".b");
        blk.wp = detail::read_mat_tensor(r, base + ".wp");
        blk.bp = detail::read_vec_tensor(r, base + ".bp");
        p.blocks.push_back(std::move(blk));
    }
    const std::size_t taps = (p.cfg.head == HeadKind::Conv1x1) ? 1 : p.cfg.head_kernel;
    for (std::size_t k = 0; k < taps; ++k)
        p.w_head.push_back(detail::read_mat_tensor(r, "head.w" + std::to_string(k)));
    p.b_head = detail::read_vec_tensor(r, "head.b");
    if (!r.exhausted())
        throw io_error(io_error::kind::malformed, "checkpoint " + path + ": trailing bytes");
    return p;
}

} // namespace brp
