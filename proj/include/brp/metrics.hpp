#pragma once

#include "brp/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace brp {

// =============================================================================
// SegmentLabeling — frame labels plus their maximal-run decomposition
// =============================================================================

struct Segment {
    int label = 0;
    std::size_t begin = 0; // inclusive
    std::size_t end = 0;   // exclusive
};

struct SegmentLabeling {
    std::vector<int> frames;
    std::vector<Segment> segments;
};

inline SegmentLabeling segments_from_frames(std::span<const int> frames) {
    if (frames.empty()) throw config_error("segments_from_frames: empty frame sequence");
    SegmentLabeling out;
    out.frames.assign(frames.begin(), frames.end());
    std::size_t start = 0;
    for (std::size_t t = 1; t <= frames.size(); ++t) {
        if (t == frames.size() || frames[t] != frames[start]) {
            out.segments.push_back({frames[start], start, t});
            start = t;
        }
    }
    return out;
}

namespace detail {

inline void check_lengths(const SegmentLabeling& pred, const SegmentLabeling& gt) {
    if (pred.frames.size() != gt.frames.size())
        throw dim_error("metrics: prediction has " + std::to_string(pred.frames.size()) +
                        " frames, ground truth has " + std::to_string(gt.frames.size()));
}

} // namespace detail

// =============================================================================
// Frame-wise accuracy, percentage in [0, 100]
// =============================================================================

inline double frame_accuracy(const SegmentLabeling& pred, const SegmentLabeling& gt) {
    detail::check_lengths(pred, gt);
    std::size_t correct = 0;
    for (std::size_t t = 0; t < gt.frames.size(); ++t)
        if (pred.frames[t] == gt.frames[t]) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(gt.frames.size());
}

// =============================================================================
// Segmental edit score: 100·(1 − Levenshtein / max(#segments)), clamped at 0
// =============================================================================

inline std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::vector<int> segment_labels(const SegmentLabeling& s) {
    std::vector<int> out;
    out.reserve(s.segments.size());
    for (const Segment& seg : s.segments) out.push_back(seg.label);
    return out;
}

inline double edit_score(const SegmentLabeling& pred, const SegmentLabeling& gt) {
    detail::check_lengths(pred, gt);
    const std::vector<int> a = segment_labels(pred);
    const std::vector<int> b = segment_labels(gt);
    const double dist = static_cast<double>(levenshtein(a, b));
    const double denom = static_cast<double>(std::max(a.size(), b.size()));
    return std::max(0.0, 100.0 * (1.0 - dist / denom));
}

// =============================================================================
// Segment-level F1 at an IoU threshold
//
// Greedy one-to-one matching in prediction order: a predicted segment is a
// true positive when some not-yet-matched ground-truth segment of the same
// class reaches frame IoU ≥ tau; among candidates the highest IoU wins,
// earlier ground-truth segment on exact ties.
// =============================================================================

struct F1Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

struct PrecisionRecallF1 {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

inline double segment_iou(const Segment& a, const Segment& b) {
    const std::size_t inter_begin = std::max(a.begin, b.begin);
    const std::size_t inter_end = std::min(a.end, b.end);
    const double inter =
        inter_end > inter_begin ? static_cast<double>(inter_end - inter_begin) : 0.0;
    const double uni = static_cast<double>(std::max(a.end, b.end) - std::min(a.begin, b.begin));
    return inter / uni;
}

inline F1Counts f1_counts(const SegmentLabeling& pred, const SegmentLabeling& gt, double tau) {
    detail::check_lengths(pred, gt);
    if (!(tau > 0.0 && tau < 1.0)) throw config_error("f1_counts: tau must be in (0,1)");
    std::vector<bool> matched(gt.segments.size(), false);
    F1Counts c;
    for (const Segment& p : pred.segments) {
        double best_iou = -1.0;
        std::size_t best = gt.segments.size();
        for (std::size_t g = 0; g < gt.segments.size(); ++g) {
            if (matched[g] || gt.segments[g].label != p.label) continue;
            const double iou = segment_iou(p, gt.segments[g]);
            if (iou >= tau && iou > best_iou) {
                best_iou = iou;
                best = g;
            }
        }
        if (best < gt.segments.size()) {
            matched[best] = true;
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    for (bool m : matched)
        if (!m) ++c.fn;
    return c;
}

inline PrecisionRecallF1 f1_from_counts(const F1Counts& c) {
    PrecisionRecallF1 out;
    const double tp = static_cast<double>(c.tp);
    out.precision = (c.tp + c.fp) ? 100.0 * tp / static_cast<double>(c.tp + c.fp) : 0.0;
    out.recall = (c.tp + c.fn) ? 100.0 * tp / static_cast<double>(c.tp + c.fn) : 0.0;
    out.f1 = (out.precision + out.recall > 0.0)
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

inline PrecisionRecallF1 f1_at_iou(const SegmentLabeling& pred, const SegmentLabeling& gt,
                                   double tau) {
    return f1_from_counts(f1_counts(pred, gt, tau));
}

// =============================================================================
// Split-level report matching the standard evaluation protocol: accuracy
// over all frames, edit score averaged per sequence, F1 from counts pooled
// across sequences.
// =============================================================================

struct MetricsReport {
    double acc = 0.0;
    double edit = 0.0;
    double f1_10 = 0.0;
    double f1_25 = 0.0;
    double f1_50 = 0.0;
};

inline MetricsReport evaluate_split(const std::vector<SegmentLabeling>& preds,
                                    const std::vector<SegmentLabeling>& gts) {
    if (preds.size() != gts.size() || preds.empty())
        throw dim_error("evaluate_split: need matching non-empty prediction/gt lists");
    std::size_t correct = 0, total = 0;
    double edit_sum = 0.0;
    const double taus[3] = {0.1, 0.25, 0.5};
    F1Counts counts[3];
    for (std::size_t s = 0; s < preds.size(); ++s) {
        detail::check_lengths(preds[s], gts[s]);
        for (std::size_t t = 0; t < gts[s].frames.size(); ++t)
            if (preds[s].frames[t] == gts[s].frames[t]) ++correct;
        total += gts[s].frames.size();
        edit_sum += edit_score(preds[s], gts[s]);
        for (int k = 0; k < 3; ++k) {
            const F1Counts c = f1_counts(preds[s], gts[s], taus[k]);
            counts[k].tp += c.tp;
            counts[k].fp += c.fp;
            counts[k].fn += c.fn;
        }
    }
    MetricsReport r;
    r.acc = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    r.edit = edit_sum / static_cast<double>(preds.size());
    r.f1_10 = f1_from_counts(counts[0]).f1;
    r.f1_25 = f1_from_counts(counts[1]).f1;
    r.f1_50 = f1_from_counts(counts[2]).f1;
    return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    return nlohmann::json{
        {"acc", r.acc}, {"edit", r.edit}, {"f1_10", r.f1_10}, {"f1_25", r.f1_25},
        {"f1_50", r.f1_50}};
}

} // namespace brp
