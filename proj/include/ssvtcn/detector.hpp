#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "ssvtcn/data.hpp"
#include "ssvtcn/model.hpp"

namespace ssvtcn {

// Summed log-likelihood of the embedding and the raw record under the
// decoder's two heads; low values mean the record reconstructs poorly.
struct ReconScore {
    double p_v = 0.0;
};

namespace detail {

inline double gaussian_log_likelihood_values(const std::vector<double>& target,
                                             const std::vector<double>& recon, double sigma) {
    if (target.size() != recon.size()) {
        throw shape_error("recon score: target/reconstruction sizes disagree");
    }
    const double dim = static_cast<double>(target.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = target[i] - recon[i];
        sq += d * d;
    }
    return -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma * sigma) -
           sq / (2.0 * sigma * sigma);
}

}  // namespace detail

inline ReconScore recon_probability(const ModelOutput& output, const std::vector<double>& raw,
                                    double sigma) {
    const double emb = detail::gaussian_log_likelihood_values(
        output.embedding->values, output.recon_embedding->values, sigma);
    const double rec =
        detail::gaussian_log_likelihood_values(raw, output.recon_raw->values, sigma);
    return {emb + rec};
}

struct ClassInterval {
    bool calibrated = false;
    bool sparse = false;  // fewer than 5 labeled records
    double lo = 0.0;
    double hi = 0.0;
    double center = 0.0;
    std::size_t count = 0;
};

struct ClassIntervals {
    std::vector<ClassInterval> per_class;
    double normal_threshold = 0.0;
    double quantile = 0.05;
};

namespace detail {

// Linear-interpolation quantile on a sorted sample (position q*(n-1)).
inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - std::floor(pos);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

// Deterministic score for one window: the latent sample is fixed at the
// posterior mean (zero noise), so repeated calls agree bitwise.
inline ReconScore score_window(const Model& model, const Mat& window) {
    NoGradGuard guard;
    const std::vector<double> zero_noise(model.config().latent_dim, 0.0);
    ModelOutput out = model.forward(window, zero_noise);
    return recon_probability(out, window.row_values(window.rows - 1),
                             model.config().sigma);
}

// Per-class score ranges from the labeled training records: lo/hi are the
// q and 1-q quantiles, the center is the median, and the global anomaly
// threshold is the normal class's low quantile.
inline ClassIntervals calibrate(const Model& model, const std::vector<Mat>& windows,
                                const std::vector<int>& labels, double q = 0.05) {
    if (windows.size() != labels.size()) {
        throw shape_error("calibrate: window/label counts disagree");
    }
    if (!(q > 0.0) || q >= 0.5) {
        throw config_error("calibrate: quantile must lie in (0, 0.5)");
    }
    const std::size_t classes = model.classes();
    std::vector<std::vector<double>> scores(classes);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw data_error("calibrate: label out of range at index " + std::to_string(i));
        }
        scores[static_cast<std::size_t>(label)].push_back(score_window(model, windows[i]).p_v);
    }
    if (scores[0].empty()) {
        throw data_error("calibrate: no records of the normal class in the labeled set");
    }
    ClassIntervals out;
    out.quantile = q;
    out.per_class.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        auto& sample = scores[c];
        if (sample.empty()) {
            continue;
        }
        std::sort(sample.begin(), sample.end());
        ClassInterval& iv = out.per_class[c];
        iv.calibrated = true;
        iv.sparse = sample.size() < 5;
        iv.count = sample.size();
        iv.lo = detail::interpolated_quantile(sample, q);
        iv.hi = detail::interpolated_quantile(sample, 1.0 - q);
        iv.center = detail::interpolated_quantile(sample, 0.5);
    }
    out.normal_threshold = out.per_class[0].lo;
    return out;
}

// Score-implied class: at or above the anomaly threshold the record is
// normal; below it, the anomaly class whose interval contains the score, or
// failing a unique hit, the calibrated anomaly class with the nearest
// center (ties to the lowest index). With no calibrated anomaly class the
// score cannot point anywhere and the record stays normal.
inline int classify_by_pv(double p_v, const ClassIntervals& intervals) {
    if (p_v >= intervals.normal_threshold) {
        return 0;
    }
    int contained = -1;
    int contained_count = 0;
    for (std::size_t c = 1; c < intervals.per_class.size(); ++c) {
        const ClassInterval& iv = intervals.per_class[c];
        if (iv.calibrated && p_v >= iv.lo && p_v <= iv.hi) {
            if (contained_count == 0) {
                contained = static_cast<int>(c);
            }
            ++contained_count;
        }
    }
    if (contained_count == 1) {
        return contained;
    }
    int best = -1;
    double best_dist = 0.0;
    for (std::size_t c = 1; c < intervals.per_class.size(); ++c) {
        const ClassInterval& iv = intervals.per_class[c];
        if (!iv.calibrated) {
            continue;
        }
        const double dist = std::fabs(p_v - iv.center);
        if (best < 0 || dist < best_dist) {
            best = static_cast<int>(c);
            best_dist = dist;
        }
    }
    return best < 0 ? 0 : best;
}

struct Rectified {
    int final_class = 0;
    bool rectified = false;
};

// Fusing table for (classifier class, score class): agreement and
// abnormal/abnormal disagreement keep the classifier's verdict; a normal
// classifier verdict with an abnormal score adopts the score's class; an
// abnormal classifier verdict with a normal score is pulled back to normal.
inline Rectified rectify(int preliminary, int pv_class) {
    if (preliminary < 0 || pv_class < 0) {
        throw error("rectify: class indices must be non-negative");
    }
    if (preliminary == 0 && pv_class == 0) {
        return {0, false};
    }
    if (preliminary == 0 && pv_class != 0) {
        return {pv_class, true};
    }
    if (pv_class == 0) {
        return {0, true};
    }
    return {preliminary, false};  // both abnormal, same or different
}

struct DetectionResult {
    int preliminary = 0;
    double p_v = 0.0;
    int pv_class = 0;
    int final_class = 0;
    bool rectified = false;
};

inline DetectionResult detect_one(const Model& model, const ClassIntervals& intervals,
                                  const Mat& window) {
    NoGradGuard guard;
    const std::vector<double> zero_noise(model.config().latent_dim, 0.0);
    ModelOutput out = model.forward(window, zero_noise);
    DetectionResult r;
    r.preliminary = static_cast<int>(argmax(out.probs->values));
    r.p_v = recon_probability(out, window.row_values(window.rows - 1),
                              model.config().sigma)
                .p_v;
    r.pv_class = classify_by_pv(r.p_v, intervals);
    const Rectified f = rectify(r.preliminary, r.pv_class);
    r.final_class = f.final_class;
    r.rectified = f.rectified;
    return r;
}

// Left-to-right pass over a chronological stream: the window for record t
// holds records [t-W+1, t] (zero rows before the stream starts), so later
// records never change earlier verdicts.
inline std::vector<DetectionResult> detect_stream(const Model& model,
                                                  const ClassIntervals& intervals,
                                                  const std::vector<EncodedRecord>& records) {
    const std::size_t window = model.config().window;
    const std::size_t width = model.config().tcn.input_dim;
    std::vector<DetectionResult> out;
    out.reserve(records.size());
    Mat buf(window, width);
    for (std::size_t t = 0; t < records.size(); ++t) {
        if (t > 0 && records[t].timestamp < records[t - 1].timestamp) {
            throw data_error("detect_stream: record " + std::to_string(t) +
                             " is earlier than its predecessor");
        }
        if (records[t].features.size() != width) {
            throw shape_error("detect_stream: record " + std::to_string(t) + " has " +
                              std::to_string(records[t].features.size()) +
                              " features, model expects " + std::to_string(width));
        }
        std::copy(buf.data.begin() + static_cast<std::ptrdiff_t>(width), buf.data.end(),
                  buf.data.begin());
        std::copy(records[t].features.begin(), records[t].features.end(),
                  buf.data.end() - static_cast<std::ptrdiff_t>(width));
        out.push_back(detect_one(model, intervals, buf));
    }
    return out;
}

}  // namespace ssvtcn
