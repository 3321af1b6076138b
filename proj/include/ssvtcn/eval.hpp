#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ssvtcn/errors.hpp"

namespace ssvtcn {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;  // classes * classes

    explicit ConfusionMatrix(std::size_t m = 0) : classes(m), counts(m * m, 0) {}

    std::size_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
    std::size_t at(std::size_t truth, std::size_t pred) const {
        return counts[truth * classes + pred];
    }

    std::size_t total() const {
        std::size_t n = 0;
        for (std::size_t v : counts) {
            n += v;
        }
        return n;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 std::size_t classes) {
    if (truth.size() != predicted.size()) {
        throw data_error("confusion: label vectors have different lengths");
    }
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes || predicted[i] < 0 ||
            static_cast<std::size_t>(predicted[i]) >= classes) {
            throw data_error("confusion: class out of range at index " + std::to_string(i));
        }
        ++cm.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
    }
    return cm;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// One-vs-rest precision/recall/F1; any zero denominator yields 0.
inline ClassMetrics precision_recall_f1(const ConfusionMatrix& cm, std::size_t c) {
    const double tp = static_cast<double>(cm.at(c, c));
    double fp = 0.0;
    double fn = 0.0;
    for (std::size_t k = 0; k < cm.classes; ++k) {
        if (k == c) {
            continue;
        }
        fp += static_cast<double>(cm.at(k, c));
        fn += static_cast<double>(cm.at(c, k));
    }
    ClassMetrics m;
    m.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    m.recall = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

// Unweighted mean of the per-class F1 values (macro-F1, the Avg column).
inline double avg_f1(const std::vector<double>& per_class_f1) {
    if (per_class_f1.empty()) {
        throw data_error("avg_f1: no per-class values");
    }
    double total = 0.0;
    for (double v : per_class_f1) {
        total += v;
    }
    return total / static_cast<double>(per_class_f1.size());
}

struct Report {
    std::vector<ClassMetrics> per_class;
    double avg = 0.0;
};

inline Report report_from(const std::vector<int>& truth, const std::vector<int>& predicted,
                          std::size_t classes) {
    const ConfusionMatrix cm = confusion(truth, predicted, classes);
    Report rep;
    std::vector<double> f1s;
    rep.per_class.reserve(classes);
    f1s.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        rep.per_class.push_back(precision_recall_f1(cm, c));
        f1s.push_back(rep.per_class.back().f1);
    }
    rep.avg = avg_f1(f1s);
    return rep;
}

}  // namespace ssvtcn
