#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ssvtcn/data.hpp"
#include "ssvtcn/detector.hpp"
#include "ssvtcn/eval.hpp"
#include "ssvtcn/model.hpp"

namespace ssvtcn {

enum class Mode { ss_vtcn, ss_wvtcn, supervised };

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::ss_vtcn: return "ss-vtcn";
        case Mode::ss_wvtcn: return "ss-wvtcn";
        case Mode::supervised: return "supervised";
    }
    return "?";
}

inline Mode mode_from_name(const std::string& name) {
    if (name == "ss-vtcn") {
        return Mode::ss_vtcn;
    }
    if (name == "ss-wvtcn") {
        return Mode::ss_wvtcn;
    }
    if (name == "supervised" || name == "supervised-vtcn") {
        return Mode::supervised;
    }
    throw config_error("unknown mode '" + name + "' (ss-vtcn, ss-wvtcn, supervised)");
}

struct PipelineOptions {
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
    double quantile = 0.05;
    Mode mode = Mode::ss_vtcn;
};

struct TrainArtifacts {
    Model model;
    ClassIntervals intervals;
    Encoder encoder;
    TrainHistory history;
};

// Windowed view of the training span: windows are built over the whole span
// so unlabeled records keep their (earlier, labeled-era) history, then
// partitioned by the record's own split membership.
struct PreparedCorpus {
    Encoder encoder;
    LabeledWindows labeled;
    std::vector<Mat> unlabeled_windows;
    std::vector<int> unlabeled_truth;
    std::vector<EncodedRecord> test;
    std::vector<int> test_truth;  // -1 where the corpus had no label
};

inline PreparedCorpus prepare_corpus(const std::vector<RawRecord>& records,
                                     const SplitSpec& split_spec, std::size_t window) {
    SplitResult split = chronological_split(records, split_spec);
    if (split.labeled.empty()) {
        throw data_error("pipeline: labeled split is empty; lower train/labeled fractions");
    }
    std::vector<RawRecord> train_raws;
    train_raws.reserve(split.labeled.size() + split.unlabeled.size());
    train_raws.insert(train_raws.end(), split.labeled.begin(), split.labeled.end());
    train_raws.insert(train_raws.end(), split.unlabeled.begin(), split.unlabeled.end());

    PreparedCorpus out;
    out.encoder = Encoder::fit(train_raws);
    const std::vector<EncodedRecord> encoded_train = out.encoder.encode_all(train_raws);
    std::vector<Mat> windows = make_windows(encoded_train, window);

    const std::size_t n_labeled = split.labeled.size();
    out.labeled.windows.assign(windows.begin(),
                               windows.begin() + static_cast<std::ptrdiff_t>(n_labeled));
    out.labeled.labels.reserve(n_labeled);
    for (const auto& rec : split.labeled) {
        if (!rec.label) {
            throw data_error("pipeline: record in the labeled split carries no label");
        }
        out.labeled.labels.push_back(*rec.label);
    }
    out.unlabeled_windows.assign(windows.begin() + static_cast<std::ptrdiff_t>(n_labeled),
                                 windows.end());
    out.unlabeled_truth = std::move(split.unlabeled_truth);
    out.test = out.encoder.encode_all(split.test);
    out.test_truth.reserve(split.test.size());
    for (const auto& rec : split.test) {
        out.test_truth.push_back(rec.label.value_or(-1));
    }
    return out;
}

inline TrainArtifacts train_pipeline(const std::vector<RawRecord>& records,
                                     const PipelineOptions& opts) {
    PreparedCorpus corpus = prepare_corpus(records, opts.split, opts.model.window);
    const bool semi = opts.mode != Mode::supervised;
    const std::vector<Mat> no_windows;
    FitResult fitted = fit(opts.model, corpus.labeled,
                           semi ? corpus.unlabeled_windows : no_windows, opts.train);
    ClassIntervals intervals =
        calibrate(fitted.model, corpus.labeled.windows, corpus.labeled.labels, opts.quantile);
    return {std::move(fitted.model), std::move(intervals), std::move(corpus.encoder),
            std::move(fitted.history)};
}

struct GridOptions {
    std::vector<double> ratios = {0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<Mode> modes = {Mode::ss_vtcn, Mode::ss_wvtcn, Mode::supervised};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct GridCell {
    double ratio = 0.0;
    Mode mode = Mode::ss_vtcn;
    std::uint64_t seed = 0;
    bool ok = false;
    Report report;
    std::string error;
};

struct GridAggregate {
    double ratio = 0.0;
    Mode mode = Mode::ss_vtcn;
    std::vector<double> mean_class_f1;
    double mean_avg_f1 = 0.0;
    std::size_t cells = 0;
};

struct GridReport {
    std::vector<GridCell> cells;
    std::vector<GridAggregate> aggregates;  // mean over seeds, keyed (ratio, mode)
};

namespace detail {

inline Report score_stream(const std::vector<DetectionResult>& results,
                           const std::vector<int>& truth, std::size_t classes,
                           bool use_rectified) {
    std::vector<int> predicted;
    predicted.reserve(results.size());
    for (const auto& r : results) {
        predicted.push_back(use_rectified ? r.final_class : r.preliminary);
    }
    for (int t : truth) {
        if (t < 0) {
            throw data_error("grid: test corpus is missing ground-truth labels");
        }
    }
    return report_from(truth, predicted, classes);
}

}  // namespace detail

// Full labeled-ratio experiment. Each (ratio, seed) pair shares one split and
// one encoder across modes; the no-rectification variant is scored from the
// same detection results as the full model, so that comparison is exact.
inline GridReport run_grid(const std::vector<RawRecord>& records, const PipelineOptions& base,
                           const GridOptions& grid) {
    GridReport out;
    const std::size_t classes = base.model.tcn.classes;
    const bool want_ss =
        std::find(grid.modes.begin(), grid.modes.end(), Mode::ss_vtcn) != grid.modes.end();
    const bool want_wv =
        std::find(grid.modes.begin(), grid.modes.end(), Mode::ss_wvtcn) != grid.modes.end();
    const bool want_sup =
        std::find(grid.modes.begin(), grid.modes.end(), Mode::supervised) != grid.modes.end();

    for (double ratio : grid.ratios) {
        for (std::uint64_t seed : grid.seeds) {
            SplitSpec split = base.split;
            split.labeled_fraction = ratio;
            TrainConfig tc = base.train;
            tc.seed = seed;

            auto push_cell = [&](Mode mode, const GridCell& cell) {
                out.cells.push_back(cell);
                (void)mode;
            };
            auto fail_cell = [&](Mode mode, const std::string& why) {
                GridCell cell;
                cell.ratio = ratio;
                cell.mode = mode;
                cell.seed = seed;
                cell.error = why;
                out.cells.push_back(cell);
            };

            PreparedCorpus corpus;
            try {
                corpus = prepare_corpus(records, split, base.model.window);
            } catch (const std::exception& e) {
                for (Mode m : grid.modes) {
                    fail_cell(m, e.what());
                }
                continue;
            }

            if (want_ss || want_wv) {
                try {
                    FitResult fitted = fit(base.model, corpus.labeled, corpus.unlabeled_windows, tc);
                    ClassIntervals intervals = calibrate(fitted.model, corpus.labeled.windows,
                                                         corpus.labeled.labels, base.quantile);
                    const auto results = detect_stream(fitted.model, intervals, corpus.test);
                    if (want_ss) {
                        GridCell cell{ratio, Mode::ss_vtcn, seed, true,
                                      detail::score_stream(results, corpus.test_truth, classes,
                                                           true),
                                      ""};
                        push_cell(Mode::ss_vtcn, cell);
                    }
                    if (want_wv) {
                        GridCell cell{ratio, Mode::ss_wvtcn, seed, true,
                                      detail::score_stream(results, corpus.test_truth, classes,
                                                           false),
                                      ""};
                        push_cell(Mode::ss_wvtcn, cell);
                    }
                } catch (const std::exception& e) {
                    if (want_ss) {
                        fail_cell(Mode::ss_vtcn, e.what());
                    }
                    if (want_wv) {
                        fail_cell(Mode::ss_wvtcn, e.what());
                    }
                }
            }
            if (want_sup) {
                try {
                    FitResult fitted = fit(base.model, corpus.labeled, {}, tc);
                    ClassIntervals intervals = calibrate(fitted.model, corpus.labeled.windows,
                                                         corpus.labeled.labels, base.quantile);
                    const auto results = detect_stream(fitted.model, intervals, corpus.test);
                    GridCell cell{ratio, Mode::supervised, seed, true,
                                  detail::score_stream(results, corpus.test_truth, classes, true),
                                  ""};
                    push_cell(Mode::supervised, cell);
                } catch (const std::exception& e) {
                    fail_cell(Mode::supervised, e.what());
                }
            }
        }
    }

    for (double ratio : grid.ratios) {
        for (Mode mode : grid.modes) {
            GridAggregate agg;
            agg.ratio = ratio;
            agg.mode = mode;
            agg.mean_class_f1.assign(classes, 0.0);
            for (const auto& cell : out.cells) {
                if (cell.ratio != ratio || cell.mode != mode || !cell.ok) {
                    continue;
                }
                ++agg.cells;
                agg.mean_avg_f1 += cell.report.avg;
                for (std::size_t c = 0; c < classes; ++c) {
                    agg.mean_class_f1[c] += cell.report.per_class[c].f1;
                }
            }
            if (agg.cells > 0) {
                agg.mean_avg_f1 /= static_cast<double>(agg.cells);
                for (double& v : agg.mean_class_f1) {
                    v /= static_cast<double>(agg.cells);
                }
            }
            out.aggregates.push_back(std::move(agg));
        }
    }
    return out;
}

}  // namespace ssvtcn
