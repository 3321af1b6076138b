#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssvtcn/data.hpp"
#include "ssvtcn/detector.hpp"
#include "ssvtcn/eval.hpp"
#include "ssvtcn/model.hpp"
#include "ssvtcn/pipeline.hpp"

namespace ssvtcn {

using json = nlohmann::json;

inline json to_json(const ClassIntervals& iv) {
    json classes = json::array();
    for (const auto& c : iv.per_class) {
        classes.push_back({{"calibrated", c.calibrated},
                           {"sparse", c.sparse},
                           {"lo", c.lo},
                           {"hi", c.hi},
                           {"center", c.center},
                           {"count", c.count}});
    }
    return {{"quantile", iv.quantile},
            {"normal_threshold", iv.normal_threshold},
            {"classes", classes}};
}

inline ClassIntervals intervals_from_json(const json& j) {
    ClassIntervals iv;
    iv.quantile = j.at("quantile").get<double>();
    iv.normal_threshold = j.at("normal_threshold").get<double>();
    for (const auto& c : j.at("classes")) {
        ClassInterval ci;
        ci.calibrated = c.at("calibrated").get<bool>();
        ci.sparse = c.at("sparse").get<bool>();
        ci.lo = c.at("lo").get<double>();
        ci.hi = c.at("hi").get<double>();
        ci.center = c.at("center").get<double>();
        ci.count = c.at("count").get<std::size_t>();
        iv.per_class.push_back(ci);
    }
    return iv;
}

inline json to_json(const Encoder& enc) {
    json cols = json::array();
    for (const auto& c : enc.columns()) {
        cols.push_back({{"categorical", c.categorical},
                        {"categories", c.categories},
                        {"mean", c.mean},
                        {"std", c.std_dev}});
    }
    return {{"columns", cols}};
}

inline Encoder encoder_from_json(const json& j) {
    Encoder enc;
    for (const auto& c : j.at("columns")) {
        Encoder::Column col;
        col.categorical = c.at("categorical").get<bool>();
        col.categories = c.at("categories").get<std::vector<std::string>>();
        col.mean = c.at("mean").get<double>();
        col.std_dev = c.at("std").get<double>();
        enc.mutable_columns().push_back(std::move(col));
    }
    enc.mark_fitted();
    return enc;
}

// Calibration artifact written next to the checkpoint: the score intervals
// plus the fitted feature encoder the stream must be replayed through.
inline json to_intervals_file(const ClassIntervals& iv, const Encoder& enc) {
    return {{"format_version", 1}, {"intervals", to_json(iv)}, {"encoder", to_json(enc)}};
}

inline std::pair<ClassIntervals, Encoder> from_intervals_file(const json& j) {
    if (j.at("format_version").get<int>() != 1) {
        throw checkpoint_version_error("intervals file: unsupported format version");
    }
    return {intervals_from_json(j.at("intervals")), encoder_from_json(j.at("encoder"))};
}

inline json to_json(const DetectionResult& r, std::size_t index, double timestamp) {
    return {{"index", index},        {"timestamp", timestamp}, {"preliminary", r.preliminary},
            {"p_v", r.p_v},          {"pv_class", r.pv_class}, {"final", r.final_class},
            {"rectified", r.rectified}};
}

inline json to_json(const EpochStats& e) {
    return {{"epoch", e.epoch},
            {"l_t", e.loss_t},
            {"l_v", e.loss_v},
            {"total", e.total},
            {"labeled_acc", e.labeled_accuracy},
            {"pseudo_changes", e.pseudo_changes}};
}

inline json to_json(const Report& rep) {
    json classes = json::array();
    for (const auto& m : rep.per_class) {
        classes.push_back({{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}});
    }
    return {{"per_class", classes}, {"avg_f1", rep.avg}};
}

inline Report report_from_json(const json& j) {
    Report rep;
    for (const auto& c : j.at("per_class")) {
        ClassMetrics m;
        m.precision = c.at("precision").get<double>();
        m.recall = c.at("recall").get<double>();
        m.f1 = c.at("f1").get<double>();
        rep.per_class.push_back(m);
    }
    rep.avg = j.at("avg_f1").get<double>();
    return rep;
}

inline json to_json(const GridReport& grid) {
    json cells = json::array();
    for (const auto& cell : grid.cells) {
        json c = {{"ratio", cell.ratio},
                  {"mode", mode_name(cell.mode)},
                  {"seed", cell.seed},
                  {"ok", cell.ok}};
        if (cell.ok) {
            c["report"] = to_json(cell.report);
        } else {
            c["error"] = cell.error;
        }
        cells.push_back(std::move(c));
    }
    json aggregates = json::array();
    for (const auto& agg : grid.aggregates) {
        aggregates.push_back({{"ratio", agg.ratio},
                              {"mode", mode_name(agg.mode)},
                              {"cells", agg.cells},
                              {"mean_class_f1", agg.mean_class_f1},
                              {"mean_avg_f1", agg.mean_avg_f1}});
    }
    return {{"cells", cells}, {"aggregates", aggregates}};
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw error("cannot open file for writing: " + path);
    }
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw error("cannot open file: " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw data_error("invalid JSON in " + path + ": " + e.what());
    }
}

}  // namespace ssvtcn
