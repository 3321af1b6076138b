#pragma once

#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssvtcn/checkpoint.hpp"
#include "ssvtcn/pipeline.hpp"
#include "ssvtcn/serialize.hpp"

namespace ssvtcn {

struct AppConfig {
    std::string csv_path;
    CsvSchema schema = default_schema(11);
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
    double quantile = 0.05;
    Mode mode = Mode::ss_vtcn;
    SynthConfig synth;
    GridOptions grid;

    // Keeps the derived dimensions coherent with the schema.
    void finalize() {
        model.tcn.input_dim = schema.feature_columns.size();
        model.tcn.classes = schema.class_names.size();
        split.classes = schema.class_names.size();
        synth.features = schema.feature_columns.size();
        if (model.tcn.classes < 2) {
            throw config_error("config: at least two classes required");
        }
    }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::string& where,
                                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            throw config_error("config: unknown key '" + where + key + "'");
        }
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

}  // namespace detail

// Strict config parse: every key must be recognized, so typos fail loudly.
inline AppConfig parse_config(const json& j) {
    AppConfig cfg;
    detail::reject_unknown_keys(
        j, "", {"data", "model", "train", "split", "detector", "synth", "grid", "mode"});

    if (j.contains("data")) {
        const json& d = j.at("data");
        detail::reject_unknown_keys(d, "data.",
                                    {"csv", "timestamp_column", "feature_columns",
                                     "label_column", "classes"});
        detail::maybe(d, "csv", cfg.csv_path);
        detail::maybe(d, "timestamp_column", cfg.schema.timestamp_column);
        detail::maybe(d, "feature_columns", cfg.schema.feature_columns);
        detail::maybe(d, "label_column", cfg.schema.label_column);
        detail::maybe(d, "classes", cfg.schema.class_names);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        detail::reject_unknown_keys(
            m, "model.", {"levels", "channels", "kernel", "latent", "sigma", "window"});
        detail::maybe(m, "levels", cfg.model.tcn.levels);
        detail::maybe(m, "channels", cfg.model.tcn.channels);
        detail::maybe(m, "kernel", cfg.model.tcn.kernel);
        detail::maybe(m, "latent", cfg.model.latent_dim);
        detail::maybe(m, "sigma", cfg.model.sigma);
        detail::maybe(m, "window", cfg.model.window);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        detail::reject_unknown_keys(t, "train.", {"lr", "epochs", "batch", "seed"});
        detail::maybe(t, "lr", cfg.train.lr);
        detail::maybe(t, "epochs", cfg.train.epochs);
        detail::maybe(t, "batch", cfg.train.batch_size);
        detail::maybe(t, "seed", cfg.train.seed);
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        detail::reject_unknown_keys(s, "split.", {"train_fraction", "labeled_fraction"});
        detail::maybe(s, "train_fraction", cfg.split.train_fraction);
        detail::maybe(s, "labeled_fraction", cfg.split.labeled_fraction);
    }
    if (j.contains("detector")) {
        const json& d = j.at("detector");
        detail::reject_unknown_keys(d, "detector.", {"quantile"});
        detail::maybe(d, "quantile", cfg.quantile);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        detail::reject_unknown_keys(s, "synth.", {"records", "priors", "seed"});
        detail::maybe(s, "records", cfg.synth.records);
        if (s.contains("priors")) {
            const auto priors = s.at("priors").get<std::vector<double>>();
            if (priors.size() != 4) {
                throw config_error("config: synth.priors must list 4 values");
            }
            std::copy(priors.begin(), priors.end(), cfg.synth.priors.begin());
        }
        detail::maybe(s, "seed", cfg.synth.seed);
    }
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        detail::reject_unknown_keys(g, "grid.", {"ratios", "modes", "seeds"});
        detail::maybe(g, "ratios", cfg.grid.ratios);
        detail::maybe(g, "seeds", cfg.grid.seeds);
        if (g.contains("modes")) {
            cfg.grid.modes.clear();
            for (const auto& name : g.at("modes")) {
                cfg.grid.modes.push_back(mode_from_name(name.get<std::string>()));
            }
        }
    }
    if (j.contains("mode")) {
        cfg.mode = mode_from_name(j.at("mode").get<std::string>());
    }
    cfg.finalize();
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    if (path.empty()) {
        AppConfig cfg;
        cfg.finalize();
        return cfg;
    }
    try {
        return parse_config(read_json_file(path));
    } catch (const json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    } catch (const data_error& e) {
        throw config_error(e.what());
    }
}

inline PipelineOptions pipeline_options(const AppConfig& cfg) {
    return {cfg.model, cfg.train, cfg.split, cfg.quantile, cfg.mode};
}

// ---- subcommands -----------------------------------------------------------

inline void cmd_synth(const AppConfig& cfg, const std::string& out_path, std::ostream& info) {
    const auto records = synth_generate(cfg.synth);
    if (out_path.empty() || out_path == "-") {
        write_csv(std::cout, records, cfg.schema);
    } else {
        write_csv(out_path, records, cfg.schema);
    }
    std::vector<std::size_t> counts(cfg.schema.classes(), 0);
    for (const auto& rec : records) {
        ++counts[static_cast<std::size_t>(*rec.label)];
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        info << cfg.schema.class_names[c] << ": " << counts[c] << '\n';
    }
}

struct TrainPaths {
    std::string checkpoint;
    std::string intervals;
    std::string history;
};

inline TrainPaths train_paths(const std::string& prefix) {
    return {prefix + ".ckpt", prefix + ".intervals.json", prefix + ".history.jsonl"};
}

inline void cmd_train(const AppConfig& cfg, const std::string& out_prefix, std::ostream& info) {
    if (cfg.csv_path.empty()) {
        throw config_error("train: no input CSV configured (data.csv)");
    }
    const LoadResult loaded = load_csv(cfg.csv_path, cfg.schema);
    if (!loaded.rejects.empty()) {
        std::cerr << "ssvtcn: rejected " << loaded.rejects.size() << " malformed rows\n";
        for (const auto& r : loaded.rejects) {
            std::cerr << "  line " << r.line << ": " << r.reason << '\n';
        }
    }
    const TrainPaths paths = train_paths(out_prefix);
    std::ofstream history(paths.history, std::ios::trunc);
    if (!history) {
        throw error("cannot open history file for writing: " + paths.history);
    }

    PipelineOptions opts = pipeline_options(cfg);
    PreparedCorpus corpus = prepare_corpus(loaded.records, opts.split, opts.model.window);
    const bool semi = opts.mode != Mode::supervised;
    const std::vector<Mat> no_windows;
    FitResult fitted = fit(opts.model, corpus.labeled,
                           semi ? corpus.unlabeled_windows : no_windows, opts.train,
                           [&](const EpochStats& e) {
                               const std::string line = to_json(e).dump();
                               history << line << '\n';
                               info << line << '\n';
                           });
    ClassIntervals intervals =
        calibrate(fitted.model, corpus.labeled.windows, corpus.labeled.labels, opts.quantile);
    for (std::size_t c = 0; c < intervals.per_class.size(); ++c) {
        if (intervals.per_class[c].calibrated && intervals.per_class[c].sparse) {
            std::cerr << "ssvtcn: class " << c << " calibrated from only "
                      << intervals.per_class[c].count << " labeled records\n";
        }
    }
    write_checkpoint_file(fitted.model, paths.checkpoint);
    write_json_file(to_intervals_file(intervals, corpus.encoder), paths.intervals);
}

inline void cmd_detect(const AppConfig& cfg, const std::string& checkpoint_path,
                       const std::string& intervals_path, const std::string& input_path,
                       const std::string& out_path) {
    Model model = read_checkpoint_file(checkpoint_path);
    require_compatible(model, cfg.model);
    auto [intervals, encoder] = from_intervals_file(read_json_file(intervals_path));
    const LoadResult loaded = load_csv(input_path, cfg.schema, /*label_optional=*/true);
    if (!loaded.rejects.empty()) {
        std::cerr << "ssvtcn: rejected " << loaded.rejects.size() << " malformed rows\n";
    }
    const std::vector<EncodedRecord> encoded = encoder.encode_all(loaded.records);
    std::vector<DetectionResult> results = detect_stream(model, intervals, encoded);
    if (cfg.mode == Mode::ss_wvtcn) {
        for (auto& r : results) {
            r.final_class = r.preliminary;
            r.rectified = false;
        }
    }
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!out_path.empty() && out_path != "-") {
        file.open(out_path, std::ios::trunc);
        if (!file) {
            throw error("cannot open detection log for writing: " + out_path);
        }
        out = &file;
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        *out << to_json(results[i], i, loaded.records[i].timestamp).dump() << '\n';
    }
}

struct DetectionLog {
    std::vector<DetectionResult> results;
    std::vector<double> timestamps;
};

inline DetectionLog read_detection_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open detection log: " + path);
    }
    DetectionLog log;
    std::string line;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw data_error("detection log: invalid JSON line " + std::to_string(expected + 1));
        }
        if (j.at("index").get<std::size_t>() != expected) {
            throw data_error("detection log: expected index " + std::to_string(expected) +
                             ", found " + std::to_string(j.at("index").get<std::size_t>()));
        }
        DetectionResult r;
        r.preliminary = j.at("preliminary").get<int>();
        r.p_v = j.at("p_v").get<double>();
        r.pv_class = j.at("pv_class").get<int>();
        r.final_class = j.at("final").get<int>();
        r.rectified = j.at("rectified").get<bool>();
        log.results.push_back(r);
        log.timestamps.push_back(j.at("timestamp").get<double>());
        ++expected;
    }
    return log;
}

inline std::string report_table(const Report& rep, const std::vector<std::string>& class_names) {
    std::ostringstream out;
    out << "class        precision   recall       f1\n";
    char buf[128];
    for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
        const auto& m = rep.per_class[c];
        std::snprintf(buf, sizeof(buf), "%-12s   %7.2f  %7.2f  %7.2f\n",
                      class_names[c].c_str(), 100.0 * m.precision, 100.0 * m.recall,
                      100.0 * m.f1);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-12s   %7s  %7s  %7.2f\n", "avg", "", "",
                  100.0 * rep.avg);
    out << buf;
    return out.str();
}

inline Report cmd_eval(const AppConfig& cfg, const std::string& log_path,
                       const std::string& truth_path, const std::string& out_path,
                       std::ostream& info) {
    const DetectionLog log = read_detection_log(log_path);
    const LoadResult truth = load_csv(truth_path, cfg.schema);
    if (truth.records.size() != log.results.size()) {
        throw data_error("eval: log has " + std::to_string(log.results.size()) +
                         " results but truth has " + std::to_string(truth.records.size()) +
                         " records");
    }
    std::vector<int> truths;
    std::vector<int> predicted;
    truths.reserve(truth.records.size());
    for (std::size_t i = 0; i < truth.records.size(); ++i) {
        if (!truth.records[i].label) {
            throw data_error("eval: truth record " + std::to_string(i) + " carries no label");
        }
        truths.push_back(*truth.records[i].label);
        predicted.push_back(log.results[i].final_class);
    }
    const Report rep = report_from(truths, predicted, cfg.schema.classes());
    info << report_table(rep, cfg.schema.class_names);
    if (!out_path.empty()) {
        write_json_file(to_json(rep), out_path);
    }
    return rep;
}

inline std::string grid_table(const GridReport& grid, const std::vector<std::string>& class_names,
                              const std::vector<Mode>& modes) {
    std::ostringstream out;
    out << "ratio  class       ";
    for (Mode m : modes) {
        char head[32];
        std::snprintf(head, sizeof(head), "  %10s", mode_name(m).c_str());
        out << head;
    }
    out << '\n';
    std::vector<double> ratios;
    for (const auto& agg : grid.aggregates) {
        if (std::find(ratios.begin(), ratios.end(), agg.ratio) == ratios.end()) {
            ratios.push_back(agg.ratio);
        }
    }
    auto find_agg = [&](double ratio, Mode mode) -> const GridAggregate* {
        for (const auto& agg : grid.aggregates) {
            if (agg.ratio == ratio && agg.mode == mode) {
                return &agg;
            }
        }
        return nullptr;
    };
    char buf[64];
    for (double ratio : ratios) {
        for (std::size_t c = 0; c <= class_names.size(); ++c) {
            const bool avg_row = c == class_names.size();
            std::snprintf(buf, sizeof(buf), "%4.0f%%  %-10s", 100.0 * ratio,
                          avg_row ? "avg" : class_names[c].c_str());
            out << buf;
            for (Mode m : modes) {
                const GridAggregate* agg = find_agg(ratio, m);
                if (agg == nullptr || agg->cells == 0) {
                    std::snprintf(buf, sizeof(buf), "  %10s", "-");
                } else {
                    const double v = avg_row ? agg->mean_avg_f1 : agg->mean_class_f1[c];
                    std::snprintf(buf, sizeof(buf), "  %10.2f", 100.0 * v);
                }
                out << buf;
            }
            out << '\n';
        }
    }
    return out.str();
}

inline GridReport cmd_grid(const AppConfig& cfg, const std::string& out_path,
                           std::ostream& info) {
    if (cfg.csv_path.empty()) {
        throw config_error("grid: no input CSV configured (data.csv)");
    }
    const LoadResult loaded = load_csv(cfg.csv_path, cfg.schema);
    const GridReport grid = run_grid(loaded.records, pipeline_options(cfg), cfg.grid);
    info << grid_table(grid, cfg.schema.class_names, cfg.grid.modes);
    for (const auto& cell : grid.cells) {
        if (!cell.ok) {
            std::cerr << "ssvtcn: grid cell (ratio " << cell.ratio << ", " << mode_name(cell.mode)
                      << ", seed " << cell.seed << ") failed: " << cell.error << '\n';
        }
    }
    if (!out_path.empty()) {
        write_json_file(to_json(grid), out_path);
    }
    return grid;
}

}  // namespace ssvtcn
