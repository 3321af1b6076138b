#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssvtcn/errors.hpp"
#include "ssvtcn/mat.hpp"
#include "ssvtcn/rng.hpp"

namespace ssvtcn {

struct RawRecord {
    double timestamp = 0.0;
    std::vector<std::string> fields;
    std::optional<int> label;
};

struct EncodedRecord {
    double timestamp = 0.0;
    std::vector<double> features;
    std::optional<int> label;
};

struct CsvSchema {
    std::string timestamp_column = "timestamp";
    std::vector<std::string> feature_columns;
    std::string label_column = "label";  // empty: file carries no labels
    std::vector<std::string> class_names = {"normal", "dos", "malicious", "spying"};

    std::size_t classes() const { return class_names.size(); }
};

inline CsvSchema default_schema(std::size_t features) {
    CsvSchema s;
    s.feature_columns.reserve(features);
    for (std::size_t i = 0; i < features; ++i) {
        s.feature_columns.push_back("f" + std::to_string(i));
    }
    return s;
}

struct RejectedRow {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string reason;
};

struct LoadResult {
    std::vector<RawRecord> records;
    std::vector<RejectedRow> rejects;
};

namespace detail {

// RFC-4180-style field split: quoted fields may contain commas and doubled
// quotes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) {
        return std::nullopt;
    }
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Reads a headered CSV. Rows with the wrong field count or an unknown label
// go to the reject report; a missing column or unparseable timestamp is a
// hard error naming the row. Records must already be in chronological order.
// With label_optional the label column may be absent from the header, in
// which case every record loads unlabeled.
inline LoadResult load_csv(std::istream& in, const CsvSchema& schema,
                           bool label_optional = false) {
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error("csv: empty file, header row required");
    }
    const auto header = detail::split_csv_line(line);
    auto column_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw data_error("csv: missing required column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ts_col = column_of(schema.timestamp_column);
    std::vector<std::size_t> feat_cols;
    feat_cols.reserve(schema.feature_columns.size());
    for (const auto& name : schema.feature_columns) {
        feat_cols.push_back(column_of(name));
    }
    std::optional<std::size_t> label_col;
    if (!schema.label_column.empty()) {
        const bool present =
            std::find(header.begin(), header.end(), schema.label_column) != header.end();
        if (present) {
            label_col = column_of(schema.label_column);
        } else if (!label_optional) {
            throw data_error("csv: missing required column '" + schema.label_column + "'");
        }
    }

    LoadResult out;
    std::size_t line_no = 1;
    double prev_ts = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            out.rejects.push_back({line_no, "expected " + std::to_string(header.size()) +
                                                " fields, got " + std::to_string(fields.size())});
            continue;
        }
        const auto ts = detail::parse_double(fields[ts_col]);
        if (!ts) {
            throw data_error("csv: unparseable timestamp '" + fields[ts_col] + "' at row " +
                             std::to_string(line_no));
        }
        RawRecord rec;
        rec.timestamp = *ts;
        rec.fields.reserve(feat_cols.size());
        for (std::size_t c : feat_cols) {
            rec.fields.push_back(fields[c]);
        }
        if (label_col) {
            const std::string& name = fields[*label_col];
            auto it = std::find(schema.class_names.begin(), schema.class_names.end(), name);
            if (it != schema.class_names.end()) {
                rec.label = static_cast<int>(it - schema.class_names.begin());
            } else if (auto num = detail::parse_double(name);
                       num && *num == std::floor(*num) && *num >= 0.0 &&
                       *num < static_cast<double>(schema.classes())) {
                rec.label = static_cast<int>(*num);
            } else {
                out.rejects.push_back({line_no, "unknown label '" + name + "'"});
                continue;
            }
        }
        if (rec.timestamp < prev_ts) {
            throw data_error("csv: records out of chronological order at row " +
                             std::to_string(line_no));
        }
        prev_ts = rec.timestamp;
        out.records.push_back(std::move(rec));
    }
    return out;
}

inline LoadResult load_csv(const std::string& path, const CsvSchema& schema,
                           bool label_optional = false) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open csv file: " + path);
    }
    return load_csv(in, schema, label_optional);
}

inline void write_csv(std::ostream& out, const std::vector<RawRecord>& records,
                      const CsvSchema& schema) {
    out << schema.timestamp_column;
    for (const auto& name : schema.feature_columns) {
        out << ',' << name;
    }
    if (!schema.label_column.empty()) {
        out << ',' << schema.label_column;
    }
    out << '\n';
    for (const auto& rec : records) {
        out << detail::format_double(rec.timestamp);
        for (const auto& f : rec.fields) {
            out << ',' << f;
        }
        if (!schema.label_column.empty()) {
            out << ',' << (rec.label ? schema.class_names[static_cast<std::size_t>(*rec.label)]
                                     : std::string("?"));
        }
        out << '\n';
    }
}

inline void write_csv(const std::string& path, const std::vector<RawRecord>& records,
                      const CsvSchema& schema) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw data_error("cannot open csv file for writing: " + path);
    }
    write_csv(out, records, schema);
}

// Per-column feature encoding fitted on training records only. Categorical
// columns become ordinal codes ordered by descending training frequency,
// code 0 reserved for values never seen in training; every column is then
// z-scored with the training mean and population std. A zero-variance
// column encodes to the constant 0.
class Encoder {
public:
    struct Column {
        bool categorical = false;
        std::vector<std::string> categories;  // index i -> code i + 1
        double mean = 0.0;
        double std_dev = 0.0;
    };

    static Encoder fit(const std::vector<RawRecord>& train) {
        if (train.empty()) {
            throw data_error("encoder: cannot fit on an empty training set");
        }
        const std::size_t width = train[0].fields.size();
        Encoder enc;
        enc.columns_.resize(width);
        for (std::size_t c = 0; c < width; ++c) {
            Column& col = enc.columns_[c];
            bool numeric = true;
            for (const auto& rec : train) {
                if (rec.fields.size() != width) {
                    throw data_error("encoder: ragged training records");
                }
                if (!detail::parse_double(rec.fields[c])) {
                    numeric = false;
                    break;
                }
            }
            col.categorical = !numeric;
            std::vector<double> raw(train.size());
            if (numeric) {
                for (std::size_t i = 0; i < train.size(); ++i) {
                    raw[i] = *detail::parse_double(train[i].fields[c]);
                }
            } else {
                std::map<std::string, std::size_t> freq;
                for (const auto& rec : train) {
                    ++freq[rec.fields[c]];
                }
                std::vector<std::pair<std::string, std::size_t>> ordered(freq.begin(), freq.end());
                std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
                    if (a.second != b.second) {
                        return a.second > b.second;
                    }
                    return a.first < b.first;
                });
                col.categories.reserve(ordered.size());
                for (const auto& [value, count] : ordered) {
                    col.categories.push_back(value);
                }
                for (std::size_t i = 0; i < train.size(); ++i) {
                    raw[i] = static_cast<double>(enc.code_of(col, train[i].fields[c]));
                }
            }
            double mean = 0.0;
            for (double v : raw) {
                mean += v;
            }
            mean /= static_cast<double>(raw.size());
            double var = 0.0;
            for (double v : raw) {
                var += (v - mean) * (v - mean);
            }
            var /= static_cast<double>(raw.size());
            col.mean = mean;
            col.std_dev = std::sqrt(var);
        }
        enc.fitted_ = true;
        return enc;
    }

    EncodedRecord encode(const RawRecord& rec) const {
        if (!fitted_) {
            throw data_error("encoder: encode called before fit");
        }
        if (rec.fields.size() != columns_.size()) {
            throw data_error("encoder: record has " + std::to_string(rec.fields.size()) +
                             " fields, encoder was fitted on " + std::to_string(columns_.size()));
        }
        EncodedRecord out;
        out.timestamp = rec.timestamp;
        out.label = rec.label;
        out.features.resize(columns_.size());
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            const Column& col = columns_[c];
            if (col.std_dev == 0.0) {
                out.features[c] = 0.0;
                continue;
            }
            double v;
            if (col.categorical) {
                v = static_cast<double>(code_of(col, rec.fields[c]));
            } else {
                const auto parsed = detail::parse_double(rec.fields[c]);
                if (!parsed) {
                    throw data_error("encoder: non-numeric value '" + rec.fields[c] +
                                     "' in numeric column " + std::to_string(c));
                }
                v = *parsed;
            }
            out.features[c] = (v - col.mean) / col.std_dev;
        }
        return out;
    }

    std::vector<EncodedRecord> encode_all(const std::vector<RawRecord>& records) const {
        std::vector<EncodedRecord> out;
        out.reserve(records.size());
        for (const auto& rec : records) {
            out.push_back(encode(rec));
        }
        return out;
    }

    bool fitted() const { return fitted_; }
    const std::vector<Column>& columns() const { return columns_; }
    std::vector<Column>& mutable_columns() { return columns_; }
    void mark_fitted() { fitted_ = true; }

private:
    static std::size_t code_of(const Column& col, const std::string& value) {
        auto it = std::find(col.categories.begin(), col.categories.end(), value);
        if (it == col.categories.end()) {
            return 0;  // unknown
        }
        return static_cast<std::size_t>(it - col.categories.begin()) + 1;
    }

    bool fitted_ = false;
    std::vector<Column> columns_;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double labeled_fraction = 0.4;
    std::size_t classes = 4;
};

// Chronological partition: the earliest train_fraction of the stream is the
// training span, its earliest labeled_fraction keeps labels, the rest of the
// span has labels hidden (kept aside only for scoring), and the tail is test.
struct SplitResult {
    std::vector<RawRecord> labeled;
    std::vector<RawRecord> unlabeled;     // labels stripped
    std::vector<int> unlabeled_truth;     // hidden labels; -1 where absent
    std::vector<RawRecord> test;
};

inline SplitResult chronological_split(const std::vector<RawRecord>& records,
                                       const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0) || spec.train_fraction > 1.0 ||
        !(spec.labeled_fraction > 0.0) || spec.labeled_fraction > 1.0) {
        throw config_error("split: fractions must lie in (0, 1]");
    }
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].timestamp < records[i - 1].timestamp) {
            throw data_error("split: records out of chronological order at index " +
                             std::to_string(i));
        }
    }
    const std::size_t n = records.size();
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_fraction));
    const std::size_t n_labeled = static_cast<std::size_t>(
        std::floor(static_cast<double>(n_train) * spec.labeled_fraction));
    SplitResult out;
    out.labeled.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_labeled));
    out.unlabeled.reserve(n_train - n_labeled);
    out.unlabeled_truth.reserve(n_train - n_labeled);
    for (std::size_t i = n_labeled; i < n_train; ++i) {
        RawRecord rec = records[i];
        out.unlabeled_truth.push_back(rec.label.value_or(-1));
        rec.label.reset();
        out.unlabeled.push_back(std::move(rec));
    }
    out.test.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train), records.end());
    return out;
}

// One window per record t over rows [t-W+1, t], zero rows standing in for
// the time before the stream begins; the verdict slot of window t is record t.
inline std::vector<Mat> make_windows(const std::vector<EncodedRecord>& records,
                                     std::size_t window) {
    if (window < 1) {
        throw config_error("make_windows: window length must be >= 1");
    }
    std::vector<Mat> out;
    out.reserve(records.size());
    const std::size_t width = records.empty() ? 0 : records[0].features.size();
    for (std::size_t t = 0; t < records.size(); ++t) {
        Mat m(window, width);
        for (std::size_t r = 0; r < window; ++r) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(window - 1 - r);
            if (src < 0) {
                continue;
            }
            const auto& feats = records[static_cast<std::size_t>(src)].features;
            std::copy(feats.begin(), feats.end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * width));
        }
        out.push_back(std::move(m));
    }
    return out;
}

// Synthetic four-class traffic: a seeded AR(1) base signal per feature with
// anomalies laid down as contiguous episodes of geometric length. Class 1
// scales three rate-like features, class 2 shifts two value features by a
// fixed offset, class 3 adds a low-amplitude periodic pattern to one feature.
struct SynthConfig {
    std::size_t records = 10000;
    std::array<double, 4> priors = {0.5, 0.2696875, 0.1680625, 0.06225};
    std::uint64_t seed = 1;
    std::size_t features = 11;

    double mean_episode_length = 20.0;
    double dos_scale = 3.0;
    double malicious_offset = 1.2;
    double spying_amplitude = 0.9;
    double spying_period = 6.0;
};

inline std::vector<RawRecord> synth_generate(const SynthConfig& cfg) {
    double prior_sum = 0.0;
    for (double p : cfg.priors) {
        if (p < 0.0) {
            throw config_error("synth: priors must be non-negative");
        }
        prior_sum += p;
    }
    if (std::fabs(prior_sum - 1.0) > 1e-9) {
        throw config_error("synth: priors must sum to 1");
    }
    if (cfg.features < 6) {
        throw config_error("synth: at least 6 features required (3 rate, 2 value, 1 periodic)");
    }

    const std::size_t n = cfg.records;
    const Rng root(cfg.seed);

    // Per-class record quotas by largest remainder, so empirical frequencies
    // sit within rounding of the priors.
    std::array<std::size_t, 4> quota{};
    std::size_t assigned = 0;
    std::array<double, 4> remainder{};
    for (std::size_t c = 0; c < 4; ++c) {
        const double exact = static_cast<double>(n) * cfg.priors[c];
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - std::floor(exact);
        assigned += quota[c];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < 4; ++c) {
            if (remainder[c] > remainder[best]) {
                best = c;
            }
        }
        ++quota[best];
        remainder[best] = -1.0;
        ++assigned;
    }

    // Episode layout: segments with geometric length, class drawn with
    // probability proportional to remaining quota.
    std::vector<int> labels;
    labels.reserve(n);
    Rng seg_rng = root.split("segments");
    const double p_end = 1.0 / cfg.mean_episode_length;
    while (labels.size() < n) {
        std::size_t remaining = n - labels.size();
        double total = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            total += static_cast<double>(quota[c]);
        }
        double pick = seg_rng.uniform() * total;
        std::size_t cls = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            if (quota[c] == 0) {
                continue;
            }
            cls = c;
            pick -= static_cast<double>(quota[c]);
            if (pick < 0.0) {
                break;
            }
        }
        std::size_t len = 1 + static_cast<std::size_t>(
                                  std::floor(std::log(1.0 - seg_rng.uniform()) /
                                             std::log(1.0 - p_end)));
        len = std::min({len, quota[cls], remaining});
        if (len == 0) {
            continue;
        }
        labels.insert(labels.end(), len, static_cast<int>(cls));
        quota[cls] -= len;
    }

    // AR(1) base with phi = 0.8; class effects ride on top.
    Rng noise_rng = root.split("noise");
    std::vector<double> state(cfg.features, 0.0);
    std::vector<RawRecord> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<double> x(cfg.features);
        for (std::size_t j = 0; j < cfg.features; ++j) {
            state[j] = 0.8 * state[j] + 0.5 * noise_rng.normal();
            x[j] = state[j];
        }
        // Rate features carry a positive baseline so bursts both shift and
        // widen them.
        for (std::size_t j = 0; j < 3; ++j) {
            x[j] += 2.0;
        }
        const int cls = labels[t];
        if (cls == 1) {
            for (std::size_t j = 0; j < 3; ++j) {
                x[j] *= cfg.dos_scale;
            }
        } else if (cls == 2) {
            x[3] += cfg.malicious_offset;
            x[4] += cfg.malicious_offset;
        } else if (cls == 3) {
            x[5] += cfg.spying_amplitude *
                    std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / cfg.spying_period);
        }
        RawRecord rec;
        rec.timestamp = static_cast<double>(t);
        rec.label = cls;
        rec.fields.reserve(cfg.features);
        for (double v : x) {
            rec.fields.push_back(detail::format_double(v));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace ssvtcn
