#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kofs/common.hpp"
#include "kofs/stats.hpp"

namespace kofs {

enum class Task { Classification, Regression };

inline const char* to_string(Task t) {
    return t == Task::Classification ? "classification" : "regression";
}

// Standardized n x d feature matrix with an optional target column.
// Columns are z-scored with the population std; constant columns are kept,
// flagged, and zeroed (their std is recorded as 0).
struct Dataset {
    Matrix features;
    std::optional<std::vector<double>> target;
    Task task = Task::Classification;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;  // label-encoding order for classification targets
    std::vector<bool> constant_columns;
    std::vector<double> column_means;
    std::vector<double> column_stds;
    size_t n = 0;
    size_t d = 0;
    size_t dropped_rows = 0;

    // Copy with the target removed; the selection loop runs on this view so it
    // cannot read y by construction.
    Dataset without_target() const {
        Dataset out = *this;
        out.target.reset();
        return out;
    }
};

struct SplitSpec {
    double train_fraction = 0.8;
    uint64_t seed = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.emplace_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.emplace_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline bool is_missing(std::string_view field) {
    return field.empty() || field == "NA" || field == "na" || field == "NaN" ||
           field == "nan" || field == "?";
}

inline bool parse_number(std::string_view field, double& out) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

// z-score in place; returns (means, stds). Constant columns get std 0 and are
// zeroed rather than divided.
inline void standardize_columns(Matrix& m, std::vector<double>& means, std::vector<double>& stds,
                                std::vector<bool>& constant) {
    const size_t n = m.rows(), d = m.cols();
    means.assign(d, 0.0);
    stds.assign(d, 0.0);
    constant.assign(d, false);
    for (size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) acc += m(i, j);
        const double mu = acc / static_cast<double>(n);
        double var = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double t = m(i, j) - mu;
            var += t * t;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        means[j] = mu;
        if (sd < 1e-12) {
            stds[j] = 0.0;
            constant[j] = true;
            for (size_t i = 0; i < n; ++i) m(i, j) = 0.0;
        } else {
            stds[j] = sd;
            for (size_t i = 0; i < n; ++i) m(i, j) = (m(i, j) - mu) / sd;
        }
    }
}

}  // namespace detail

// CSV contract: header row, comma delimiter, '.' decimal separator, UTF-8;
// an optional leading '#' comment line is skipped. Rows with missing cells
// are dropped and counted. Categorical values are only allowed in a
// classification target column (label-encoded by first appearance).
inline Dataset load_csv(const std::string& path, const std::optional<std::string>& target_column,
                        Task task) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    size_t line_no = 0;
    do {
        if (!std::getline(in, line)) throw DataError("empty file: " + path);
        ++line_no;
    } while (!line.empty() && line[0] == '#');

    const std::vector<std::string> header = detail::split_fields(line);
    if (header.size() < 2) throw DataError("need at least two columns in " + path);

    int target_idx = -1;
    if (target_column) {
        for (size_t j = 0; j < header.size(); ++j) {
            if (header[j] == *target_column) target_idx = static_cast<int>(j);
        }
        if (target_idx < 0) throw DataError("target column not found: " + *target_column);
    }

    Dataset ds;
    ds.task = task;
    for (size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) != target_idx) ds.feature_names.push_back(header[j]);
    }
    if (ds.feature_names.size() < 2) {
        throw DataError("need at least 2 feature columns after target exclusion");
    }

    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    std::vector<std::string> class_names;
    size_t dropped = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> fields = detail::split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }

        bool missing = false;
        for (const auto& f : fields) {
            if (detail::is_missing(f)) {
                missing = true;
                break;
            }
        }
        if (missing) {
            ++dropped;
            continue;
        }

        std::vector<double> row;
        row.reserve(ds.feature_names.size());
        double target_value = 0.0;
        for (size_t j = 0; j < fields.size(); ++j) {
            double v = 0.0;
            if (static_cast<int>(j) == target_idx) {
                if (task == Task::Classification) {
                    // class ids by first appearance, numeric or not
                    auto it = std::find(class_names.begin(), class_names.end(), fields[j]);
                    if (it == class_names.end()) {
                        class_names.push_back(fields[j]);
                        target_value = static_cast<double>(class_names.size() - 1);
                    } else {
                        target_value = static_cast<double>(it - class_names.begin());
                    }
                } else if (detail::parse_number(fields[j], v)) {
                    target_value = v;
                } else {
                    throw DataError("row " + std::to_string(line_no) + ", column '" + header[j] +
                                    "': regression target must be numeric, got '" + fields[j] + "'");
                }
            } else {
                if (!detail::parse_number(fields[j], v)) {
                    throw DataError("row " + std::to_string(line_no) + ", column '" + header[j] +
                                    "': cannot parse '" + fields[j] + "' as a number");
                }
                row.push_back(v);
            }
        }
        rows.push_back(std::move(row));
        if (target_idx >= 0) targets.push_back(target_value);
    }

    if (rows.size() < 2) throw DataError("need at least 2 usable rows, got " + std::to_string(rows.size()));

    ds.n = rows.size();
    ds.d = ds.feature_names.size();
    ds.dropped_rows = dropped;
    ds.features = Matrix(ds.n, ds.d);
    for (size_t i = 0; i < ds.n; ++i) {
        for (size_t j = 0; j < ds.d; ++j) ds.features(i, j) = rows[i][j];
    }
    if (target_idx >= 0) ds.target = std::move(targets);
    ds.class_names = std::move(class_names);

    detail::standardize_columns(ds.features, ds.column_means, ds.column_stds, ds.constant_columns);
    if (!ds.features.all_finite()) throw NumericError("non-finite values after standardization");
    return ds;
}

// Writes the dataset back in raw units (standardization undone) so that a
// reload round-trips through load_csv.
inline void save_csv(const Dataset& ds, const std::string& path,
                     const std::string& target_name = "target") {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);

    for (size_t j = 0; j < ds.d; ++j) {
        if (j) out << ',';
        out << ds.feature_names[j];
    }
    if (ds.target) out << ',' << target_name;
    out << '\n';

    for (size_t i = 0; i < ds.n; ++i) {
        for (size_t j = 0; j < ds.d; ++j) {
            if (j) out << ',';
            const double raw = ds.constant_columns[j]
                                   ? ds.column_means[j]
                                   : ds.features(i, j) * ds.column_stds[j] + ds.column_means[j];
            out << raw;
        }
        if (ds.target) {
            out << ',';
            const double t = (*ds.target)[i];
            if (ds.task == Task::Classification && !ds.class_names.empty()) {
                out << ds.class_names[static_cast<size_t>(t)];
            } else {
                out << t;
            }
        }
        out << '\n';
    }
}

// Deterministic row split. Train size = floor(train_fraction * n); train
// standardization statistics are recomputed and applied to the test side.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must be in (0, 1)");
    }
    if (ds.column_stds.size() != ds.d || ds.constant_columns.size() != ds.d) {
        throw DataError("split: dataset lacks standardization statistics");
    }
    const size_t n_train = static_cast<size_t>(std::floor(spec.train_fraction * static_cast<double>(ds.n)));
    if (n_train == 0 || n_train == ds.n) throw DataError("split leaves one side empty");

    const std::vector<size_t> perm = Rng(spec.seed).permutation(ds.n);

    auto take = [&](size_t begin, size_t count) {
        Dataset out;
        out.task = ds.task;
        out.feature_names = ds.feature_names;
        out.class_names = ds.class_names;
        out.n = count;
        out.d = ds.d;
        out.features = Matrix(count, ds.d);
        if (ds.target) out.target = std::vector<double>(count);
        for (size_t i = 0; i < count; ++i) {
            const size_t src = perm[begin + i];
            for (size_t j = 0; j < ds.d; ++j) {
                // undo the parent standardization so each side carries raw values first
                out.features(i, j) = ds.constant_columns[j]
                                         ? ds.column_means[j]
                                         : ds.features(src, j) * ds.column_stds[j] + ds.column_means[j];
            }
            if (ds.target) (*out.target)[i] = (*ds.target)[src];
        }
        return out;
    };

    Dataset train = take(0, n_train);
    Dataset test = take(n_train, ds.n - n_train);

    detail::standardize_columns(train.features, train.column_means, train.column_stds,
                                train.constant_columns);
    // test side reuses train statistics
    test.column_means = train.column_means;
    test.column_stds = train.column_stds;
    test.constant_columns = train.constant_columns;
    for (size_t j = 0; j < test.d; ++j) {
        for (size_t i = 0; i < test.n; ++i) {
            test.features(i, j) = train.constant_columns[j]
                                      ? 0.0
                                      : (test.features(i, j) - train.column_means[j]) / train.column_stds[j];
        }
    }
    return {std::move(train), std::move(test)};
}

}  // namespace kofs
