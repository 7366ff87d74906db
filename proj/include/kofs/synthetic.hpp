#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "kofs/common.hpp"
#include "kofs/dataset.hpp"

namespace kofs {

// Correlated Gaussian data with a random positive-definite covariance
// (A A^T plus an independent-noise diagonal); no target column.
inline Dataset make_gaussian_dataset(size_t n, size_t d, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6d5));
    Matrix a(d, d);
    for (size_t i = 0; i < d; ++i) {
        for (size_t j = 0; j < d; ++j) a(i, j) = rng.normal() / std::sqrt(static_cast<double>(d));
    }
    Dataset ds;
    ds.task = Task::Regression;
    ds.n = n;
    ds.d = d;
    ds.features = Matrix(n, d);
    std::vector<double> z(d);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) z[j] = rng.normal();
        for (size_t j = 0; j < d; ++j) {
            double acc = 0.6 * rng.normal();
            for (size_t k = 0; k < d; ++k) acc += a(j, k) * z[k];
            ds.features(i, j) = acc;
        }
    }
    for (size_t j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j + 1));
    detail::standardize_columns(ds.features, ds.column_means, ds.column_stds, ds.constant_columns);
    return ds;
}

// Desk-scale benchmark tables. Each mimics the shape (rows, features, task)
// of a well-known UCI/Kaggle dataset but is generated from a seeded latent
// factor model: redundant blocks of correlated copies, independent
// informative features, and pure noise columns, with the target driven by
// the latent factors only.
enum class BenchmarkKind { WineRed, GermanCredit, Ionosphere, HousingBoston };

struct BenchmarkSpec {
    std::string name;
    size_t n = 0;
    size_t d = 0;
    Task task = Task::Classification;
    std::string target_name;
    size_t block_factors = 0;
    size_t block_copies = 3;
    size_t singles = 0;
    size_t noise = 0;
    size_t classes = 2;
    double block_rho = 0.75;
    double single_weight = 1.0;
    double block_weight = 0.5;
    double label_noise = 0.4;
    std::vector<std::string> class_labels;
};

inline BenchmarkSpec benchmark_spec(BenchmarkKind kind) {
    BenchmarkSpec s;
    switch (kind) {
        case BenchmarkKind::WineRed:
            s = {.name = "wine_quality_red", .n = 999, .d = 11, .task = Task::Classification,
                 .target_name = "quality", .block_factors = 2, .singles = 3, .noise = 2,
                 .classes = 3, .class_labels = {"5", "6", "7"}};
            break;
        case BenchmarkKind::GermanCredit:
            s = {.name = "german_credit", .n = 1000, .d = 24, .task = Task::Classification,
                 .target_name = "credit_risk", .block_factors = 3, .singles = 9, .noise = 6,
                 .classes = 2, .class_labels = {"good", "bad"}};
            break;
        case BenchmarkKind::Ionosphere:
            s = {.name = "ionosphere", .n = 351, .d = 34, .task = Task::Classification,
                 .target_name = "class", .block_factors = 4, .singles = 14, .noise = 8,
                 .classes = 2, .class_labels = {"g", "b"}};
            break;
        case BenchmarkKind::HousingBoston:
            s = {.name = "housing_boston", .n = 506, .d = 13, .task = Task::Regression,
                 .target_name = "medv", .block_factors = 2, .singles = 5, .noise = 2,
                 .class_labels = {}};
            break;
    }
    if (s.block_factors * s.block_copies + s.singles + s.noise != s.d) {
        throw ConfigError("benchmark spec is inconsistent");
    }
    return s;
}

inline std::vector<BenchmarkKind> all_benchmarks() {
    return {BenchmarkKind::WineRed, BenchmarkKind::GermanCredit, BenchmarkKind::Ionosphere,
            BenchmarkKind::HousingBoston};
}

// Writes raw (unstandardized) CSV with a header and target column so the
// normal ingestion path is exercised.
inline void write_benchmark_csv(BenchmarkKind kind, uint64_t seed, const std::string& path) {
    const BenchmarkSpec spec = benchmark_spec(kind);
    Rng rng(derive_seed(seed, 0xbe9c));

    const size_t n_factors = spec.block_factors + spec.singles;
    // copy = factor + sigma * e gives corr rho between copies of one block
    const double copy_sigma = std::sqrt(1.0 / spec.block_rho - 1.0);

    // weights on latent factors; independent singles carry the larger share
    std::vector<double> weights(n_factors, 0.0);
    double wnorm = 0.0;
    for (size_t k = 0; k < n_factors; ++k) {
        const bool is_block = k < spec.block_factors;
        weights[k] = (is_block ? spec.block_weight : spec.single_weight) * (0.8 + 0.4 * rng.uniform01());
        wnorm += weights[k] * weights[k];
    }
    wnorm = std::sqrt(wnorm);

    // per-column display scale and offset; standardization undoes these
    std::vector<double> scale(spec.d), offset(spec.d);
    for (size_t j = 0; j < spec.d; ++j) {
        scale[j] = 0.5 + 2.5 * rng.uniform01();
        offset[j] = -2.0 + 4.0 * rng.uniform01();
    }

    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(9);
    for (size_t j = 0; j < spec.d; ++j) out << 'f' << (j + 1) << ',';
    out << spec.target_name << '\n';

    std::vector<double> factors(n_factors);
    for (size_t row = 0; row < spec.n; ++row) {
        for (size_t k = 0; k < n_factors; ++k) factors[k] = rng.normal();

        size_t col = 0;
        for (size_t k = 0; k < spec.block_factors; ++k) {
            for (size_t c = 0; c < spec.block_copies; ++c, ++col) {
                const double v = factors[k] + copy_sigma * rng.normal();
                out << scale[col] * v + offset[col] << ',';
            }
        }
        for (size_t k = 0; k < spec.singles; ++k, ++col) {
            const double v = factors[spec.block_factors + k];
            out << scale[col] * v + offset[col] << ',';
        }
        for (size_t k = 0; k < spec.noise; ++k, ++col) {
            out << scale[col] * rng.normal() + offset[col] << ',';
        }

        double score = 0.0;
        for (size_t k = 0; k < n_factors; ++k) score += weights[k] * factors[k];
        score /= wnorm;

        if (spec.task == Task::Regression) {
            out << 22.0 + 9.0 * score + 3.0 * rng.normal() << '\n';
        } else {
            const double u = score + spec.label_noise * rng.normal();
            size_t cls;
            if (spec.classes == 2) {
                cls = u > 0.0 ? 0 : 1;
            } else {
                cls = u < -0.43 ? 0 : (u > 0.43 ? 2 : 1);
            }
            out << spec.class_labels[cls] << '\n';
        }
    }
}

inline Dataset load_benchmark(BenchmarkKind kind, uint64_t seed, const std::string& dir) {
    const BenchmarkSpec spec = benchmark_spec(kind);
    const std::string path = dir + "/" + spec.name + ".csv";
    write_benchmark_csv(kind, seed, path);
    return load_csv(path, spec.target_name, spec.task);
}

}  // namespace kofs
