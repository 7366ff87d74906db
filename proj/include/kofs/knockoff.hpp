#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kofs/common.hpp"
#include "kofs/dataset.hpp"
#include "kofs/stats.hpp"

namespace kofs {

enum class ThresholdMode { Mean, Median };
enum class ScoreMode { MeanAbsCorr, OwnColumn };

inline const char* to_string(ThresholdMode m) { return m == ThresholdMode::Mean ? "mean" : "median"; }
inline const char* to_string(ScoreMode m) {
    return m == ScoreMode::MeanAbsCorr ? "mean-abs-corr" : "own-column";
}

// Knockoff matrix plus the per-feature scoring that turns it into pseudo
// labels: label 1 marks a feature far from the knockoff matrix (keepworthy),
// label 0 marks a knockoff-like feature.
struct KnockoffResult {
    Matrix knockoffs;
    std::vector<double> scores;     // in [0,1]
    std::vector<double> distances;  // 1 - score
    std::vector<int> labels;        // distances[i] >= threshold, ties positive
    double threshold = 0.0;
    ThresholdMode threshold_mode = ThresholdMode::Mean;
    ScoreMode score_mode = ScoreMode::MeanAbsCorr;
};

// Gaussian fit of the standardized feature matrix together with the
// equicorrelated knockoff vector s.
struct GaussianModel {
    std::vector<double> mean;
    Matrix covariance;  // ridge already added
    std::vector<double> s;
    double ridge = 0.0;
};

namespace detail {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EMatrix> as_eigen(const Matrix& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Symmetric square root with tiny negative eigenvalues clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& sym, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -tol) {
            throw NumericError("conditional knockoff covariance not PSD: eigenvalue " +
                               std::to_string(ev[i]));
        }
        ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Fits mean and (ridged) population covariance on the standardized features
// and picks the equicorrelated knockoff vector s = min(2*lambda_min, 1),
// scaled down if needed so 2*Sigma - diag(s) stays PSD.
inline GaussianModel estimate_gaussian(const Dataset& ds, double ridge = 1e-6) {
    if (ridge < 0.0) throw ConfigError("ridge must be nonnegative");
    const size_t n = ds.n, d = ds.d;

    GaussianModel model;
    model.ridge = ridge;
    model.mean.assign(d, 0.0);
    for (size_t j = 0; j < d; ++j) model.mean[j] = stats::mean(ds.features.column(j));

    model.covariance = Matrix(d, d);
    for (size_t j = 0; j < d; ++j) {
        for (size_t k = j; k < d; ++k) {
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += (ds.features(i, j) - model.mean[j]) * (ds.features(i, k) - model.mean[k]);
            }
            const double cov = acc / static_cast<double>(n);
            model.covariance(j, k) = cov;
            model.covariance(k, j) = cov;
        }
        model.covariance(j, j) += ridge;
    }

    const Eigen::MatrixXd sigma = detail::as_eigen(model.covariance);
    const double lambda_min = detail::min_eigenvalue(sigma);
    if (lambda_min <= 0.0) {
        throw NumericError("covariance not positive definite after ridge " + std::to_string(ridge) +
                           " (min eigenvalue " + std::to_string(lambda_min) +
                           "); increase the ridge");
    }

    double s = std::min(2.0 * lambda_min, 1.0);
    // exact in arithmetic; the loop only absorbs numerical slack
    for (int attempt = 0; attempt < 64; ++attempt) {
        Eigen::MatrixXd check = 2.0 * sigma;
        check.diagonal().array() -= s;
        if (detail::min_eigenvalue(check) >= -1e-8) break;
        s *= 0.999;
    }
    model.s.assign(d, s);
    return model;
}

// Gaussian conditional Model-X construction: per row x,
//   mu_c    = x - diag(s) Sigma^-1 (x - mu)
//   Sigma_c = 2 diag(s) - diag(s) Sigma^-1 diag(s)
// The per-row noise stream is derived from (seed, row) so sampling is
// order-independent. The target is never read.
inline KnockoffResult sample_knockoffs(const Dataset& ds, const GaussianModel& model,
                                       uint64_t seed) {
    const size_t n = ds.n, d = ds.d;
    if (model.s.size() != d || model.covariance.rows() != d) {
        throw DataError("gaussian model dimensions do not match dataset");
    }

    const Eigen::MatrixXd sigma = detail::as_eigen(model.covariance);
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(model.s.data(), static_cast<Eigen::Index>(d));
    const Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(model.mean.data(), static_cast<Eigen::Index>(d));

    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NumericError("covariance factorization failed; increase the ridge");
    }
    const Eigen::MatrixXd sigma_inv_s = llt.solve(Eigen::MatrixXd(s.asDiagonal()));  // Sigma^-1 diag(s)
    const Eigen::MatrixXd a = sigma_inv_s.transpose();  // diag(s) Sigma^-1, by symmetry
    Eigen::MatrixXd sigma_c = 2.0 * Eigen::MatrixXd(s.asDiagonal()) -
                              Eigen::MatrixXd(s.asDiagonal()) * sigma_inv_s;
    sigma_c = 0.5 * (sigma_c + sigma_c.transpose());
    const Eigen::MatrixXd factor = detail::psd_sqrt(sigma_c, 1e-8);

    KnockoffResult kr;
    kr.knockoffs = Matrix(n, d);
    Eigen::VectorXd x(d), z(d);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) x[static_cast<Eigen::Index>(j)] = ds.features(i, j);
        const Eigen::VectorXd mu_c = x - a * (x - mu);
        Rng row_rng(derive_seed(seed, 0x6b00 + i));
        for (size_t j = 0; j < d; ++j) z[static_cast<Eigen::Index>(j)] = row_rng.normal();
        const Eigen::VectorXd xt = mu_c + factor * z;
        for (size_t j = 0; j < d; ++j) kr.knockoffs(i, j) = xt[static_cast<Eigen::Index>(j)];
    }
    return kr;
}

// Aggregate correlation of each original feature with the knockoff matrix.
//   MeanAbsCorr: score_i = mean_j |pearson(f_i, kf_j)|, distance = 1 - score.
//   OwnColumn:   distance_i = |f_i - kf_i|_2 / (2 sqrt(n)), which lies in
//                [0,1] for unit-variance columns; score = 1 - distance.
inline void score_features(const Dataset& ds, KnockoffResult& kr,
                           ScoreMode mode = ScoreMode::MeanAbsCorr) {
    const size_t n = ds.n, d = ds.d;
    if (kr.knockoffs.rows() != n || kr.knockoffs.cols() != d) {
        throw DataError("knockoff matrix shape mismatch");
    }
    kr.score_mode = mode;
    kr.scores.assign(d, 0.0);
    kr.distances.assign(d, 0.0);

    std::vector<std::vector<double>> kf_cols(d);
    for (size_t j = 0; j < d; ++j) kf_cols[j] = kr.knockoffs.column(j);

    for (size_t i = 0; i < d; ++i) {
        const std::vector<double> fi = ds.features.column(i);
        if (mode == ScoreMode::MeanAbsCorr) {
            double acc = 0.0;
            for (size_t j = 0; j < d; ++j) acc += std::abs(stats::pearson(fi, kf_cols[j]));
            kr.scores[i] = acc / static_cast<double>(d);
            kr.distances[i] = 1.0 - kr.scores[i];
        } else {
            const double dist = std::sqrt(squared_l2(fi, kf_cols[i])) /
                                (2.0 * std::sqrt(static_cast<double>(n)));
            kr.distances[i] = std::min(dist, 1.0);
            kr.scores[i] = 1.0 - kr.distances[i];
        }
    }
}

// Pseudo label: 1 iff distance >= threshold (mean by default; the median
// splits near-identical distances when only a few features stand out).
inline void assign_pseudo_labels(KnockoffResult& kr, ThresholdMode mode = ThresholdMode::Mean) {
    if (kr.distances.empty()) throw DataError("distances not computed yet");
    kr.threshold_mode = mode;
    kr.threshold = mode == ThresholdMode::Mean ? stats::mean(kr.distances)
                                               : stats::median(kr.distances);
    kr.labels.assign(kr.distances.size(), 0);
    for (size_t i = 0; i < kr.distances.size(); ++i) {
        // ties count as positive; the slack absorbs summation noise in the mean
        kr.labels[i] = kr.distances[i] >= kr.threshold - 1e-12 ? 1 : 0;
    }
}

inline KnockoffResult build_knockoffs(const Dataset& ds, uint64_t seed, double ridge = 1e-6,
                                      ScoreMode score_mode = ScoreMode::MeanAbsCorr,
                                      ThresholdMode threshold_mode = ThresholdMode::Mean) {
    const GaussianModel model = estimate_gaussian(ds, ridge);
    KnockoffResult kr = sample_knockoffs(ds, model, seed);
    score_features(ds, kr, score_mode);
    assign_pseudo_labels(kr, threshold_mode);
    return kr;
}

inline void dump_knockoffs_csv(const KnockoffResult& kr, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);
    for (size_t j = 0; j < kr.knockoffs.cols(); ++j) {
        if (j) out << ',';
        out << "f~" << (j + 1);
    }
    out << '\n';
    for (size_t i = 0; i < kr.knockoffs.rows(); ++i) {
        for (size_t j = 0; j < kr.knockoffs.cols(); ++j) {
            if (j) out << ',';
            out << kr.knockoffs(i, j);
        }
        out << '\n';
    }
}

inline void dump_labels_csv(const KnockoffResult& kr, const std::vector<std::string>& names,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);
    out << "feature_name,score,distance,label\n";
    for (size_t i = 0; i < kr.labels.size(); ++i) {
        out << names[i] << ',' << kr.scores[i] << ',' << kr.distances[i] << ',' << kr.labels[i]
            << '\n';
    }
}

}  // namespace kofs
