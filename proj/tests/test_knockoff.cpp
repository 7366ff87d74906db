#include <catch2/catch_amalgamated.hpp>

#include "kofs/knockoff.hpp"
#include "kofs/synthetic.hpp"
#include "oracles.hpp"

using namespace kofs;
using Catch::Matchers::WithinAbs;

namespace {

Dataset from_matrix(Matrix m) {
    Dataset ds;
    ds.n = m.rows();
    ds.d = m.cols();
    ds.features = std::move(m);
    ds.task = Task::Regression;
    for (size_t j = 0; j < ds.d; ++j) ds.feature_names.push_back("f" + std::to_string(j + 1));
    ds.constant_columns.assign(ds.d, false);
    ds.column_means.assign(ds.d, 0.0);
    ds.column_stds.assign(ds.d, 1.0);
    return ds;
}

std::vector<std::vector<double>> to_rows(const Matrix& m) {
    std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
    for (size_t i = 0; i < m.rows(); ++i) {
        for (size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    }
    return out;
}

// Two population-standardized columns with sample correlation exactly rho,
// built from orthogonal sign patterns.
Dataset equicorrelated_pair(double rho) {
    const std::vector<double> u{1, -1, 1, -1, 1, -1, 1, -1};
    const std::vector<double> v{1, 1, -1, -1, 1, 1, -1, -1};
    Matrix m(8, 2);
    for (size_t i = 0; i < 8; ++i) {
        m(i, 0) = u[i];
        m(i, 1) = rho * u[i] + std::sqrt(1.0 - rho * rho) * v[i];
    }
    return from_matrix(std::move(m));
}

}  // namespace

TEST_CASE("estimate_gaussian on near-independent columns gives s close to 1") {
    const Dataset ds = make_gaussian_dataset(4000, 4, 3);
    // make_gaussian_dataset mixes factors, so decorrelate by using fresh noise
    Matrix m(4000, 4);
    Rng rng(99);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    std::vector<double> means, stds;
    std::vector<bool> constant;
    detail::standardize_columns(m, means, stds, constant);
    const Dataset indep = from_matrix(std::move(m));

    const GaussianModel model = estimate_gaussian(indep, 1e-6);
    for (size_t j = 0; j < indep.d; ++j) {
        REQUIRE_THAT(model.covariance(j, j), WithinAbs(1.0, 0.01));
        for (size_t k = j + 1; k < indep.d; ++k) {
            REQUIRE(std::abs(model.covariance(j, k)) < 0.1);
        }
        REQUIRE(model.s[j] > 0.85);
        REQUIRE(model.s[j] <= 1.0);
    }
}

TEST_CASE("equicorrelated pair: lambda_min and the PSD certificate") {
    const Dataset ds = equicorrelated_pair(0.5);
    const GaussianModel model = estimate_gaussian(ds, 1e-8);

    REQUIRE_THAT(model.covariance(0, 1), WithinAbs(0.5, 1e-12));
    // lambda_min(Sigma) = 1 - rho = 0.5, so 2*lambda_min clips s at 1
    REQUIRE_THAT(model.s[0], WithinAbs(1.0, 1e-9));

    // independent Jacobi oracle on 2*Sigma - diag(s)
    std::vector<std::vector<double>> check = to_rows(model.covariance);
    for (auto& row : check) {
        for (double& v : row) v *= 2.0;
    }
    for (size_t j = 0; j < ds.d; ++j) check[j][j] -= model.s[j];
    REQUIRE(oracle::min_eigenvalue(check) >= -1e-8);

    const std::vector<double> sigma_eigs =
        oracle::jacobi_eigenvalues(to_rows(model.covariance));
    REQUIRE_THAT(*std::min_element(sigma_eigs.begin(), sigma_eigs.end()),
                 WithinAbs(0.5, 1e-6));
}

TEST_CASE("constant column drives s to about twice the ridge") {
    Matrix m(60, 3);
    Rng rng(5);
    for (size_t i = 0; i < 60; ++i) {
        m(i, 0) = rng.normal();
        m(i, 1) = rng.normal();
        m(i, 2) = 4.2;  // constant
    }
    std::vector<double> means, stds;
    std::vector<bool> constant;
    detail::standardize_columns(m, means, stds, constant);
    REQUIRE(constant[2]);
    const Dataset ds = from_matrix(std::move(m));

    const double ridge = 1e-4;
    const GaussianModel model = estimate_gaussian(ds, ridge);
    const double lambda_min = oracle::min_eigenvalue(to_rows(model.covariance));
    REQUIRE_THAT(lambda_min, WithinAbs(ridge, 1e-9));
    REQUIRE_THAT(model.s[2], WithinAbs(2.0 * ridge, 1e-8));
}

TEST_CASE("estimate_gaussian fails loudly when the covariance is singular") {
    Matrix m(10, 2);
    for (size_t i = 0; i < 10; ++i) {
        m(i, 0) = static_cast<double>(i) - 4.5;
        m(i, 1) = m(i, 0);  // perfectly collinear
    }
    std::vector<double> means, stds;
    std::vector<bool> constant;
    detail::standardize_columns(m, means, stds, constant);
    const Dataset ds = from_matrix(std::move(m));
    REQUIRE_THROWS_AS(estimate_gaussian(ds, 0.0), NumericError);
    REQUIRE_NOTHROW(estimate_gaussian(ds, 1e-6));
}

TEST_CASE("identity covariance produces independent fresh knockoffs") {
    Matrix m(4000, 3);
    Rng rng(77);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    std::vector<double> means, stds;
    std::vector<bool> constant;
    detail::standardize_columns(m, means, stds, constant);
    const Dataset ds = from_matrix(std::move(m));

    GaussianModel model;
    model.mean.assign(3, 0.0);
    model.covariance = Matrix(3, 3);
    for (size_t j = 0; j < 3; ++j) model.covariance(j, j) = 1.0;
    model.s.assign(3, 1.0);

    const KnockoffResult kr = sample_knockoffs(ds, model, 9);
    const double bound = 5.0 / std::sqrt(static_cast<double>(ds.n));
    for (size_t j = 0; j < 3; ++j) {
        const double rho = stats::pearson(ds.features.column(j), kr.knockoffs.column(j));
        REQUIRE(std::abs(rho) < bound);  // mu_c = 0, Sigma_c = I: fully independent draw
        REQUIRE(std::abs(stats::mean(kr.knockoffs.column(j))) < bound);
        REQUIRE(std::abs(stats::stddev(kr.knockoffs.column(j)) - 1.0) < bound);
    }
}

TEST_CASE("knockoffs are deterministic in the seed and blind to the target") {
    Dataset ds = make_gaussian_dataset(300, 5, 21);
    Dataset with_target = ds;
    with_target.target = std::vector<double>(ds.n, 1.0);

    const KnockoffResult a = build_knockoffs(ds, 4, 1e-6);
    const KnockoffResult b = build_knockoffs(with_target, 4, 1e-6);
    const KnockoffResult c = build_knockoffs(ds, 5, 1e-6);

    REQUIRE(a.knockoffs == b.knockoffs);
    REQUIRE(a.scores == b.scores);
    REQUIRE(a.labels == b.labels);
    REQUIRE_FALSE(a.knockoffs == c.knockoffs);
}

TEST_CASE("moments and cross-correlations match over 30 reseeded draws") {
    const Dataset ds = make_gaussian_dataset(1500, 6, 13);
    const GaussianModel model = estimate_gaussian(ds, 1e-6);
    const double n = static_cast<double>(ds.n);
    const double mean_bound = 4.0 / std::sqrt(n);
    const double corr_bound = 5.0 / std::sqrt(n);

    std::vector<std::vector<double>> cols(ds.d);
    for (size_t j = 0; j < ds.d; ++j) cols[j] = ds.features.column(j);

    size_t checks = 0, hits = 0;
    double worst_cross = 0.0;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        const KnockoffResult kr = sample_knockoffs(ds, model, seed);
        for (size_t j = 0; j < ds.d; ++j) {
            const std::vector<double> kf = kr.knockoffs.column(j);
            ++checks;
            if (std::abs(stats::mean(kf) - stats::mean(cols[j])) < mean_bound &&
                std::abs(stats::stddev(kf) - stats::stddev(cols[j])) < mean_bound) {
                ++hits;
            }
        }
        // exchangeability fingerprint: corr(f_i, kf_j) tracks corr(f_i, f_j), i != j
        for (size_t i = 0; i < ds.d && seed < 5; ++i) {
            for (size_t j = 0; j < ds.d; ++j) {
                if (i == j) continue;
                const double got = stats::pearson(cols[i], kr.knockoffs.column(j));
                const double want = stats::pearson(cols[i], cols[j]);
                worst_cross = std::max(worst_cross, std::abs(got - want));
            }
        }
    }
    REQUIRE(static_cast<double>(hits) >= 0.95 * static_cast<double>(checks));
    INFO("worst cross-correlation gap " << worst_cross);
    REQUIRE(worst_cross < corr_bound);
}

TEST_CASE("two-sample z-statistics stay within +-4 on 95 percent of columns") {
    const Dataset ds = make_gaussian_dataset(1200, 5, 77);
    const GaussianModel model = estimate_gaussian(ds, 1e-6);
    const double n = static_cast<double>(ds.n);

    size_t checks = 0, hits = 0;
    for (uint64_t seed = 100; seed < 130; ++seed) {
        const KnockoffResult kr = sample_knockoffs(ds, model, seed);
        for (size_t j = 0; j < ds.d; ++j) {
            const std::vector<double> f = ds.features.column(j);
            const std::vector<double> kf = kr.knockoffs.column(j);
            const double v1 = stats::variance(f), v2 = stats::variance(kf);
            const double z_mean = (stats::mean(kf) - stats::mean(f)) / std::sqrt((v1 + v2) / n);
            const double z_var =
                (v2 - v1) / std::sqrt(2.0 * (v1 * v1 + v2 * v2) / n);
            ++checks;
            if (std::abs(z_mean) <= 4.0 && std::abs(z_var) <= 4.0) ++hits;
        }
    }
    REQUIRE(static_cast<double>(hits) >= 0.95 * static_cast<double>(checks));
}

TEST_CASE("score is 1 when a feature equals every knockoff column") {
    Matrix m(12, 2);
    Rng rng(3);
    for (size_t i = 0; i < 12; ++i) {
        m(i, 0) = rng.normal();
        m(i, 1) = rng.normal();
    }
    std::vector<double> means, stds;
    std::vector<bool> constant;
    detail::standardize_columns(m, means, stds, constant);
    const Dataset ds = from_matrix(std::move(m));

    KnockoffResult kr;
    kr.knockoffs = Matrix(12, 2);
    for (size_t i = 0; i < 12; ++i) {
        kr.knockoffs(i, 0) = ds.features(i, 0);
        kr.knockoffs(i, 1) = 2.0 * ds.features(i, 0);  // |pearson| is scale invariant
    }
    score_features(ds, kr);
    REQUIRE_THAT(kr.scores[0], WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(kr.distances[0], WithinAbs(0.0, 1e-12));
}

TEST_CASE("score is 0 for a feature orthogonal to all knockoff columns") {
    const std::vector<double> u{1, -1, 1, -1, 1, -1, 1, -1};
    const std::vector<double> v{1, 1, -1, -1, 1, 1, -1, -1};
    Matrix m(8, 2);
    for (size_t i = 0; i < 8; ++i) {
        m(i, 0) = u[i];
        m(i, 1) = v[i];
    }
    const Dataset ds = from_matrix(std::move(m));
    KnockoffResult kr;
    kr.knockoffs = Matrix(8, 2);
    const std::vector<double> w{1, 1, 1, 1, -1, -1, -1, -1};  // orthogonal to u
    for (size_t i = 0; i < 8; ++i) {
        kr.knockoffs(i, 0) = w[i];
        kr.knockoffs(i, 1) = -w[i];
    }
    score_features(ds, kr);
    REQUIRE_THAT(kr.scores[0], WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(kr.distances[0], WithinAbs(1.0, 1e-12));
}

TEST_CASE("hand-built correlations 0.2 and 0.6 average to score 0.4") {
    const std::vector<double> u{1, -1, 1, -1, 1, -1, 1, -1};
    const std::vector<double> v{1, 1, -1, -1, 1, 1, -1, -1};
    Matrix m(8, 2);
    for (size_t i = 0; i < 8; ++i) {
        m(i, 0) = u[i];
        m(i, 1) = v[i];
    }
    const Dataset ds = from_matrix(std::move(m));

    KnockoffResult kr;
    kr.knockoffs = Matrix(8, 2);
    for (size_t i = 0; i < 8; ++i) {
        kr.knockoffs(i, 0) = 0.2 * u[i] + std::sqrt(1 - 0.04) * v[i];
        kr.knockoffs(i, 1) = 0.6 * u[i] - std::sqrt(1 - 0.36) * v[i];
    }
    // confirm the construction with the independent textbook formula
    REQUIRE_THAT(oracle::pearson(ds.features.column(0), kr.knockoffs.column(0)),
                 WithinAbs(0.2, 1e-12));
    REQUIRE_THAT(oracle::pearson(ds.features.column(0), kr.knockoffs.column(1)),
                 WithinAbs(0.6, 1e-12));

    score_features(ds, kr);
    REQUIRE_THAT(kr.scores[0], WithinAbs(0.4, 1e-12));
}

TEST_CASE("zero-variance columns contribute zero correlation") {
    Matrix m(6, 2);
    for (size_t i = 0; i < 6; ++i) {
        m(i, 0) = static_cast<double>(i);
        m(i, 1) = 0.0;  // standardized constant column
    }
    const Dataset ds = from_matrix(std::move(m));
    KnockoffResult kr;
    kr.knockoffs = ds.features;
    score_features(ds, kr);
    REQUIRE(kr.scores[1] == 0.0);
}

TEST_CASE("mean threshold labels follow the rule") {
    KnockoffResult kr;
    kr.distances = {0.1, 0.1, 0.1, 0.9};
    assign_pseudo_labels(kr, ThresholdMode::Mean);
    REQUIRE_THAT(kr.threshold, WithinAbs(0.3, 1e-12));
    REQUIRE(kr.labels == std::vector<int>{0, 0, 0, 1});
}

TEST_CASE("equal distances all get the positive label") {
    KnockoffResult kr;
    kr.distances = {0.4, 0.4, 0.4};
    assign_pseudo_labels(kr, ThresholdMode::Mean);
    REQUIRE(kr.labels == std::vector<int>{1, 1, 1});
}

TEST_CASE("median splits near-identical distances that the mean keeps together") {
    // profile in the style of the distance plots: two features stand far
    // from the knockoff matrix, the rest sit in a tight band
    KnockoffResult kr;
    kr.distances = {0.30, 0.31, 0.32, 0.33, 0.34, 0.35, 0.36, 0.37, 0.90, 0.95};

    assign_pseudo_labels(kr, ThresholdMode::Mean);
    REQUIRE(kr.labels == std::vector<int>{0, 0, 0, 0, 0, 0, 0, 0, 1, 1});

    assign_pseudo_labels(kr, ThresholdMode::Median);
    bool confused = false;
    for (size_t i = 0; i < kr.distances.size(); ++i) {
        for (size_t j = i + 1; j < kr.distances.size(); ++j) {
            if (std::abs(kr.distances[i] - kr.distances[j]) < 0.02 &&
                kr.labels[i] != kr.labels[j]) {
                confused = true;
            }
        }
    }
    REQUIRE(confused);
}

TEST_CASE("labels are a function of distances: permutation equivariance") {
    KnockoffResult kr;
    kr.distances = {0.12, 0.55, 0.31, 0.78, 0.44};
    assign_pseudo_labels(kr, ThresholdMode::Mean);
    const std::vector<int> labels = kr.labels;

    const std::vector<size_t> perm{3, 0, 4, 1, 2};
    KnockoffResult kp;
    kp.distances.resize(kr.distances.size());
    for (size_t i = 0; i < perm.size(); ++i) kp.distances[i] = kr.distances[perm[i]];
    assign_pseudo_labels(kp, ThresholdMode::Mean);
    for (size_t i = 0; i < perm.size(); ++i) REQUIRE(kp.labels[i] == labels[perm[i]]);
}

TEST_CASE("own-column score mode keeps distances in [0,1]") {
    const Dataset ds = make_gaussian_dataset(400, 5, 17);
    const GaussianModel model = estimate_gaussian(ds, 1e-6);
    KnockoffResult kr = sample_knockoffs(ds, model, 2);
    score_features(ds, kr, ScoreMode::OwnColumn);
    for (size_t j = 0; j < ds.d; ++j) {
        REQUIRE(kr.distances[j] >= 0.0);
        REQUIRE(kr.distances[j] <= 1.0);
        REQUIRE_THAT(kr.scores[j] + kr.distances[j], WithinAbs(1.0, 1e-12));
    }
}
