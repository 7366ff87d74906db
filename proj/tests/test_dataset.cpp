#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kofs/dataset.hpp"
#include "kofs/synthetic.hpp"

using namespace kofs;
using Catch::Matchers::WithinAbs;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("load_csv standardizes with the population std") {
    const std::string path = write_temp("kofs_basic.csv",
                                        "a,b,target\n"
                                        "1,10,0\n"
                                        "2,20,1\n"
                                        "3,30,0\n");
    const Dataset ds = load_csv(path, std::string("target"), Task::Classification);
    REQUIRE(ds.n == 3);
    REQUIRE(ds.d == 2);
    REQUIRE(ds.feature_names == std::vector<std::string>{"a", "b"});
    // population std of {1,2,3} is sqrt(2/3)
    REQUIRE_THAT(ds.features(0, 0), WithinAbs(-1.224744871391589, 1e-12));
    REQUIRE_THAT(ds.features(1, 0), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(ds.features(2, 0), WithinAbs(1.224744871391589, 1e-12));
    REQUIRE(ds.target.has_value());
    REQUIRE(ds.target->size() == 3);
}

TEST_CASE("load_csv without target keeps the full feature set") {
    const std::string path = write_temp("kofs_notarget.csv", "a,b\n1,4\n2,5\n3,7\n");
    const Dataset ds = load_csv(path, std::nullopt, Task::Classification);
    REQUIRE_FALSE(ds.target.has_value());
    REQUIRE(ds.d == 2);
}

TEST_CASE("standardized columns have zero mean and unit std") {
    const Dataset ds = make_gaussian_dataset(500, 6, 42);
    for (size_t j = 0; j < ds.d; ++j) {
        const std::vector<double> col = ds.features.column(j);
        REQUIRE(std::abs(stats::mean(col)) < 1e-9);
        REQUIRE(std::abs(stats::stddev(col) - 1.0) < 1e-6);
    }
}

TEST_CASE("standardization is idempotent") {
    Dataset ds = make_gaussian_dataset(200, 4, 7);
    Matrix before = ds.features;
    std::vector<double> means, stds;
    std::vector<bool> constant;
    detail::standardize_columns(ds.features, means, stds, constant);
    for (size_t i = 0; i < ds.n; ++i) {
        for (size_t j = 0; j < ds.d; ++j) {
            REQUIRE(std::abs(ds.features(i, j) - before(i, j)) < 1e-9);
        }
    }
}

TEST_CASE("constant columns are flagged and zeroed") {
    const std::string path = write_temp("kofs_const.csv", "a,c\n1,5\n2,5\n3,5\n4,5\n");
    const Dataset ds = load_csv(path, std::nullopt, Task::Regression);
    REQUIRE(ds.constant_columns[1]);
    REQUIRE_FALSE(ds.constant_columns[0]);
    REQUIRE(ds.column_stds[1] == 0.0);
    for (size_t i = 0; i < ds.n; ++i) REQUIRE(ds.features(i, 1) == 0.0);
}

TEST_CASE("rows with missing values are dropped and counted") {
    const std::string path = write_temp("kofs_missing.csv",
                                        "# comment line\n"
                                        "a,b\n"
                                        "1,2\n"
                                        ",3\n"
                                        "4,NA\n"
                                        "5,6\n"
                                        "7,?\n"
                                        "8,9\n");
    const Dataset ds = load_csv(path, std::nullopt, Task::Regression);
    REQUIRE(ds.n == 3);
    REQUIRE(ds.dropped_rows == 3);
}

TEST_CASE("load_csv error paths") {
    REQUIRE_THROWS_AS(load_csv("/nonexistent/nowhere.csv", std::nullopt, Task::Regression),
                      DataError);

    const std::string bad = write_temp("kofs_bad.csv", "a,b\n1,2\nx,4\n");
    REQUIRE_THROWS_WITH(load_csv(bad, std::nullopt, Task::Regression),
                        Catch::Matchers::ContainsSubstring("row 3") &&
                            Catch::Matchers::ContainsSubstring("'a'"));

    const std::string ok = write_temp("kofs_ok.csv", "a,b\n1,2\n3,4\n");
    REQUIRE_THROWS_AS(load_csv(ok, std::string("zz"), Task::Regression), DataError);
    REQUIRE_THROWS_AS(load_csv(ok, std::string("b"), Task::Regression), DataError);  // d < 2 left
}

TEST_CASE("classification targets are label-encoded by first appearance") {
    const std::string path = write_temp("kofs_labels.csv",
                                        "a,b,y\n1,2,cat\n2,3,dog\n3,4,cat\n4,5,bird\n");
    const Dataset ds = load_csv(path, std::string("y"), Task::Classification);
    REQUIRE(ds.class_names == std::vector<std::string>{"cat", "dog", "bird"});
    REQUIRE((*ds.target) == std::vector<double>{0, 1, 0, 2});
}

TEST_CASE("split respects the floor rule and determinism") {
    const std::string rows = [] {
        std::string s = "a,b,y\n";
        for (int i = 0; i < 10; ++i) {
            s += std::to_string(i) + "," + std::to_string(i * i) + "," + std::to_string(i % 2) + "\n";
        }
        return s;
    }();
    const std::string path = write_temp("kofs_split.csv", rows);
    const Dataset ds = load_csv(path, std::string("y"), Task::Classification);

    const auto [tr1, te1] = split(ds, {0.8, 7});
    REQUIRE(tr1.n == 8);
    REQUIRE(te1.n == 2);

    const auto [tr2, te2] = split(ds, {0.8, 7});
    REQUIRE(tr1.features == tr2.features);
    REQUIRE(te1.features == te2.features);
    REQUIRE(*tr1.target == *tr2.target);

    // disjoint and covering: the raw values reconstruct the full multiset
    std::vector<double> all;
    for (size_t i = 0; i < tr1.n; ++i) {
        all.push_back(tr1.features(i, 0) * tr1.column_stds[0] + tr1.column_means[0]);
    }
    for (size_t i = 0; i < te1.n; ++i) {
        all.push_back(te1.features(i, 0) * tr1.column_stds[0] + tr1.column_means[0]);
    }
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 10; ++i) REQUIRE_THAT(all[static_cast<size_t>(i)], WithinAbs(i, 1e-9));
}

TEST_CASE("split sizes on odd n follow floor(train_fraction * n)") {
    Dataset ds = make_gaussian_dataset(999, 3, 1);
    ds.target = std::vector<double>(999, 0.0);
    const auto [tr, te] = split(ds, {0.5, 3});
    REQUIRE(tr.n == 499);
    REQUIRE(te.n == 500);
}

TEST_CASE("split rejects degenerate fractions") {
    const Dataset ds = make_gaussian_dataset(10, 3, 1);
    REQUIRE_THROWS_AS(split(ds, {0.0, 1}), ConfigError);
    REQUIRE_THROWS_AS(split(ds, {1.0, 1}), ConfigError);
    REQUIRE_THROWS_AS(split(ds, {0.01, 1}), DataError);  // empty train side
}

TEST_CASE("test split reuses train standardization statistics") {
    const Dataset ds = make_gaussian_dataset(300, 4, 11);
    Dataset with_target = ds;
    with_target.target = std::vector<double>(ds.n, 1.0);
    const auto [tr, te] = split(with_target, {0.8, 5});
    for (size_t j = 0; j < tr.d; ++j) {
        const std::vector<double> col = tr.features.column(j);
        REQUIRE(std::abs(stats::mean(col)) < 1e-9);
        REQUIRE(std::abs(stats::stddev(col) - 1.0) < 1e-6);
        REQUIRE(tr.column_means[j] == te.column_means[j]);
        REQUIRE(tr.column_stds[j] == te.column_stds[j]);
    }
}

TEST_CASE("CSV round-trip preserves the matrix within 1e-12") {
    const Dataset ds = make_gaussian_dataset(50, 5, 99);
    const std::string path =
        (std::filesystem::temp_directory_path() / "kofs_roundtrip.csv").string();
    save_csv(ds, path);
    const Dataset back = load_csv(path, std::nullopt, Task::Regression);
    REQUIRE(back.n == ds.n);
    REQUIRE(back.d == ds.d);
    for (size_t i = 0; i < ds.n; ++i) {
        for (size_t j = 0; j < ds.d; ++j) {
            REQUIRE_THAT(back.features(i, j), WithinAbs(ds.features(i, j), 1e-12));
        }
    }
}

TEST_CASE("benchmark stand-ins have the documented shapes") {
    const auto dir = std::filesystem::temp_directory_path() / "kofs_bench";
    std::filesystem::create_directories(dir);

    const Dataset german = load_benchmark(BenchmarkKind::GermanCredit, 0, dir.string());
    REQUIRE(german.n == 1000);
    REQUIRE(german.d == 24);
    REQUIRE(german.task == Task::Classification);

    const Dataset wine = load_benchmark(BenchmarkKind::WineRed, 0, dir.string());
    REQUIRE(wine.n == 999);
    REQUIRE(wine.d == 11);

    const Dataset iono = load_benchmark(BenchmarkKind::Ionosphere, 0, dir.string());
    REQUIRE(iono.n == 351);
    REQUIRE(iono.d == 34);

    const Dataset housing = load_benchmark(BenchmarkKind::HousingBoston, 0, dir.string());
    REQUIRE(housing.n == 506);
    REQUIRE(housing.d == 13);
    REQUIRE(housing.task == Task::Regression);
}
