#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "kofs/common.hpp"
#include "kofs/dataset.hpp"

namespace kofs {

enum class ModelKind {
    LogisticRegression,
    KNearest,
    DecisionTree,
    LinearRegression,
    KNearestReg,
    RegressionTree
};

inline const char* to_string(ModelKind m) {
    switch (m) {
        case ModelKind::LogisticRegression: return "logistic_regression";
        case ModelKind::KNearest: return "knn";
        case ModelKind::DecisionTree: return "decision_tree";
        case ModelKind::LinearRegression: return "linear_regression";
        case ModelKind::KNearestReg: return "knn_regressor";
        case ModelKind::RegressionTree: return "regression_tree";
    }
    return "?";
}

inline std::vector<ModelKind> models_for(Task task) {
    if (task == Task::Classification) {
        return {ModelKind::LogisticRegression, ModelKind::KNearest, ModelKind::DecisionTree};
    }
    return {ModelKind::LinearRegression, ModelKind::KNearestReg, ModelKind::RegressionTree};
}

struct ModelParams {
    size_t knn_k = 5;
    size_t tree_depth = 6;
    size_t gd_epochs = 300;
};

// ACC = (TP+TN)/(TP+TN+FP+FN) for classification; l2 = |y - y_hat|^2 summed
// over the test set for regression. Exactly one of the two is meaningful per
// task. For more than two classes the counts collapse to correct/incorrect
// (TP = correct, FP = incorrect) so the identity and the count-sum invariant
// still hold.
struct EvalMetrics {
    Task task = Task::Classification;
    double acc = 0.0;
    double l2 = 0.0;
    long tp = 0, tn = 0, fp = 0, fn = 0;
    std::string model_name;
    size_t train_size = 0;
    size_t test_size = 0;
    bool degenerate = false;  // single-class training data, majority predictor used
};

// Counts every downstream model fit; the selection loop must leave it at 0.
struct EvalCounter {
    size_t invocations = 0;
};

namespace detail {

inline Matrix masked_columns(const Dataset& ds, const std::vector<uint8_t>& mask) {
    size_t p = 0;
    for (uint8_t b : mask) p += b;
    Matrix out(ds.n, p);
    size_t c = 0;
    for (size_t j = 0; j < ds.d; ++j) {
        if (!mask[j]) continue;
        for (size_t i = 0; i < ds.n; ++i) out(i, c) = ds.features(i, j);
        ++c;
    }
    return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        acc += t * t;
    }
    return acc;
}

// Largest eigenvalue of X^T X / n via power iteration; used to pick a safe
// gradient-descent step size.
inline double power_iteration_lambda_max(const Matrix& x) {
    const size_t n = x.rows(), p = x.cols();
    if (p == 0) return 1.0;
    std::vector<double> v(p, 1.0 / std::sqrt(static_cast<double>(p)));
    std::vector<double> xv(n), w(p);
    double lambda = 1.0;
    for (int it = 0; it < 30; ++it) {
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            const std::span<const double> row = x.row(i);
            for (size_t j = 0; j < p; ++j) acc += row[j] * v[j];
            xv[i] = acc;
        }
        for (size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) acc += x(i, j) * xv[i];
            w[j] = acc / static_cast<double>(n);
        }
        double norm = 0.0;
        for (double t : w) norm += t * t;
        norm = std::sqrt(norm);
        if (norm < 1e-12) return 1.0;
        lambda = norm;
        for (size_t j = 0; j < p; ++j) v[j] = w[j] / norm;
    }
    return std::max(lambda, 1e-6);
}

// Multinomial softmax regression trained with plain gradient descent.
class SoftmaxRegression {
public:
    void train(const Matrix& x, const std::vector<double>& y, size_t classes, size_t epochs) {
        classes_ = std::max<size_t>(classes, 1);
        const size_t n = x.rows(), p = x.cols();
        w_ = Matrix(classes_, p + 1);
        const double lr = 2.0 / (power_iteration_lambda_max(x) + 1.0);
        std::vector<double> logits(classes_), probs(classes_);
        Matrix grad(classes_, p + 1);
        for (size_t epoch = 0; epoch < epochs; ++epoch) {
            grad = Matrix(classes_, p + 1);
            for (size_t i = 0; i < n; ++i) {
                predict_proba(x.row(i), logits, probs);
                const size_t yi = static_cast<size_t>(y[i]);
                for (size_t c = 0; c < classes_; ++c) {
                    const double delta = probs[c] - (c == yi ? 1.0 : 0.0);
                    for (size_t j = 0; j < p; ++j) grad(c, j) += delta * x(i, j);
                    grad(c, p) += delta;
                }
            }
            for (size_t c = 0; c < classes_; ++c) {
                for (size_t j = 0; j <= p; ++j) w_(c, j) -= lr * grad(c, j) / static_cast<double>(n);
            }
        }
    }

    double predict(std::span<const double> x) const {
        std::vector<double> logits(classes_), probs(classes_);
        predict_proba(x, logits, probs);
        return static_cast<double>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    }

private:
    void predict_proba(std::span<const double> x, std::vector<double>& logits,
                       std::vector<double>& probs) const {
        const size_t p = w_.cols() - 1;
        for (size_t c = 0; c < classes_; ++c) {
            double acc = w_(c, p);
            for (size_t j = 0; j < p; ++j) acc += w_(c, j) * x[j];
            logits[c] = acc;
        }
        const double m = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (size_t c = 0; c < classes_; ++c) {
            probs[c] = std::exp(logits[c] - m);
            z += probs[c];
        }
        for (size_t c = 0; c < classes_; ++c) probs[c] /= z;
    }

    Matrix w_;
    size_t classes_ = 1;
};

class LinearGd {
public:
    void train(const Matrix& x, const std::vector<double>& y, size_t epochs) {
        const size_t n = x.rows(), p = x.cols();
        w_.assign(p + 1, 0.0);
        // MSE Hessian is 2 X^T X / n; the +1 covers the bias direction
        const double lr = 0.8 / (std::max(power_iteration_lambda_max(x), 1.0) + 1.0);
        std::vector<double> grad(p + 1);
        for (size_t epoch = 0; epoch < epochs; ++epoch) {
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t i = 0; i < n; ++i) {
                const double err = predict(x.row(i)) - y[i];
                for (size_t j = 0; j < p; ++j) grad[j] += err * x(i, j);
                grad[p] += err;
            }
            for (size_t j = 0; j <= p; ++j) w_[j] -= lr * 2.0 * grad[j] / static_cast<double>(n);
        }
    }

    double predict(std::span<const double> x) const {
        double acc = w_.back();
        for (size_t j = 0; j + 1 < w_.size(); ++j) acc += w_[j] * x[j];
        return acc;
    }

private:
    std::vector<double> w_;
};

template <typename Label>
class KnnModel {
public:
    void train(const Matrix& x, const std::vector<double>& y, size_t k) {
        x_ = &x;
        y_ = &y;
        k_ = std::min(std::max<size_t>(k, 1), x.rows());
    }

    double predict(std::span<const double> q, bool classification, size_t classes) const {
        const size_t n = x_->rows();
        std::vector<std::pair<double, size_t>> dist(n);
        for (size_t i = 0; i < n; ++i) dist[i] = {squared_distance(x_->row(i), q), i};
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
        if (classification) {
            std::vector<size_t> votes(classes, 0);
            for (size_t i = 0; i < k_; ++i) ++votes[static_cast<size_t>((*y_)[dist[i].second])];
            return static_cast<double>(std::max_element(votes.begin(), votes.end()) - votes.begin());
        }
        double acc = 0.0;
        for (size_t i = 0; i < k_; ++i) acc += (*y_)[dist[i].second];
        return acc / static_cast<double>(k_);
    }

private:
    const Matrix* x_ = nullptr;
    const std::vector<double>* y_ = nullptr;
    size_t k_ = 1;
};

// Greedy binary tree: Gini impurity for classification, variance for
// regression. Thresholds are midpoints between consecutive sorted values.
class Tree {
public:
    void train(const Matrix& x, const std::vector<double>& y, bool classification, size_t classes,
               size_t max_depth) {
        classification_ = classification;
        classes_ = classes;
        std::vector<size_t> idx(x.rows());
        std::iota(idx.begin(), idx.end(), size_t{0});
        root_ = build(x, y, idx, max_depth);
    }

    double predict(std::span<const double> q) const {
        const Node* node = root_.get();
        while (node->feature >= 0) {
            node = q[static_cast<size_t>(node->feature)] <= node->threshold ? node->left.get()
                                                                            : node->right.get();
        }
        return node->value;
    }

private:
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        double value = 0.0;
        std::unique_ptr<Node> left, right;
    };

    double leaf_value(const std::vector<double>& y, const std::vector<size_t>& idx) const {
        if (classification_) {
            std::vector<size_t> counts(classes_, 0);
            for (size_t i : idx) ++counts[static_cast<size_t>(y[i])];
            return static_cast<double>(std::max_element(counts.begin(), counts.end()) -
                                       counts.begin());
        }
        double acc = 0.0;
        for (size_t i : idx) acc += y[i];
        return idx.empty() ? 0.0 : acc / static_cast<double>(idx.size());
    }

    double impurity(const std::vector<double>& y, const std::vector<size_t>& idx) const {
        if (idx.empty()) return 0.0;
        if (classification_) {
            std::vector<double> counts(classes_, 0.0);
            for (size_t i : idx) counts[static_cast<size_t>(y[i])] += 1.0;
            double g = 1.0;
            for (double c : counts) {
                const double p = c / static_cast<double>(idx.size());
                g -= p * p;
            }
            return g;
        }
        double mean = 0.0;
        for (size_t i : idx) mean += y[i];
        mean /= static_cast<double>(idx.size());
        double var = 0.0;
        for (size_t i : idx) var += (y[i] - mean) * (y[i] - mean);
        return var / static_cast<double>(idx.size());
    }

    std::unique_ptr<Node> build(const Matrix& x, const std::vector<double>& y,
                                const std::vector<size_t>& idx, size_t depth) {
        auto node = std::make_unique<Node>();
        node->value = leaf_value(y, idx);
        if (depth == 0 || idx.size() < 2) return node;
        const double base = impurity(y, idx);
        if (base < 1e-12) return node;

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_score = base;
        std::vector<size_t> sorted = idx;
        for (size_t j = 0; j < x.cols(); ++j) {
            std::sort(sorted.begin(), sorted.end(),
                      [&](size_t a, size_t b) { return x(a, j) < x(b, j); });
            for (size_t cut = 1; cut < sorted.size(); ++cut) {
                if (x(sorted[cut - 1], j) == x(sorted[cut], j)) continue;
                const std::vector<size_t> left(sorted.begin(),
                                               sorted.begin() + static_cast<std::ptrdiff_t>(cut));
                const std::vector<size_t> right(sorted.begin() + static_cast<std::ptrdiff_t>(cut),
                                                sorted.end());
                const double score =
                    (impurity(y, left) * static_cast<double>(left.size()) +
                     impurity(y, right) * static_cast<double>(right.size())) /
                    static_cast<double>(idx.size());
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feature = static_cast<int>(j);
                    best_threshold = 0.5 * (x(sorted[cut - 1], j) + x(sorted[cut], j));
                }
            }
        }
        if (best_feature < 0) return node;

        std::vector<size_t> left, right;
        for (size_t i : idx) {
            (x(i, static_cast<size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
        }
        if (left.empty() || right.empty()) return node;
        node->feature = best_feature;
        node->threshold = best_threshold;
        node->left = build(x, y, left, depth - 1);
        node->right = build(x, y, right, depth - 1);
        return node;
    }

    bool classification_ = true;
    size_t classes_ = 2;
    std::unique_ptr<Node> root_;
};

inline size_t class_count(const Dataset& train, const Dataset& test) {
    if (!train.class_names.empty()) return train.class_names.size();
    double mx = 0.0;
    for (double v : *train.target) mx = std::max(mx, v);
    for (double v : *test.target) mx = std::max(mx, v);
    return static_cast<size_t>(mx) + 1;
}

}  // namespace detail

inline EvalMetrics metrics_from_predictions(Task task, const std::vector<double>& y_true,
                                            const std::vector<double>& y_pred, size_t classes) {
    EvalMetrics m;
    m.task = task;
    m.test_size = y_true.size();
    if (task == Task::Regression) {
        double acc = 0.0;
        for (size_t i = 0; i < y_true.size(); ++i) {
            const double e = y_true[i] - y_pred[i];
            acc += e * e;
        }
        m.l2 = acc;
        return m;
    }
    if (classes == 2) {
        for (size_t i = 0; i < y_true.size(); ++i) {
            const bool pos_true = y_true[i] == 1.0;
            const bool pos_pred = y_pred[i] == 1.0;
            if (pos_true && pos_pred) ++m.tp;
            else if (!pos_true && !pos_pred) ++m.tn;
            else if (!pos_true && pos_pred) ++m.fp;
            else ++m.fn;
        }
    } else {
        for (size_t i = 0; i < y_true.size(); ++i) {
            if (y_true[i] == y_pred[i]) ++m.tp;
            else ++m.fp;
        }
    }
    m.acc = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.tp + m.tn + m.fp + m.fn);
    return m;
}

// Trains one downstream model on the masked train columns and scores it on
// the masked test columns. The model sees only the masked submatrix.
inline EvalMetrics train_eval(const Dataset& train, const Dataset& test,
                              const std::vector<uint8_t>& mask, ModelKind model,
                              const ModelParams& params = {}, EvalCounter* counter = nullptr) {
    if (!train.target || !test.target) throw DataError("train_eval: dataset has no target");
    size_t selected = 0;
    for (uint8_t b : mask) selected += b;
    if (selected == 0) throw DataError("train_eval: mask selects no features");
    if (counter) ++counter->invocations;

    const Matrix xtr = detail::masked_columns(train, mask);
    const Matrix xte = detail::masked_columns(test, mask);
    const std::vector<double>& ytr = *train.target;
    const std::vector<double>& yte = *test.target;

    const bool classification = train.task == Task::Classification;
    const size_t classes = classification ? detail::class_count(train, test) : 0;

    bool degenerate = false;
    if (classification) {
        double first = ytr.front();
        degenerate = std::all_of(ytr.begin(), ytr.end(), [&](double v) { return v == first; });
    }

    std::vector<double> pred(yte.size());
    if (degenerate) {
        std::fill(pred.begin(), pred.end(), ytr.front());
    } else {
        switch (model) {
            case ModelKind::LogisticRegression: {
                detail::SoftmaxRegression m;
                m.train(xtr, ytr, classes, params.gd_epochs);
                for (size_t i = 0; i < yte.size(); ++i) pred[i] = m.predict(xte.row(i));
                break;
            }
            case ModelKind::KNearest:
            case ModelKind::KNearestReg: {
                detail::KnnModel<double> m;
                m.train(xtr, ytr, params.knn_k);
                for (size_t i = 0; i < yte.size(); ++i) {
                    pred[i] = m.predict(xte.row(i), classification, classes);
                }
                break;
            }
            case ModelKind::DecisionTree:
            case ModelKind::RegressionTree: {
                detail::Tree m;
                m.train(xtr, ytr, classification, classes, params.tree_depth);
                for (size_t i = 0; i < yte.size(); ++i) pred[i] = m.predict(xte.row(i));
                break;
            }
            case ModelKind::LinearRegression: {
                detail::LinearGd m;
                m.train(xtr, ytr, params.gd_epochs);
                for (size_t i = 0; i < yte.size(); ++i) pred[i] = m.predict(xte.row(i));
                break;
            }
        }
    }

    EvalMetrics m = metrics_from_predictions(train.task, yte, pred, classes);
    m.model_name = to_string(model);
    m.train_size = train.n;
    m.test_size = test.n;
    m.degenerate = degenerate;
    return m;
}

enum class ComparatorMethod { Selected, AllFeatures, RandomHalf, RandomReward };

inline const char* to_string(ComparatorMethod m) {
    switch (m) {
        case ComparatorMethod::Selected: return "selected";
        case ComparatorMethod::AllFeatures: return "all_features";
        case ComparatorMethod::RandomHalf: return "random_half";
        case ComparatorMethod::RandomReward: return "random_reward";
    }
    return "?";
}

struct ComparatorResult {
    ComparatorMethod method = ComparatorMethod::Selected;
    std::vector<double> per_model_metric;  // acc or l2, one per downstream model
    double mean_metric = 0.0;
    std::vector<int> ranks;                // 1 = best, per model
    double mean_rank = 0.0;
};

inline std::vector<uint8_t> random_half_mask(size_t d, uint64_t seed) {
    const size_t take = (d + 1) / 2;  // ceil(d/2)
    Rng rng(seed);
    const std::vector<size_t> perm = rng.permutation(d);
    std::vector<uint8_t> mask(d, 0);
    for (size_t i = 0; i < take; ++i) mask[perm[i]] = 1;
    return mask;
}

// Evaluates the selected mask against the paper-style comparators on one
// shared train/test split. RandomHalf is averaged over `half_seeds` masks.
inline std::vector<ComparatorResult> compare(
    const Dataset& train, const Dataset& test, const std::vector<uint8_t>& selected_mask,
    const std::optional<std::vector<uint8_t>>& random_reward_mask, const ModelParams& params,
    uint64_t seed, size_t half_seeds = 5, EvalCounter* counter = nullptr) {
    const std::vector<ModelKind> models = models_for(train.task);
    const size_t d = train.d;

    std::vector<ComparatorResult> rows;
    auto eval_mask = [&](const std::vector<uint8_t>& mask) {
        std::vector<double> vals;
        for (ModelKind mk : models) {
            const EvalMetrics m = train_eval(train, test, mask, mk, params, counter);
            vals.push_back(train.task == Task::Classification ? m.acc : m.l2);
        }
        return vals;
    };

    {
        ComparatorResult r;
        r.method = ComparatorMethod::Selected;
        r.per_model_metric = eval_mask(selected_mask);
        rows.push_back(std::move(r));
    }
    {
        ComparatorResult r;
        r.method = ComparatorMethod::AllFeatures;
        r.per_model_metric = eval_mask(std::vector<uint8_t>(d, 1));
        rows.push_back(std::move(r));
    }
    {
        ComparatorResult r;
        r.method = ComparatorMethod::RandomHalf;
        r.per_model_metric.assign(models.size(), 0.0);
        for (size_t s = 0; s < half_seeds; ++s) {
            const std::vector<double> vals = eval_mask(random_half_mask(d, derive_seed(seed, 0x8a1f + s)));
            for (size_t k = 0; k < vals.size(); ++k) r.per_model_metric[k] += vals[k];
        }
        for (double& v : r.per_model_metric) v /= static_cast<double>(half_seeds);
        rows.push_back(std::move(r));
    }
    if (random_reward_mask) {
        ComparatorResult r;
        r.method = ComparatorMethod::RandomReward;
        r.per_model_metric = eval_mask(*random_reward_mask);
        rows.push_back(std::move(r));
    }

    const bool higher_better = train.task == Task::Classification;
    for (auto& r : rows) {
        r.mean_metric = std::accumulate(r.per_model_metric.begin(), r.per_model_metric.end(), 0.0) /
                        static_cast<double>(r.per_model_metric.size());
        r.ranks.assign(models.size(), 0);
    }
    for (size_t k = 0; k < models.size(); ++k) {
        std::vector<size_t> order(rows.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return higher_better ? rows[a].per_model_metric[k] > rows[b].per_model_metric[k]
                                 : rows[a].per_model_metric[k] < rows[b].per_model_metric[k];
        });
        for (size_t pos = 0; pos < order.size(); ++pos) {
            rows[order[pos]].ranks[k] = static_cast<int>(pos + 1);
        }
    }
    for (auto& r : rows) {
        r.mean_rank = std::accumulate(r.ranks.begin(), r.ranks.end(), 0.0) /
                      static_cast<double>(r.ranks.size());
    }
    return rows;
}

// Wall-clock per pipeline phase plus the downstream-invocation count during
// selection, which unsupervised mode keeps at zero.
struct TimeProfile {
    double ingest_s = 0.0;
    double knockoff_s = 0.0;
    double autoencoder_s = 0.0;
    double pretrain_s = 0.0;
    double episodes_s = 0.0;
    double evaluation_s = 0.0;
    double total_s = 0.0;
    size_t downstream_invocations_during_selection = 0;

    double phase_sum() const {
        return ingest_s + knockoff_s + autoencoder_s + pretrain_s + episodes_s + evaluation_s;
    }
};

}  // namespace kofs
