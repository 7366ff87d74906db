#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kofs/common.hpp"

namespace kofs {

enum class Activation { Identity, ReLU, Tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation: " + s);
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
    }
    return z;
}

inline double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

struct Layer {
    Matrix w;  // out x in
    std::vector<double> b;
    Activation act = Activation::Identity;

    size_t fan_in() const { return w.cols(); }
    size_t fan_out() const { return w.rows(); }
};

struct Gradients {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;

    void scale(double f) {
        for (auto& m : w) {
            for (size_t i = 0; i < m.rows(); ++i) {
                for (size_t j = 0; j < m.cols(); ++j) m(i, j) *= f;
            }
        }
        for (auto& v : b) {
            for (double& x : v) x *= f;
        }
    }

    void accumulate(const Gradients& other) {
        for (size_t l = 0; l < w.size(); ++l) {
            for (size_t i = 0; i < w[l].rows(); ++i) {
                for (size_t j = 0; j < w[l].cols(); ++j) w[l](i, j) += other.w[l](i, j);
            }
            for (size_t i = 0; i < b[l].size(); ++i) b[l][i] += other.b[l][i];
        }
    }
};

// Stores pre- and post-activation values from a forward pass; backward
// needs them and rejects a cache whose shape does not match the network.
struct ForwardCache {
    std::vector<std::vector<double>> pre;   // z per layer
    std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = a_l
};

class DenseNet {
public:
    DenseNet() = default;

    // He init for ReLU layers, Glorot for the rest; biases start at zero.
    static DenseNet make(const std::vector<size_t>& dims, const std::vector<Activation>& acts,
                         uint64_t seed) {
        if (dims.size() < 2 || acts.size() != dims.size() - 1) {
            throw ConfigError("DenseNet::make: dims/activations mismatch");
        }
        DenseNet net;
        net.seed_ = seed;
        Rng rng(derive_seed(seed, 0x11));
        for (size_t l = 0; l + 1 < dims.size(); ++l) {
            Layer layer;
            layer.w = Matrix(dims[l + 1], dims[l]);
            layer.b.assign(dims[l + 1], 0.0);
            layer.act = acts[l];
            const double fan_in = static_cast<double>(dims[l]);
            const double fan_out = static_cast<double>(dims[l + 1]);
            const double scale = acts[l] == Activation::ReLU ? std::sqrt(2.0 / fan_in)
                                                             : std::sqrt(2.0 / (fan_in + fan_out));
            for (size_t i = 0; i < layer.w.rows(); ++i) {
                for (size_t j = 0; j < layer.w.cols(); ++j) layer.w(i, j) = scale * rng.normal();
            }
            net.layers_.push_back(std::move(layer));
        }
        return net;
    }

    size_t input_size() const { return layers_.front().fan_in(); }
    size_t output_size() const { return layers_.back().fan_out(); }
    size_t layer_count() const { return layers_.size(); }
    uint64_t seed() const { return seed_; }

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::vector<double> forward(std::span<const double> x) const {
        ForwardCache cache;
        return forward_cached(x, cache);
    }

    std::vector<double> forward_cached(std::span<const double> x, ForwardCache& cache) const {
        if (x.size() != input_size()) {
            throw NumericError("forward: input length " + std::to_string(x.size()) +
                               " != expected " + std::to_string(input_size()));
        }
        cache.pre.assign(layers_.size(), {});
        cache.post.assign(layers_.size() + 1, {});
        cache.post[0].assign(x.begin(), x.end());
        for (size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            std::vector<double>& z = cache.pre[l];
            z.assign(layer.fan_out(), 0.0);
            const std::vector<double>& a = cache.post[l];
            for (size_t i = 0; i < layer.fan_out(); ++i) {
                double acc = layer.b[i];
                const std::span<const double> row = layer.w.row(i);
                for (size_t j = 0; j < layer.fan_in(); ++j) acc += row[j] * a[j];
                z[i] = acc;
            }
            std::vector<double>& out = cache.post[l + 1];
            out.assign(layer.fan_out(), 0.0);
            for (size_t i = 0; i < layer.fan_out(); ++i) out[i] = activate(layer.act, z[i]);
        }
        return cache.post.back();
    }

    // Backpropagates loss_grad = dL/d(output) through the cached pass.
    Gradients backward(const ForwardCache& cache, std::span<const double> loss_grad) const {
        if (cache.pre.size() != layers_.size() || cache.post.size() != layers_.size() + 1 ||
            cache.post[0].size() != input_size()) {
            throw NumericError("backward: cache does not match network shape");
        }
        if (loss_grad.size() != output_size()) {
            throw NumericError("backward: loss gradient length mismatch");
        }

        Gradients g;
        g.w.resize(layers_.size());
        g.b.resize(layers_.size());

        std::vector<double> delta(loss_grad.begin(), loss_grad.end());
        for (size_t li = layers_.size(); li-- > 0;) {
            const Layer& layer = layers_[li];
            if (cache.pre[li].size() != layer.fan_out()) {
                throw NumericError("backward: stale cache for layer " + std::to_string(li));
            }
            for (size_t i = 0; i < layer.fan_out(); ++i) {
                delta[i] *= activate_grad(layer.act, cache.pre[li][i]);
            }
            g.w[li] = Matrix(layer.fan_out(), layer.fan_in());
            g.b[li].assign(layer.fan_out(), 0.0);
            const std::vector<double>& a_prev = cache.post[li];
            for (size_t i = 0; i < layer.fan_out(); ++i) {
                for (size_t j = 0; j < layer.fan_in(); ++j) g.w[li](i, j) = delta[i] * a_prev[j];
                g.b[li][i] = delta[i];
            }
            if (li > 0) {
                std::vector<double> next(layer.fan_in(), 0.0);
                for (size_t i = 0; i < layer.fan_out(); ++i) {
                    const std::span<const double> row = layer.w.row(i);
                    for (size_t j = 0; j < layer.fan_in(); ++j) next[j] += row[j] * delta[i];
                }
                delta = std::move(next);
            }
        }
        return g;
    }

    bool all_finite() const {
        for (const Layer& l : layers_) {
            if (!l.w.all_finite()) return false;
            for (double v : l.b) {
                if (!std::isfinite(v)) return false;
            }
        }
        return true;
    }

private:
    std::vector<Layer> layers_;
    uint64_t seed_ = 0;
};

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    size_t epochs = 100;
    size_t batch_size = 16;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

// Holds per-parameter moment estimates so Adam state survives across calls.
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

    void step(DenseNet& net, const Gradients& g, double lr) {
        if (cfg_.optimizer == OptimizerKind::SGD) {
            apply_sgd(net, g, lr);
            return;
        }
        ensure_state(net);
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        auto& layers = net.layers();
        for (size_t l = 0; l < layers.size(); ++l) {
            Matrix& w = layers[l].w;
            for (size_t i = 0; i < w.rows(); ++i) {
                for (size_t j = 0; j < w.cols(); ++j) {
                    const double grad = g.w[l](i, j);
                    double& m = mw_[l](i, j);
                    double& v = vw_[l](i, j);
                    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
                    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad * grad;
                    w(i, j) -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
                }
            }
            for (size_t i = 0; i < layers[l].b.size(); ++i) {
                const double grad = g.b[l][i];
                double& m = mb_[l][i];
                double& v = vb_[l][i];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad * grad;
                layers[l].b[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
            }
        }
    }

private:
    void apply_sgd(DenseNet& net, const Gradients& g, double lr) {
        auto& layers = net.layers();
        for (size_t l = 0; l < layers.size(); ++l) {
            Matrix& w = layers[l].w;
            for (size_t i = 0; i < w.rows(); ++i) {
                for (size_t j = 0; j < w.cols(); ++j) w(i, j) -= lr * g.w[l](i, j);
            }
            for (size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] -= lr * g.b[l][i];
        }
    }

    void ensure_state(const DenseNet& net) {
        if (!mw_.empty()) return;
        for (const Layer& l : net.layers()) {
            mw_.emplace_back(l.w.rows(), l.w.cols());
            vw_.emplace_back(l.w.rows(), l.w.cols());
            mb_.emplace_back(l.b.size(), 0.0);
            vb_.emplace_back(l.b.size(), 0.0);
        }
    }

    TrainConfig cfg_;
    long t_ = 0;
    std::vector<Matrix> mw_, vw_;
    std::vector<std::vector<double>> mb_, vb_;
};

// Squared L2 over output dims.
inline double mse_sample_loss(std::span<const double> pred, std::span<const double> target) {
    return squared_l2(pred, target);
}

// Mini-batch training on mean squared error. Returns the per-epoch mean
// sample loss; batches smaller than batch_size at the tail are allowed.
inline std::vector<double> fit(DenseNet& net, const Matrix& inputs, const Matrix& targets,
                               const TrainConfig& cfg) {
    if (inputs.rows() != targets.rows()) throw DataError("fit: row count mismatch");
    if (cfg.learning_rate <= 0.0) throw ConfigError("fit: learning_rate must be positive");
    if (inputs.rows() == 0) throw DataError("fit: empty training set");

    const size_t n = inputs.rows();
    const size_t batch = std::min(cfg.batch_size == 0 ? n : cfg.batch_size, n);
    Optimizer opt(cfg);
    Rng rng(derive_seed(net.seed(), 0xF17));

    std::vector<double> trace;
    trace.reserve(cfg.epochs);
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < n; start += batch) {
            const size_t count = std::min(batch, n - start);
            Gradients acc;
            ForwardCache cache;
            for (size_t k = 0; k < count; ++k) {
                const size_t idx = order[start + k];
                const std::vector<double> pred = net.forward_cached(inputs.row(idx), cache);
                epoch_loss += mse_sample_loss(pred, targets.row(idx));
                std::vector<double> loss_grad(pred.size());
                for (size_t o = 0; o < pred.size(); ++o) {
                    loss_grad[o] = 2.0 * (pred[o] - targets(idx, o));
                }
                Gradients g = net.backward(cache, loss_grad);
                if (k == 0) {
                    acc = std::move(g);
                } else {
                    acc.accumulate(g);
                }
            }
            acc.scale(1.0 / static_cast<double>(count));
            opt.step(net, acc, cfg.learning_rate);
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) {
            throw NumericError("fit diverged: loss is not finite at epoch " + std::to_string(epoch));
        }
        trace.push_back(epoch_loss);
    }
    if (!net.all_finite()) throw NumericError("fit: non-finite parameters after training");
    return trace;
}

// JSON checkpoint: layer sizes header followed by row-major weights.
inline void save_net(const DenseNet& net, const std::string& path) {
    nlohmann::ordered_json j;
    std::vector<size_t> sizes;
    std::vector<std::string> acts;
    sizes.push_back(net.input_size());
    for (const Layer& l : net.layers()) {
        sizes.push_back(l.fan_out());
        acts.emplace_back(to_string(l.act));
    }
    j["sizes"] = sizes;
    j["activations"] = acts;
    j["seed"] = net.seed();
    auto& layers = j["layers"] = nlohmann::ordered_json::array();
    for (const Layer& l : net.layers()) {
        nlohmann::ordered_json jl;
        jl["w"] = l.w.storage();
        jl["b"] = l.b;
        layers.push_back(std::move(jl));
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump(2) << '\n';
}

inline DenseNet load_net(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    const std::vector<size_t> sizes = j.at("sizes").get<std::vector<size_t>>();
    const std::vector<std::string> act_names = j.at("activations").get<std::vector<std::string>>();
    std::vector<Activation> acts;
    for (const auto& s : act_names) acts.push_back(activation_from_string(s));
    DenseNet net = DenseNet::make(sizes, acts, j.value("seed", uint64_t{0}));
    auto& layers = net.layers();
    const auto& jl = j.at("layers");
    if (jl.size() != layers.size()) throw DataError("checkpoint layer count mismatch");
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::vector<double> w = jl[l].at("w").get<std::vector<double>>();
        const std::vector<double> b = jl[l].at("b").get<std::vector<double>>();
        if (w.size() != layers[l].w.size() || b.size() != layers[l].b.size()) {
            throw DataError("checkpoint layer " + std::to_string(l) + " shape mismatch");
        }
        std::copy(w.begin(), w.end(), layers[l].w.data());
        layers[l].b = b;
    }
    return net;
}

}  // namespace kofs
