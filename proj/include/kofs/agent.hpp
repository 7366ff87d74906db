#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "kofs/autoencoder.hpp"
#include "kofs/common.hpp"
#include "kofs/dataset.hpp"
#include "kofs/knockoff.hpp"
#include "kofs/nn.hpp"

namespace kofs {

// Three-way exploration mixture: uniform random with probability eps_random,
// pseudo-label dictation with eps_label, greedy argmax otherwise.
struct PolicyConfig {
    double eps_random = 0.05;
    double eps_label = 0.05;
    double decay = 0.9;   // per-episode multiplicative factor
    double floor = 0.0;

    void validate() const {
        if (eps_random < 0.0 || eps_label < 0.0 || eps_random + eps_label > 1.0) {
            throw ConfigError("epsilon values must be nonnegative with eps1 + eps2 <= 1");
        }
        if (decay <= 0.0 || decay > 1.0) throw ConfigError("decay must be in (0, 1]");
    }
};

inline PolicyConfig decay_policy(const PolicyConfig& pol, size_t episode) {
    PolicyConfig out = pol;
    const double f = std::pow(pol.decay, static_cast<double>(episode));
    out.eps_random = std::max(pol.floor, pol.eps_random * f);
    out.eps_label = std::max(pol.floor, pol.eps_label * f);
    return out;
}

enum class ActionSource { Random, Label, Greedy };

inline const char* to_string(ActionSource s) {
    switch (s) {
        case ActionSource::Random: return "random";
        case ActionSource::Label: return "label";
        case ActionSource::Greedy: return "greedy";
    }
    return "greedy";
}

struct ActionChoice {
    int action = 0;
    ActionSource source = ActionSource::Greedy;
    double p_choose = 0.5;  // softmax(Q)(taken action)
    std::array<double, 2> q{0.0, 0.0};
};

struct AgentConfig {
    double gamma = 0.9;
    double lr = 1e-3;
    size_t batch = 32;
    size_t pretrain_epochs = 30;
    double pretrain_margin = 1.0;  // pretraining targets are +/- this value
    size_t buffer_capacity = 4096;
    size_t target_sync_interval = 50;
    std::vector<size_t> hidden = {64, 32};

    void validate() const {
        if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
        if (batch == 0) throw ConfigError("batch must be positive");
    }
};

struct Transition {
    std::vector<double> state;
    std::vector<double> next_state;
    int action = 0;
    double reward = 0.0;
    bool terminal = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("replay capacity must be positive");
    }

    void push(Transition t) {
        if (ring_.size() < capacity_) {
            ring_.push_back(std::move(t));
        } else {
            ring_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % capacity_;
    }

    size_t size() const { return ring_.size(); }
    size_t capacity() const { return capacity_; }
    const Transition& at(size_t i) const { return ring_[i]; }

    // Uniform sample without replacement within the batch.
    std::vector<const Transition*> sample(size_t batch, Rng& rng) const {
        if (ring_.empty()) throw DataError("cannot sample from an empty replay buffer");
        if (batch > ring_.size()) batch = ring_.size();
        std::vector<size_t> idx(ring_.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (size_t i = 0; i < batch; ++i) {
            const size_t pick = i + rng.below(idx.size() - i);
            std::swap(idx[i], idx[pick]);
        }
        std::vector<const Transition*> out(batch);
        for (size_t i = 0; i < batch; ++i) out[i] = &ring_[idx[i]];
        return out;
    }

private:
    size_t capacity_;
    std::vector<Transition> ring_;
    size_t next_ = 0;
};

// Q function over (state, {drop=0, select=1}) with a frozen target copy
// refreshed every target_sync_interval learn steps.
class QNetwork {
public:
    static QNetwork make(size_t state_dim, const AgentConfig& cfg, uint64_t seed) {
        cfg.validate();
        QNetwork q;
        std::vector<size_t> dims{state_dim};
        std::vector<Activation> acts;
        for (size_t h : cfg.hidden) {
            dims.push_back(h);
            acts.push_back(Activation::ReLU);
        }
        dims.push_back(2);
        acts.push_back(Activation::Identity);
        q.net_ = DenseNet::make(dims, acts, seed);
        q.target_ = q.net_;
        q.opt_ = std::make_unique<Optimizer>(TrainConfig{.learning_rate = cfg.lr,
                                                         .optimizer = OptimizerKind::Adam});
        q.sync_interval_ = cfg.target_sync_interval;
        return q;
    }

    std::array<double, 2> q_values(std::span<const double> s) const {
        const std::vector<double> out = net_.forward(s);
        return {out[0], out[1]};
    }

    std::array<double, 2> q_target_values(std::span<const double> s) const {
        const std::vector<double> out = target_.forward(s);
        return {out[0], out[1]};
    }

    void sync_target() { target_ = net_; }

    DenseNet& net() { return net_; }
    const DenseNet& net() const { return net_; }
    const DenseNet& target_net() const { return target_; }
    Optimizer& optimizer() { return *opt_; }
    size_t learn_steps() const { return learn_steps_; }
    size_t sync_interval() const { return sync_interval_; }
    void count_learn_step() {
        ++learn_steps_;
        if (sync_interval_ > 0 && learn_steps_ % sync_interval_ == 0) sync_target();
    }

private:
    DenseNet net_, target_;
    std::unique_ptr<Optimizer> opt_;
    size_t sync_interval_ = 50;
    size_t learn_steps_ = 0;
};

inline double softmax_select_probability(const std::array<double, 2>& q, int action) {
    const double m = std::max(q[0], q[1]);
    const double e0 = std::exp(q[0] - m);
    const double e1 = std::exp(q[1] - m);
    const double p1 = e1 / (e0 + e1);
    return action == 1 ? p1 : 1.0 - p1;
}

// Eq-style mixture: with prob eps_random act uniformly, with prob eps_label
// follow the pseudo label, otherwise take argmax_a Q(s, a).
inline ActionChoice select_action(const QNetwork& q, std::span<const double> state, int label,
                                  const PolicyConfig& pol, Rng& rng) {
    pol.validate();
    ActionChoice choice;
    choice.q = q.q_values(state);
    const double u = rng.uniform01();
    if (u < pol.eps_random) {
        choice.source = ActionSource::Random;
        choice.action = rng.coin();
    } else if (u < pol.eps_random + pol.eps_label) {
        choice.source = ActionSource::Label;
        choice.action = label;
    } else {
        choice.source = ActionSource::Greedy;
        choice.action = choice.q[1] > choice.q[0] ? 1 : 0;
    }
    choice.p_choose = softmax_select_probability(choice.q, choice.action);
    return choice;
}

// One gradient step on mean squared TD error:
//   y = R                                   (terminal)
//   y = R + gamma * max_a' Q_target(s', a') (otherwise)
inline double learn_step(QNetwork& q, const ReplayBuffer& buf, const AgentConfig& cfg, Rng& rng) {
    if (buf.size() < cfg.batch) {
        throw DataError("learn_step: replay buffer smaller than batch");
    }
    const std::vector<const Transition*> batch = buf.sample(cfg.batch, rng);

    Gradients acc;
    ForwardCache cache;
    double loss = 0.0;
    bool first = true;
    for (const Transition* t : batch) {
        double y = t->reward;
        if (!t->terminal) {
            const std::array<double, 2> qn = q.q_target_values(t->next_state);
            y += cfg.gamma * std::max(qn[0], qn[1]);
        }
        const std::vector<double> pred = q.net().forward_cached(t->state, cache);
        const double td = pred[static_cast<size_t>(t->action)] - y;
        loss += td * td;
        std::vector<double> grad(2, 0.0);
        grad[static_cast<size_t>(t->action)] = 2.0 * td;
        Gradients g = q.net().backward(cache, grad);
        if (first) {
            acc = std::move(g);
            first = false;
        } else {
            acc.accumulate(g);
        }
    }
    acc.scale(1.0 / static_cast<double>(batch.size()));
    q.optimizer().step(q.net(), acc, cfg.lr);
    q.count_learn_step();
    return loss / static_cast<double>(batch.size());
}

struct PretrainReport {
    double agreement_before = 0.0;
    double agreement_after = 0.0;
    size_t train_states = 0;
    size_t holdout_states = 0;
    size_t epochs = 0;
};

// Checkpoints the online net; the target copy is refreshed on load.
inline void save_qnetwork(const QNetwork& q, const std::string& path) {
    save_net(q.net(), path);
}

inline QNetwork load_qnetwork(const std::string& path, const AgentConfig& cfg) {
    DenseNet net = load_net(path);
    if (net.output_size() != 2) throw DataError("checkpoint is not a Q-network (need 2 outputs)");
    QNetwork q = QNetwork::make(net.input_size(), cfg, net.seed());
    q.net() = std::move(net);
    q.sync_target();
    return q;
}

namespace detail {

struct SyntheticStates {
    Matrix encodings;          // rows: states
    std::vector<int> labels;   // pseudo label of the paired feature index
};

// Random masks at uniform density, each feature index paired with a mask
// context; the encoding is AE(code) followed by the one-hot of the index.
inline SyntheticStates make_synthetic_states(const DescriptorContext& ctx,
                                             const SubsetAutoencoder& ae,
                                             const std::vector<int>& labels, size_t per_feature,
                                             Rng& rng) {
    const size_t d = ctx.d;
    SyntheticStates out;
    const size_t total = per_feature * d;
    out.encodings = Matrix(total, ae.code_size + d);
    out.labels.reserve(total);
    std::vector<uint8_t> mask(d, 0);
    size_t row = 0;
    for (size_t rep = 0; rep < per_feature; ++rep) {
        for (size_t i = 0; i < d; ++i) {
            const double density = rng.uniform01();
            for (size_t j = 0; j < d; ++j) mask[j] = rng.uniform01() < density ? 1 : 0;
            const std::vector<double> code = encode(ae, build_descriptor(ctx, mask));
            double* dst = out.encodings.data() + row * out.encodings.cols();
            std::copy(code.begin(), code.end(), dst);
            dst[ae.code_size + i] = 1.0;
            out.labels.push_back(labels[i]);
            ++row;
        }
    }
    return out;
}

inline double argmax_agreement(const QNetwork& q, const SyntheticStates& states) {
    if (states.labels.empty()) return 0.0;
    size_t hits = 0;
    for (size_t r = 0; r < states.labels.size(); ++r) {
        const std::array<double, 2> qv = q.q_values(states.encodings.row(r));
        const int a = qv[1] > qv[0] ? 1 : 0;
        if (a == states.labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(states.labels.size());
}

}  // namespace detail

// Supervised warm start: trains Q toward +margin on the pseudo-label action
// and -margin on the opposite action over 50*d synthetic states; agreement is
// measured on a held-out synthetic set before and after.
inline PretrainReport pretrain(QNetwork& q, const Dataset& ds, const KnockoffResult& kr,
                               const SubsetAutoencoder& ae, const AgentConfig& cfg, uint64_t seed,
                               const DescriptorContext* ctx_in = nullptr) {
    if (kr.labels.size() != ds.d) throw DataError("pretrain: labels missing");
    DescriptorContext local;
    if (!ctx_in) local = make_descriptor_context(ds);
    const DescriptorContext& ctx = ctx_in ? *ctx_in : local;

    Rng train_rng(derive_seed(seed, 0x9e1));
    Rng holdout_rng(derive_seed(seed, 0x9e2));
    const detail::SyntheticStates train = detail::make_synthetic_states(ctx, ae, kr.labels, 50, train_rng);
    const detail::SyntheticStates holdout =
        detail::make_synthetic_states(ctx, ae, kr.labels, 10, holdout_rng);

    PretrainReport report;
    report.train_states = train.labels.size();
    report.holdout_states = holdout.labels.size();
    report.epochs = cfg.pretrain_epochs;
    report.agreement_before = detail::argmax_agreement(q, holdout);

    if (cfg.pretrain_epochs > 0) {
        Matrix targets(train.labels.size(), 2);
        for (size_t r = 0; r < train.labels.size(); ++r) {
            targets(r, static_cast<size_t>(train.labels[r])) = cfg.pretrain_margin;
            targets(r, static_cast<size_t>(1 - train.labels[r])) = -cfg.pretrain_margin;
        }
        const TrainConfig tc{.learning_rate = cfg.lr, .epochs = cfg.pretrain_epochs, .batch_size = 32};
        fit(q.net(), train.encodings, targets, tc);
        q.sync_target();
    }

    report.agreement_after = detail::argmax_agreement(q, holdout);
    return report;
}

}  // namespace kofs
