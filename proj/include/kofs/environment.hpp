#pragma once

#include <chrono>
#include <numeric>
#include <optional>
#include <vector>

#include "kofs/agent.hpp"
#include "kofs/autoencoder.hpp"
#include "kofs/common.hpp"
#include "kofs/dataset.hpp"
#include "kofs/knockoff.hpp"
#include "kofs/stats.hpp"

namespace kofs {

enum class RewardVariant { Compare, ReconstructOriginal };

inline const char* to_string(RewardVariant v) {
    return v == RewardVariant::Compare ? "compare" : "reconstruct-original";
}

struct RewardFlags {
    bool matrix = true;    // representation-gap component active
    bool knockoff = true;  // pseudo-label penalty active
    bool random = false;   // replace the whole reward with U[-1, 1]
    RewardVariant variant = RewardVariant::Compare;
    bool rmr_every_episode = false;  // matrix component only on the last step of a pass
    bool full_retrain = false;       // retrain the subset autoencoder from scratch each evaluation
};

struct EnvConfig {
    double tau = 0.9;
    RewardFlags flags;
    size_t finetune_steps = 20;
    size_t finetune_samples = 16;
    double finetune_lr = 1e-3;
    double ae_lr = 1e-3;
    size_t ae_hidden = 64;
    size_t ae_code = 32;
    size_t ae_epochs = 200;  // budget for full_retrain / variant warm start
};

struct SelectionState {
    std::vector<uint8_t> mask;
    size_t index = 0;                // feature position under decision; d means terminal
    std::vector<double> encoding;    // AE code followed by one-hot of the current feature
};

struct RewardBreakdown {
    double r_mr = 0.0;
    double r_pi = 0.0;
    double r_rd = 0.0;
    double total = 0.0;
    double tau = 0.0;
    int time = 0;          // prior selection count of the stepped feature
    double p_choose = 0.0;
};

struct StepRecord {
    size_t index = 0;   // feature id that was decided
    int action = 0;
    ActionSource source = ActionSource::Greedy;
    double p_choose = 0.0;
    std::array<double, 2> q{0.0, 0.0};  // Q(s, drop), Q(s, select) at the acting state
    RewardBreakdown reward;
};

struct EpisodeResult {
    std::vector<uint8_t> final_mask;
    std::vector<StepRecord> steps;
    double episode_return = 0.0;
    double duration_ms = 0.0;
};

// Decayed penalty for selecting a knockoff-like (label 0) feature. Repeated
// selection shrinks the penalty geometrically so the agent can overrule the
// label.
inline double reward_knockoff(int label, int action, int time, double tau, double p_choose) {
    if (tau <= 0.0 || tau >= 1.0) throw ConfigError("tau must be in (0, 1)");
    return -std::pow(tau, static_cast<double>(time)) * static_cast<double>(action) *
           static_cast<double>(1 - label) * p_choose;
}

// Penalty for redundancy the newly selected feature adds to the subset;
// 0 when the feature was dropped or has no selected peers.
inline double reward_redundancy(const Dataset& ds, const std::vector<uint8_t>& mask, size_t index) {
    if (mask.size() != ds.d || index >= ds.d) throw DataError("reward_redundancy: bad mask/index");
    if (!mask[index]) return 0.0;
    const std::vector<double> fi = ds.features.column(index);
    double acc = 0.0;
    for (size_t k = 0; k < ds.d; ++k) {
        if (k == index || !mask[k]) continue;
        acc += std::abs(stats::pearson(fi, ds.features.column(k)));
    }
    return -acc / static_cast<double>(ds.d);
}

// Representation gap between the selected subset and the full feature set:
// -|enc_subset(desc(mask)) - enc_full(desc(full))|^2.
inline double reward_matrix_reconstruction(const DescriptorContext& ctx,
                                           const std::vector<uint8_t>& mask,
                                           const SubsetAutoencoder& full_ae,
                                           const SubsetAutoencoder& subset_ae) {
    const std::vector<uint8_t> full(ctx.d, 1);
    const std::vector<double> enc_full = encode(full_ae, build_descriptor(ctx, full));
    const std::vector<double> enc_sub = encode(subset_ae, build_descriptor(ctx, mask));
    return -squared_l2(enc_sub, enc_full);
}

// The feature-selection MDP: one sequential pass over the feature positions,
// each receiving a keep/drop action. Selection counts persist across resets
// within one environment (one run); the target column is never touched.
class SelectionEnv {
public:
    SelectionEnv(const Dataset& ds, const KnockoffResult& kr, const SubsetAutoencoder& full_ae,
                 const EnvConfig& cfg, uint64_t seed)
        : ds_(&ds),
          kr_(&kr),
          full_ae_(&full_ae),
          cfg_(cfg),
          ae_rng_(derive_seed(seed, 0xae)),
          random_rng_(derive_seed(seed, 0x7a7)),
          select_count_(ds.d, 0),
          order_(ds.d) {
        full_ctx_ = make_descriptor_context(ds);
        std::iota(order_.begin(), order_.end(), size_t{0});
        if (cfg_.flags.variant == RewardVariant::ReconstructOriginal && !cfg_.flags.random &&
            cfg_.flags.matrix) {
            init_reconstructor(seed);
        }
    }

    size_t d() const { return ds_->d; }
    const std::vector<int>& select_count() const { return select_count_; }
    const DescriptorContext& context() const { return full_ctx_; }
    size_t feature_at(size_t position) const { return order_[position]; }

    // Optional per-episode visit order (identity by default).
    void set_order(std::vector<size_t> order) {
        if (order.size() != ds_->d) throw DataError("order length mismatch");
        order_ = std::move(order);
    }

    SelectionState reset() {
        SelectionState s;
        s.mask.assign(ds_->d, 0);
        s.index = 0;
        s.encoding = encode_state(s.mask, 0);
        return s;
    }

    struct StepResult {
        SelectionState next;
        RewardBreakdown reward;
        bool terminal = false;
    };

    StepResult step(const SelectionState& s, int action, double p_choose) {
        if (s.index >= ds_->d) throw DataError("step called after the terminal state");
        const size_t feature = order_[s.index];

        StepResult out;
        out.next.mask = s.mask;
        out.next.mask[feature] = static_cast<uint8_t>(action);
        out.next.index = s.index + 1;
        out.terminal = out.next.index == ds_->d;

        RewardBreakdown& rb = out.reward;
        rb.tau = cfg_.tau;
        rb.time = select_count_[feature];
        rb.p_choose = p_choose;

        if (cfg_.flags.random) {
            rb.r_mr = random_rng_.uniform(-1.0, 1.0);
            rb.total = rb.r_mr;
        } else {
            const bool want_rmr =
                cfg_.flags.matrix && (!cfg_.flags.rmr_every_episode || out.terminal);
            rb.r_mr = want_rmr ? matrix_reward(out.next.mask) : 0.0;
            rb.r_pi = cfg_.flags.knockoff
                          ? reward_knockoff(kr_->labels[feature], action, rb.time, cfg_.tau, p_choose)
                          : 0.0;
            rb.r_rd = action ? redundancy_from_context(out.next.mask, feature) : 0.0;
            rb.total = rb.r_mr + rb.r_pi + rb.r_rd;
        }

        if (action) ++select_count_[feature];
        out.next.encoding = encode_state(out.next.mask, out.next.index);
        return out;
    }

    std::vector<double> encode_state(const std::vector<uint8_t>& mask, size_t index) const {
        std::vector<double> enc = encode(*full_ae_, build_descriptor(full_ctx_, mask));
        enc.resize(enc.size() + ds_->d, 0.0);
        if (index < ds_->d) enc[full_ae_->code_size + order_[index]] = 1.0;
        return enc;
    }

    double redundancy_from_context(const std::vector<uint8_t>& mask, size_t feature) const {
        if (!mask[feature]) return 0.0;
        double acc = 0.0;
        for (size_t k = 0; k < ds_->d; ++k) {
            if (k == feature || !mask[k]) continue;
            acc += full_ctx_.abs_corr(feature, k);
        }
        return -acc / static_cast<double>(ds_->d);
    }

    // Fine-tunes a copy of the full-set autoencoder on bootstrap descriptors
    // of the subset, then measures the representation gap. --full-retrain
    // replaces the warm start with training from scratch.
    double matrix_reward(const std::vector<uint8_t>& mask) {
        if (cfg_.flags.variant == RewardVariant::ReconstructOriginal) {
            return reconstruct_original_reward(mask);
        }
        SubsetAutoencoder subset = *full_ae_;
        subset.trained_on = AeProvenance::Subset;
        subset.trained_mask = mask;
        const Matrix samples = bootstrap_descriptors(*ds_, mask, cfg_.finetune_samples, ae_rng_);
        if (cfg_.flags.full_retrain) {
            subset = make_autoencoder(ds_->d * kDescriptorStats, cfg_.ae_code, cfg_.ae_hidden,
                                      derive_seed(full_ae_->net.seed(), 0x5ab));
            subset.trained_on = AeProvenance::Subset;
            subset.trained_mask = mask;
            train_autoencoder(subset, samples,
                              TrainConfig{.learning_rate = cfg_.ae_lr, .epochs = cfg_.ae_epochs,
                                          .batch_size = 16});
        } else {
            train_autoencoder(subset, samples,
                              TrainConfig{.learning_rate = cfg_.finetune_lr,
                                          .epochs = cfg_.finetune_steps,
                                          .batch_size = samples.rows()});
        }
        return reward_matrix_reconstruction(full_ctx_, mask, *full_ae_, subset);
    }

private:
    void init_reconstructor(uint64_t seed) {
        const size_t dim = ds_->d * kDescriptorStats;
        reconstructor_ = make_autoencoder(dim, cfg_.ae_code, cfg_.ae_hidden, derive_seed(seed, 0xcf0));
        const std::vector<uint8_t> full(ds_->d, 1);
        const Matrix samples = bootstrap_descriptors(*ds_, full, cfg_.finetune_samples * 2, ae_rng_);
        train_autoencoder(*reconstructor_, samples,
                          TrainConfig{.learning_rate = cfg_.ae_lr, .epochs = cfg_.ae_epochs,
                                      .batch_size = 16});
        full_descriptor_ = build_descriptor(full_ctx_, full);
    }

    // Variant: map the subset descriptor onto the full descriptor through a
    // dedicated network and use the negated reconstruction error.
    double reconstruct_original_reward(const std::vector<uint8_t>& mask) {
        SubsetAutoencoder net = *reconstructor_;
        const std::vector<uint8_t> full(ds_->d, 1);
        Matrix inputs(cfg_.finetune_samples, ds_->d * kDescriptorStats);
        Matrix targets(cfg_.finetune_samples, ds_->d * kDescriptorStats);
        std::vector<size_t> rows(ds_->n);
        for (size_t b = 0; b < cfg_.finetune_samples; ++b) {
            for (size_t i = 0; i < ds_->n; ++i) rows[i] = ae_rng_.below(ds_->n);
            const DescriptorContext ctx = make_descriptor_context(*ds_, rows);
            const SubsetDescriptor sub = build_descriptor(ctx, mask);
            const SubsetDescriptor ful = build_descriptor(ctx, full);
            std::copy(sub.vec.begin(), sub.vec.end(), inputs.data() + b * inputs.cols());
            std::copy(ful.vec.begin(), ful.vec.end(), targets.data() + b * targets.cols());
        }
        fit(net.net, inputs, targets,
            TrainConfig{.learning_rate = cfg_.finetune_lr, .epochs = cfg_.finetune_steps,
                        .batch_size = inputs.rows()});
        const SubsetDescriptor sub = build_descriptor(full_ctx_, mask);
        const std::vector<double> rec = net.net.forward(sub.vec);
        return -squared_l2(rec, full_descriptor_.vec);
    }

    const Dataset* ds_;
    const KnockoffResult* kr_;
    const SubsetAutoencoder* full_ae_;
    EnvConfig cfg_;
    DescriptorContext full_ctx_;
    Rng ae_rng_;
    Rng random_rng_;
    std::vector<int> select_count_;
    std::vector<size_t> order_;
    std::optional<SubsetAutoencoder> reconstructor_;
    SubsetDescriptor full_descriptor_;
};

// One full pass over the features: agent decision, environment step, replay
// push and (optionally) one learn step per environment step.
inline EpisodeResult run_episode(SelectionEnv& env, QNetwork& q, ReplayBuffer& buffer,
                                 const KnockoffResult& kr, const PolicyConfig& pol,
                                 const AgentConfig& cfg, Rng& policy_rng, Rng& learn_rng,
                                 bool learn = true) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeResult ep;
    SelectionState s = env.reset();
    for (size_t pos = 0; pos < env.d(); ++pos) {
        const size_t feature = env.feature_at(pos);
        const ActionChoice choice =
            select_action(q, s.encoding, kr.labels[feature], pol, policy_rng);
        SelectionEnv::StepResult res = env.step(s, choice.action, choice.p_choose);
        buffer.push({s.encoding, res.next.encoding, choice.action, res.reward.total, res.terminal});
        if (learn && buffer.size() >= cfg.batch) {
            learn_step(q, buffer, cfg, learn_rng);
        }
        ep.steps.push_back(
            {feature, choice.action, choice.source, choice.p_choose, choice.q, res.reward});
        ep.episode_return += res.reward.total;
        s = std::move(res.next);
    }
    ep.final_mask = s.mask;
    ep.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return ep;
}

}  // namespace kofs
