#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kofs/agent.hpp"
#include "kofs/autoencoder.hpp"
#include "kofs/common.hpp"
#include "kofs/dataset.hpp"
#include "kofs/environment.hpp"
#include "kofs/evaluation.hpp"
#include "kofs/knockoff.hpp"

namespace kofs {

using json = nlohmann::ordered_json;

struct RunConfig {
    std::string data_path;
    std::string target_column;  // empty: unsupervised end to end, no evaluation
    Task task = Task::Classification;
    size_t episodes = 10;
    uint64_t seed = 0;

    PolicyConfig policy;
    double tau = 0.9;
    ThresholdMode threshold_mode = ThresholdMode::Mean;
    ScoreMode score_mode = ScoreMode::MeanAbsCorr;
    double ridge = 1e-6;

    // ablation switches
    bool no_pretrain = false;
    bool no_knockoff_reward = false;
    bool no_greedy_guidance = false;
    bool no_matrix_reward = false;
    bool random_reward = false;
    RewardVariant reward_variant = RewardVariant::Compare;
    bool rmr_every_episode = false;
    bool full_retrain = false;
    bool shuffle_order = false;

    // autoencoder budgets
    size_t ae_hidden = 64;
    size_t ae_code = 32;
    size_t ae_bootstrap = 64;
    size_t ae_epochs = 200;
    size_t ae_finetune_steps = 20;
    size_t ae_finetune_samples = 16;
    double ae_lr = 1e-3;
    double ae_finetune_lr = 1e-3;

    AgentConfig agent;

    // evaluation protocol
    double train_fraction = 0.8;
    ModelParams eval_params;
    size_t random_half_seeds = 5;
    bool random_reward_comparator = true;

    // outputs
    std::string out_dir;
    bool trace = false;
    bool dump_knockoffs = false;
    bool dump_encodings = false;

    void validate() const {
        policy.validate();
        agent.validate();
        if (episodes == 0) throw ConfigError("episodes must be positive");
        if (tau <= 0.0 || tau >= 1.0) throw ConfigError("tau must be in (0, 1)");
        if (train_fraction <= 0.0 || train_fraction >= 1.0) {
            throw ConfigError("train-fraction must be in (0, 1)");
        }
    }
};

inline json config_to_json(const RunConfig& c) {
    json j;
    j["data"] = c.data_path;
    j["target"] = c.target_column;
    j["task"] = to_string(c.task);
    j["episodes"] = c.episodes;
    j["seed"] = c.seed;
    j["eps1"] = c.policy.eps_random;
    j["eps2"] = c.policy.eps_label;
    j["eps_decay"] = c.policy.decay;
    j["eps_floor"] = c.policy.floor;
    j["tau"] = c.tau;
    j["threshold"] = to_string(c.threshold_mode);
    j["score"] = to_string(c.score_mode);
    j["ridge"] = c.ridge;
    j["no_pretrain"] = c.no_pretrain;
    j["no_knockoff_reward"] = c.no_knockoff_reward;
    j["no_greedy_guidance"] = c.no_greedy_guidance;
    j["no_matrix_reward"] = c.no_matrix_reward;
    j["random_reward"] = c.random_reward;
    j["reward_variant"] = to_string(c.reward_variant);
    j["rmr_every_episode"] = c.rmr_every_episode;
    j["full_retrain"] = c.full_retrain;
    j["shuffle_order"] = c.shuffle_order;
    j["ae_hidden"] = c.ae_hidden;
    j["ae_code"] = c.ae_code;
    j["ae_bootstrap"] = c.ae_bootstrap;
    j["ae_epochs"] = c.ae_epochs;
    j["ae_finetune_steps"] = c.ae_finetune_steps;
    j["ae_finetune_samples"] = c.ae_finetune_samples;
    j["ae_lr"] = c.ae_lr;
    j["ae_finetune_lr"] = c.ae_finetune_lr;
    j["gamma"] = c.agent.gamma;
    j["agent_lr"] = c.agent.lr;
    j["batch"] = c.agent.batch;
    j["pretrain_epochs"] = c.agent.pretrain_epochs;
    j["pretrain_margin"] = c.agent.pretrain_margin;
    j["buffer_capacity"] = c.agent.buffer_capacity;
    j["target_sync"] = c.agent.target_sync_interval;
    j["q_hidden"] = c.agent.hidden;
    j["train_fraction"] = c.train_fraction;
    j["knn_k"] = c.eval_params.knn_k;
    j["tree_depth"] = c.eval_params.tree_depth;
    j["gd_epochs"] = c.eval_params.gd_epochs;
    j["random_half_seeds"] = c.random_half_seeds;
    j["random_reward_comparator"] = c.random_reward_comparator;
    return j;
}

struct SelectionReport {
    json config;
    uint64_t data_hash = 0;
    size_t n = 0, d = 0;
    size_t dropped_rows = 0;
    Task task = Task::Classification;
    std::vector<std::string> feature_names;
    std::vector<uint8_t> mask;
    bool mask_fallback = false;
    std::vector<double> knockoff_scores, knockoff_distances;
    std::vector<int> pseudo_labels;
    double knockoff_threshold = 0.0;
    PretrainReport pretrain;
    std::vector<EpisodeResult> episodes;
    std::optional<std::vector<uint8_t>> random_reward_mask;
    std::vector<ComparatorResult> comparators;
    std::vector<EvalMetrics> selected_metrics;
    TimeProfile timing;

    size_t mask_weight() const {
        size_t w = 0;
        for (uint8_t b : mask) w += b;
        return w;
    }

    // Selected-subset mean downstream metric (acc or l2 over the models).
    double selected_mean_metric() const {
        for (const auto& row : comparators) {
            if (row.method == ComparatorMethod::Selected) return row.mean_metric;
        }
        return 0.0;
    }

    json to_json(bool include_timings = true) const;
};

namespace detail {

inline json metrics_to_json(const EvalMetrics& m) {
    json j;
    j["model"] = m.model_name;
    j["task"] = to_string(m.task);
    if (m.task == Task::Classification) {
        j["acc"] = m.acc;
        j["tp"] = m.tp;
        j["tn"] = m.tn;
        j["fp"] = m.fp;
        j["fn"] = m.fn;
    } else {
        j["l2"] = m.l2;
    }
    j["train_size"] = m.train_size;
    j["test_size"] = m.test_size;
    j["degenerate"] = m.degenerate;
    return j;
}

inline uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return 0;
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string s = ss.str();
    return fnv1a64({s.data(), s.size()});
}

}  // namespace detail

inline json SelectionReport::to_json(bool include_timings) const {
    json j;
    j["config"] = config;
    const std::string cfg_dump = config.dump();
    j["config_hash"] = fnv1a64({cfg_dump.data(), cfg_dump.size()});
    j["data_hash"] = data_hash;
    j["n"] = n;
    j["d"] = d;
    j["dropped_rows"] = dropped_rows;
    j["task"] = to_string(task);
    j["mask"] = mask;
    j["mask_fallback"] = mask_fallback;
    json selected = json::array();
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) selected.push_back(feature_names[i]);
    }
    j["selected_features"] = selected;
    j["knockoff"] = {{"scores", knockoff_scores},
                     {"distances", knockoff_distances},
                     {"labels", pseudo_labels},
                     {"threshold", knockoff_threshold}};
    j["pretrain"] = {{"agreement_before", pretrain.agreement_before},
                     {"agreement_after", pretrain.agreement_after},
                     {"train_states", pretrain.train_states},
                     {"holdout_states", pretrain.holdout_states},
                     {"epochs", pretrain.epochs}};
    json eps = json::array();
    for (const EpisodeResult& ep : episodes) {
        json je;
        je["return"] = ep.episode_return;
        json steps = json::array();
        for (const StepRecord& st : ep.steps) {
            steps.push_back({{"index", st.index},
                             {"action", st.action},
                             {"source", to_string(st.source)},
                             {"p_choose", st.p_choose},
                             {"time", st.reward.time},
                             {"r_mr", st.reward.r_mr},
                             {"r_pi", st.reward.r_pi},
                             {"r_rd", st.reward.r_rd},
                             {"total", st.reward.total}});
        }
        je["steps"] = std::move(steps);
        eps.push_back(std::move(je));
    }
    j["episodes"] = std::move(eps);
    if (random_reward_mask) j["random_reward_mask"] = *random_reward_mask;
    if (!comparators.empty()) {
        json rows = json::array();
        for (const ComparatorResult& r : comparators) {
            rows.push_back({{"method", to_string(r.method)},
                            {"per_model_metric", r.per_model_metric},
                            {"mean_metric", r.mean_metric},
                            {"ranks", r.ranks},
                            {"mean_rank", r.mean_rank}});
        }
        j["comparators"] = std::move(rows);
        json det = json::array();
        for (const EvalMetrics& m : selected_metrics) det.push_back(detail::metrics_to_json(m));
        j["selected_metrics"] = std::move(det);
    }
    j["downstream_invocations_during_selection"] = timing.downstream_invocations_during_selection;
    if (include_timings) {
        j["timings"] = {{"ingest_s", timing.ingest_s},
                        {"knockoff_s", timing.knockoff_s},
                        {"autoencoder_s", timing.autoencoder_s},
                        {"pretrain_s", timing.pretrain_s},
                        {"episodes_s", timing.episodes_s},
                        {"evaluation_s", timing.evaluation_s},
                        {"total_s", timing.total_s}};
    }
    return j;
}

namespace detail {

class PhaseTimer {
public:
    PhaseTimer() : start_(std::chrono::steady_clock::now()) {}
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - start_).count();
        start_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// Effective exploration mixture: dropping greedy guidance folds the label
// mass into random exploration (5:5:90 becomes 10:0:90).
inline PolicyConfig effective_policy(const RunConfig& cfg) {
    PolicyConfig pol = cfg.policy;
    if (cfg.no_greedy_guidance) {
        pol.eps_random += pol.eps_label;
        pol.eps_label = 0.0;
    }
    return pol;
}

inline EnvConfig env_config(const RunConfig& cfg, bool force_random) {
    EnvConfig ec;
    ec.tau = cfg.tau;
    ec.flags.matrix = !cfg.no_matrix_reward;
    ec.flags.knockoff = !cfg.no_knockoff_reward;
    ec.flags.random = force_random || cfg.random_reward;
    ec.flags.variant = cfg.reward_variant;
    ec.flags.rmr_every_episode = cfg.rmr_every_episode;
    ec.flags.full_retrain = cfg.full_retrain;
    ec.finetune_steps = cfg.ae_finetune_steps;
    ec.finetune_samples = cfg.ae_finetune_samples;
    ec.finetune_lr = cfg.ae_finetune_lr;
    ec.ae_lr = cfg.ae_lr;
    ec.ae_hidden = cfg.ae_hidden;
    ec.ae_code = cfg.ae_code;
    ec.ae_epochs = cfg.ae_epochs;
    return ec;
}

struct EpisodeLoopResult {
    std::vector<uint8_t> final_mask;
    std::vector<EpisodeResult> episodes;
    bool mask_fallback = false;
};

inline size_t mask_weight_of(const std::vector<uint8_t>& mask) {
    size_t w = 0;
    for (uint8_t b : mask) w += b;
    return w;
}

inline EpisodeLoopResult episode_loop(const RunConfig& cfg, const Dataset& sel_ds,
                                      const KnockoffResult& kr, const SubsetAutoencoder& full_ae,
                                      QNetwork& q, bool force_random, uint64_t stream) {
    SelectionEnv env(sel_ds, kr, full_ae, env_config(cfg, force_random),
                     derive_seed(cfg.seed, stream + 0x08));
    ReplayBuffer buffer(cfg.agent.buffer_capacity);
    Rng policy_rng(derive_seed(cfg.seed, stream + 0x06));
    Rng learn_rng(derive_seed(cfg.seed, stream + 0x07));
    Rng order_rng(derive_seed(cfg.seed, stream + 0x0b));

    const PolicyConfig base = effective_policy(cfg);
    EpisodeLoopResult out;
    for (size_t episode = 0; episode < cfg.episodes; ++episode) {
        if (cfg.shuffle_order) env.set_order(order_rng.permutation(sel_ds.d));
        const PolicyConfig pol = episode == 0 ? base : decay_policy(base, episode);
        out.episodes.push_back(
            run_episode(env, q, buffer, kr, pol, cfg.agent, policy_rng, learn_rng));
    }
    out.final_mask = out.episodes.back().final_mask;
    // an all-drop pass cannot be evaluated; fall back to the latest non-empty
    // pass, then to the pseudo-label-positive set (never empty under the mean
    // threshold, and still target-blind)
    if (mask_weight_of(out.final_mask) == 0) {
        out.mask_fallback = true;
        for (auto it = out.episodes.rbegin(); it != out.episodes.rend(); ++it) {
            if (mask_weight_of(it->final_mask) > 0) {
                out.final_mask = it->final_mask;
                break;
            }
        }
        if (mask_weight_of(out.final_mask) == 0) {
            for (size_t j = 0; j < out.final_mask.size(); ++j) {
                out.final_mask[j] = kr.labels[j] == 1 ? 1 : 0;
            }
        }
    }
    return out;
}

inline void write_trace_csv(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);
    out << "episode,step,index,action,source,p_choose,q_drop,q_select,time,r_mr,r_pi,r_rd,total\n";
    for (size_t e = 0; e < report.episodes.size(); ++e) {
        const EpisodeResult& ep = report.episodes[e];
        for (size_t s = 0; s < ep.steps.size(); ++s) {
            const StepRecord& st = ep.steps[s];
            out << e << ',' << s << ',' << st.index << ',' << st.action << ','
                << to_string(st.source) << ',' << st.p_choose << ',' << st.q[0] << ','
                << st.q[1] << ',' << st.reward.time << ',' << st.reward.r_mr << ','
                << st.reward.r_pi << ',' << st.reward.r_rd << ',' << st.reward.total << '\n';
        }
    }
}

inline void write_summary_csv(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(12);
    out << "method,model,metric,rank\n";
    const std::vector<ModelKind> models = models_for(report.task);
    for (const ComparatorResult& r : report.comparators) {
        for (size_t k = 0; k < r.per_model_metric.size(); ++k) {
            out << to_string(r.method) << ',' << to_string(models[k]) << ','
                << r.per_model_metric[k] << ',' << r.ranks[k] << '\n';
        }
    }
}

// Rethrows module errors with the pipeline phase prepended.
template <typename Fn>
auto tagged_phase(const char* phase, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("[") + phase + "] " + e.what());
    } catch (const DataError& e) {
        throw DataError(std::string("[") + phase + "] " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string("[") + phase + "] " + e.what());
    }
}

}  // namespace detail

// Full pipeline on an already-loaded dataset: knockoffs, pseudo labels,
// autoencoder, pretraining, selection episodes, companion random-reward run,
// downstream evaluation.
inline SelectionReport run_select_on(const RunConfig& cfg, const Dataset& ds,
                                     uint64_t data_hash = 0) {
    cfg.validate();
    detail::PhaseTimer total_timer;
    detail::PhaseTimer timer;

    SelectionReport report;
    report.config = config_to_json(cfg);
    report.data_hash = data_hash;
    report.n = ds.n;
    report.d = ds.d;
    report.dropped_rows = ds.dropped_rows;
    report.task = ds.task;
    report.feature_names = ds.feature_names;
    report.timing.ingest_s = timer.lap();

    // the whole selection path sees a target-stripped view
    const Dataset sel_ds = ds.without_target();
    EvalCounter counter;

    const KnockoffResult kr = detail::tagged_phase("knockoff", [&] {
        return build_knockoffs(sel_ds, derive_seed(cfg.seed, 0x01), cfg.ridge, cfg.score_mode,
                               cfg.threshold_mode);
    });
    report.knockoff_scores = kr.scores;
    report.knockoff_distances = kr.distances;
    report.pseudo_labels = kr.labels;
    report.knockoff_threshold = kr.threshold;
    report.timing.knockoff_s = timer.lap();

    const DescriptorContext ctx = make_descriptor_context(sel_ds);
    SubsetAutoencoder full_ae = make_autoencoder(sel_ds.d * kDescriptorStats, cfg.ae_code,
                                                 cfg.ae_hidden, derive_seed(cfg.seed, 0x02));
    detail::tagged_phase("autoencoder", [&] {
        Rng boot_rng(derive_seed(cfg.seed, 0x03));
        const std::vector<uint8_t> full(sel_ds.d, 1);
        const Matrix samples = bootstrap_descriptors(sel_ds, full, cfg.ae_bootstrap, boot_rng);
        return train_autoencoder(full_ae, samples,
                                 TrainConfig{.learning_rate = cfg.ae_lr, .epochs = cfg.ae_epochs,
                                             .batch_size = 16});
    });
    report.timing.autoencoder_s = timer.lap();

    QNetwork q = QNetwork::make(cfg.ae_code + sel_ds.d, cfg.agent, derive_seed(cfg.seed, 0x04));
    if (!cfg.no_pretrain) {
        report.pretrain = detail::tagged_phase("pretrain", [&] {
            return pretrain(q, sel_ds, kr, full_ae, cfg.agent, derive_seed(cfg.seed, 0x05), &ctx);
        });
    }
    report.timing.pretrain_s = timer.lap();

    const DenseNet pretrained_snapshot = q.net();
    detail::EpisodeLoopResult main_loop = detail::tagged_phase("episodes", [&] {
        return detail::episode_loop(cfg, sel_ds, kr, full_ae, q, false, 0x100);
    });
    report.mask = main_loop.final_mask;
    report.mask_fallback = main_loop.mask_fallback;
    report.episodes = std::move(main_loop.episodes);

    if (cfg.random_reward_comparator && !cfg.random_reward && ds.target) {
        QNetwork q_rand = QNetwork::make(cfg.ae_code + sel_ds.d, cfg.agent,
                                         derive_seed(cfg.seed, 0x04));
        q_rand.net() = pretrained_snapshot;
        q_rand.sync_target();
        report.random_reward_mask = detail::tagged_phase("episodes", [&] {
            return detail::episode_loop(cfg, sel_ds, kr, full_ae, q_rand, true, 0x200).final_mask;
        });
    }
    report.timing.episodes_s = timer.lap();
    report.timing.downstream_invocations_during_selection = counter.invocations;

    if (ds.target) {
        detail::tagged_phase("evaluation", [&] {
            const auto [train, test] = split(ds, {cfg.train_fraction, derive_seed(cfg.seed, 0x09)});
            report.comparators = compare(train, test, report.mask, report.random_reward_mask,
                                         cfg.eval_params, derive_seed(cfg.seed, 0x0a),
                                         cfg.random_half_seeds, &counter);
            for (ModelKind mk : models_for(ds.task)) {
                report.selected_metrics.push_back(
                    train_eval(train, test, report.mask, mk, cfg.eval_params, &counter));
            }
            return 0;
        });
    }
    report.timing.evaluation_s = timer.lap();
    report.timing.total_s = total_timer.lap();

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        {
            std::ofstream out(cfg.out_dir + "/report.json");
            if (!out) throw DataError("cannot write report in " + cfg.out_dir);
            out << report.to_json().dump(2) << '\n';
        }
        if (!report.comparators.empty()) {
            detail::write_summary_csv(report, cfg.out_dir + "/summary.csv");
        }
        if (cfg.trace) detail::write_trace_csv(report, cfg.out_dir + "/trace.csv");
        if (cfg.dump_knockoffs) {
            dump_knockoffs_csv(kr, cfg.out_dir + "/knockoffs.csv");
            dump_labels_csv(kr, sel_ds.feature_names, cfg.out_dir + "/knockoff_labels.csv");
        }
        if (cfg.dump_encodings) {
            dump_encoding_csv(full_ae, build_descriptor(ctx, report.mask),
                              cfg.out_dir + "/encodings.csv");
        }
    }
    return report;
}

inline SelectionReport run_select(const RunConfig& cfg) {
    cfg.validate();
    const Dataset ds = detail::tagged_phase("ingest", [&] {
        const std::optional<std::string> target =
            cfg.target_column.empty() ? std::nullopt : std::make_optional(cfg.target_column);
        return load_csv(cfg.data_path, target, cfg.task);
    });
    return run_select_on(cfg, ds, detail::hash_file(cfg.data_path));
}

// ---- ablation suite ----

struct AblationVariant {
    std::string label;
    RunConfig cfg;
};

struct AblationRow {
    std::string variant;
    std::vector<double> per_seed_metric;
    double mean_metric = 0.0;
    double mean_mask_weight = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::vector<uint64_t> seeds;

    json to_json() const {
        json j;
        j["seeds"] = seeds;
        json rws = json::array();
        for (const AblationRow& r : rows) {
            rws.push_back({{"variant", r.variant},
                           {"per_seed_metric", r.per_seed_metric},
                           {"mean_metric", r.mean_metric},
                           {"mean_mask_weight", r.mean_mask_weight}});
        }
        j["rows"] = std::move(rws);
        return j;
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write file: " + path);
        out.precision(12);
        out << "variant,mean_metric,mean_mask_weight\n";
        for (const AblationRow& r : rows) {
            out << r.variant << ',' << r.mean_metric << ',' << r.mean_mask_weight << '\n';
        }
    }
};

inline std::vector<AblationVariant> expand_axes(const RunConfig& base,
                                                const std::vector<std::string>& axes) {
    std::vector<AblationVariant> variants{{"base", base}};
    auto cross = [&](const std::vector<std::pair<std::string, std::function<void(RunConfig&)>>>& opts) {
        std::vector<AblationVariant> next;
        for (const AblationVariant& v : variants) {
            for (const auto& [tag, apply] : opts) {
                AblationVariant nv = v;
                nv.label = v.label == "base" ? tag : v.label + "|" + tag;
                apply(nv.cfg);
                next.push_back(std::move(nv));
            }
        }
        variants = std::move(next);
    };

    for (const std::string& axis : axes) {
        if (axis == "eps") {
            cross({{"eps=10:0:90", [](RunConfig& c) { c.policy.eps_random = 0.10; c.policy.eps_label = 0.0; }},
                   {"eps=0:10:90", [](RunConfig& c) { c.policy.eps_random = 0.0; c.policy.eps_label = 0.10; }},
                   {"eps=5:5:90", [](RunConfig& c) { c.policy.eps_random = 0.05; c.policy.eps_label = 0.05; }},
                   {"eps=0:0:100", [](RunConfig& c) { c.policy.eps_random = 0.0; c.policy.eps_label = 0.0; }}});
        } else if (axis == "pretrain") {
            cross({{"pretrain=on", [](RunConfig& c) { c.no_pretrain = false; }},
                   {"pretrain=off", [](RunConfig& c) { c.no_pretrain = true; }}});
        } else if (axis == "knockoff-reward") {
            cross({{"kreward=on", [](RunConfig& c) { c.no_knockoff_reward = false; }},
                   {"kreward=off", [](RunConfig& c) { c.no_knockoff_reward = true; }}});
        } else if (axis == "greedy-guidance") {
            cross({{"guidance=on", [](RunConfig& c) { c.no_greedy_guidance = false; }},
                   {"guidance=off", [](RunConfig& c) { c.no_greedy_guidance = true; }}});
        } else if (axis == "matrix-reward") {
            cross({{"mreward=on", [](RunConfig& c) { c.no_matrix_reward = false; }},
                   {"mreward=off", [](RunConfig& c) { c.no_matrix_reward = true; }}});
        } else if (axis == "random-reward") {
            cross({{"reward=learned", [](RunConfig& c) { c.random_reward = false; }},
                   {"reward=random", [](RunConfig& c) { c.random_reward = true; }}});
        } else if (axis == "reconstruction") {
            cross({{"rmr=compare", [](RunConfig& c) { c.reward_variant = RewardVariant::Compare; }},
                   {"rmr=reconstruct-original",
                    [](RunConfig& c) { c.reward_variant = RewardVariant::ReconstructOriginal; }}});
        } else {
            throw ConfigError("unknown ablation axis: " + axis);
        }
    }
    return variants;
}

// Cross-product of the requested axes over n_seeds seeds; the table reports
// the selected subset's mean downstream metric per variant. Each (variant,
// seed) run is independent; jobs > 1 runs them on worker threads.
inline AblationReport run_ablation_suite(const RunConfig& base, const std::vector<std::string>& axes,
                                         size_t n_seeds, size_t jobs = 1) {
    if (n_seeds == 0) throw ConfigError("need at least one seed");
    const std::vector<AblationVariant> variants = expand_axes(base, axes);

    AblationReport report;
    for (size_t i = 0; i < n_seeds; ++i) report.seeds.push_back(base.seed + i);

    struct Cell {
        size_t variant;
        uint64_t seed;
        double metric = 0.0;
        double weight = 0.0;
    };
    std::vector<Cell> cells;
    for (size_t v = 0; v < variants.size(); ++v) {
        for (uint64_t s : report.seeds) cells.push_back({v, s});
    }

    const Dataset ds = [&] {
        const std::optional<std::string> target =
            base.target_column.empty() ? std::nullopt : std::make_optional(base.target_column);
        return load_csv(base.data_path, target, base.task);
    }();
    const uint64_t data_hash = detail::hash_file(base.data_path);

    auto run_cell = [&](Cell& cell) {
        RunConfig cfg = variants[cell.variant].cfg;
        cfg.seed = cell.seed;
        cfg.out_dir.clear();
        cfg.random_reward_comparator = false;
        const SelectionReport r = run_select_on(cfg, ds, data_hash);
        cell.metric = r.selected_mean_metric();
        cell.weight = static_cast<double>(r.mask_weight());
    };

    if (jobs <= 1) {
        for (Cell& c : cells) run_cell(c);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                run_cell(cells[i]);
            }
        };
        std::vector<std::thread> pool;
        for (size_t t = 0; t < std::min(jobs, cells.size()); ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    for (size_t v = 0; v < variants.size(); ++v) {
        AblationRow row;
        row.variant = variants[v].label;
        for (const Cell& c : cells) {
            if (c.variant != v) continue;
            row.per_seed_metric.push_back(c.metric);
            row.mean_metric += c.metric;
            row.mean_mask_weight += c.weight;
        }
        row.mean_metric /= static_cast<double>(row.per_seed_metric.size());
        row.mean_mask_weight /= static_cast<double>(row.per_seed_metric.size());
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace kofs
