#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kofs/pipeline.hpp"
#include "kofs/synthetic.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void print_comparators(const nlohmann::json& rows) {
    std::cout << std::left << std::setw(16) << "method" << std::setw(14) << "mean_metric"
              << std::setw(12) << "mean_rank" << "per_model\n";
    for (const auto& r : rows) {
        std::cout << std::setw(16) << r.at("method").get<std::string>() << std::setw(14)
                  << std::setprecision(6) << r.at("mean_metric").get<double>() << std::setw(12)
                  << r.at("mean_rank").get<double>();
        for (const auto& v : r.at("per_model_metric")) std::cout << v.get<double>() << ' ';
        std::cout << '\n';
    }
}

void print_report_summary(const kofs::SelectionReport& report) {
    std::cout << "selected " << report.mask_weight() << "/" << report.d << " features:";
    for (size_t i = 0; i < report.mask.size(); ++i) {
        if (report.mask[i]) std::cout << ' ' << report.feature_names[i];
    }
    std::cout << '\n';
    if (!report.comparators.empty()) {
        const kofs::json j = report.to_json();
        print_comparators(j.at("comparators"));
    }
    std::cout << "phases: knockoff " << report.timing.knockoff_s << "s, autoencoder "
              << report.timing.autoencoder_s << "s, pretrain " << report.timing.pretrain_s
              << "s, episodes " << report.timing.episodes_s << "s, evaluation "
              << report.timing.evaluation_s << "s (total " << report.timing.total_s << "s)\n";
    std::cout << "downstream invocations during selection: "
              << report.timing.downstream_invocations_during_selection << '\n';
}

void add_run_options(CLI::App* cmd, kofs::RunConfig& cfg, std::string& task) {
    cmd->add_option("--data", cfg.data_path, "input CSV")->required();
    cmd->add_option("--task", task, "task kind: c|classification or r|regression")->required();
    cmd->add_option("--target", cfg.target_column, "target column name (omit for unsupervised-only)");
    cmd->add_option("--episodes", cfg.episodes, "selection passes over the features");
    cmd->add_option("--seed", cfg.seed, "master seed");
    cmd->add_option("--eps1", cfg.policy.eps_random, "random-exploration probability");
    cmd->add_option("--eps2", cfg.policy.eps_label, "label-guidance probability");
    cmd->add_option("--eps-decay", cfg.policy.decay, "per-episode epsilon decay factor");
    cmd->add_option("--eps-floor", cfg.policy.floor, "epsilon floor");
    cmd->add_option("--tau", cfg.tau, "knockoff-penalty attenuation coefficient");
    cmd->add_option("--ridge", cfg.ridge, "covariance ridge");
    cmd->add_option("--threshold", [&cfg](const std::vector<std::string>& v) {
            if (v[0] == "mean") cfg.threshold_mode = kofs::ThresholdMode::Mean;
            else if (v[0] == "median") cfg.threshold_mode = kofs::ThresholdMode::Median;
            else throw CLI::ValidationError("--threshold", "expected mean or median");
            return true;
        }, "pseudo-label threshold: mean|median");
    cmd->add_option("--score", [&cfg](const std::vector<std::string>& v) {
            if (v[0] == "mean-abs-corr") cfg.score_mode = kofs::ScoreMode::MeanAbsCorr;
            else if (v[0] == "own-column") cfg.score_mode = kofs::ScoreMode::OwnColumn;
            else throw CLI::ValidationError("--score", "expected mean-abs-corr or own-column");
            return true;
        }, "feature scoring: mean-abs-corr|own-column");
    cmd->add_option("--reward-variant", [&cfg](const std::vector<std::string>& v) {
            if (v[0] == "compare") cfg.reward_variant = kofs::RewardVariant::Compare;
            else if (v[0] == "reconstruct-original")
                cfg.reward_variant = kofs::RewardVariant::ReconstructOriginal;
            else throw CLI::ValidationError("--reward-variant", "expected compare or reconstruct-original");
            return true;
        }, "matrix reward form: compare|reconstruct-original");
    cmd->add_flag("--no-pretrain", cfg.no_pretrain, "skip pseudo-label pretraining");
    cmd->add_flag("--no-knockoff-reward", cfg.no_knockoff_reward, "disable the pseudo-label penalty");
    cmd->add_flag("--no-greedy-guidance", cfg.no_greedy_guidance,
                  "fold label guidance back into random exploration");
    cmd->add_flag("--no-matrix-reward", cfg.no_matrix_reward, "disable the representation-gap reward");
    cmd->add_flag("--random-reward", cfg.random_reward, "replace the reward with U[-1,1]");
    cmd->add_flag("--rmr-every-episode", cfg.rmr_every_episode,
                  "compute the matrix reward only at episode end");
    cmd->add_flag("--full-retrain", cfg.full_retrain,
                  "retrain the subset autoencoder from scratch per reward evaluation");
    cmd->add_flag("--shuffle-order", cfg.shuffle_order, "shuffle the feature visit order per episode");
    cmd->add_flag("--trace", cfg.trace, "write per-step reward trace CSV");
    cmd->add_flag("--dump-knockoffs", cfg.dump_knockoffs, "write knockoff matrix and label CSVs");
    cmd->add_flag("--dump-encodings", cfg.dump_encodings, "write the selected-subset encoding CSV");
    cmd->add_option("--out", cfg.out_dir, "output directory for report.json and CSVs");

    cmd->add_option("--ae-hidden", cfg.ae_hidden, "autoencoder hidden width");
    cmd->add_option("--ae-code", cfg.ae_code, "representation size k");
    cmd->add_option("--ae-bootstrap", cfg.ae_bootstrap, "bootstrap descriptors for AE training");
    cmd->add_option("--ae-epochs", cfg.ae_epochs, "AE training epochs");
    cmd->add_option("--ae-finetune-steps", cfg.ae_finetune_steps, "subset-AE steps per reward");
    cmd->add_option("--ae-finetune-samples", cfg.ae_finetune_samples, "bootstrap samples per reward");
    cmd->add_option("--ae-lr", cfg.ae_lr, "AE learning rate");
    cmd->add_option("--ae-finetune-lr", cfg.ae_finetune_lr, "subset-AE fine-tune learning rate");
    cmd->add_option("--gamma", cfg.agent.gamma, "discount factor");
    cmd->add_option("--agent-lr", cfg.agent.lr, "Q-network learning rate");
    cmd->add_option("--batch", cfg.agent.batch, "replay batch size");
    cmd->add_option("--buffer", cfg.agent.buffer_capacity, "replay capacity");
    cmd->add_option("--target-sync", cfg.agent.target_sync_interval, "target refresh interval");
    cmd->add_option("--pretrain-epochs", cfg.agent.pretrain_epochs, "pretraining epochs");
    cmd->add_option("--train-fraction", cfg.train_fraction, "evaluation train split");
    cmd->add_option("--knn-k", cfg.eval_params.knn_k, "k for the kNN models");
    cmd->add_option("--tree-depth", cfg.eval_params.tree_depth, "decision tree depth");
    cmd->add_option("--config", "flat key=value config file; command line overrides it");
}

// Expands `--config FILE` into --key value tokens for every key the user did
// not pass explicitly, so the command line always wins over the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;

    std::ifstream in(path);
    if (!in) throw kofs::ConfigError("cannot open config file: " + path);

    auto user_has = [&](const std::string& key) {
        const std::string flag = "--" + key;
        for (const std::string& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        }
        return false;
    };

    std::vector<std::string> out = args;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw kofs::ConfigError("config file line " + std::to_string(line_no) +
                                    ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || user_has(key)) continue;

        static const std::set<std::string> flag_keys{
            "no-pretrain", "no-knockoff-reward", "no-greedy-guidance", "no-matrix-reward",
            "random-reward", "rmr-every-episode", "full-retrain", "shuffle-order",
            "trace", "dump-knockoffs", "dump-encodings"};
        if (flag_keys.count(key)) {
            if (value == "true" || value == "yes" || value == "1") out.push_back("--" + key);
            else if (value != "false" && value != "no" && value != "0") {
                throw kofs::ConfigError("config file line " + std::to_string(line_no) + ": '" +
                                        key + "' expects a boolean");
            }
        } else {
            out.push_back("--" + key);
            out.push_back(value);
        }
    }
    return out;
}

kofs::Task parse_task(const std::string& s) {
    if (s == "c" || s == "classification") return kofs::Task::Classification;
    if (s == "r" || s == "regression") return kofs::Task::Regression;
    throw kofs::ConfigError("unknown task: " + s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knockoff-guided unsupervised feature selection"};
    app.require_subcommand(1);

    kofs::RunConfig cfg;
    std::string task_str;
    CLI::App* select = app.add_subcommand("select", "run the selection pipeline on a CSV");
    add_run_options(select, cfg, task_str);

    kofs::RunConfig abl_cfg;
    std::string abl_task_str;
    std::string axes_arg = "eps";
    size_t abl_seeds = 3;
    size_t abl_jobs = 1;
    std::string abl_out;
    CLI::App* ablate = app.add_subcommand("ablate", "cross-product ablation study");
    add_run_options(ablate, abl_cfg, abl_task_str);
    ablate->add_option("--axes", axes_arg,
                       "comma-separated axes: eps,pretrain,knockoff-reward,greedy-guidance,"
                       "matrix-reward,random-reward,reconstruction");
    ablate->add_option("--seeds", abl_seeds, "number of seeds per variant");
    ablate->add_option("--jobs", abl_jobs, "parallel workers");
    ablate->add_option("--ablate-out", abl_out, "output directory for the ablation table");

    std::string report_path;
    CLI::App* eval = app.add_subcommand("eval", "print the comparator table of a report");
    eval->add_option("--report", report_path, "report.json produced by select")->required();

    std::string gen_out = "data";
    uint64_t gen_seed = 0;
    CLI::App* datagen = app.add_subcommand("datagen", "write the bundled benchmark CSVs");
    datagen->add_option("--out", gen_out, "output directory");
    datagen->add_option("--seed", gen_seed, "generator seed");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(args);
        // CLI11 parses token vectors in reverse order
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    } catch (const kofs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (*select) {
            cfg.task = parse_task(task_str);
            const kofs::SelectionReport report = kofs::run_select(cfg);
            print_report_summary(report);
            if (!cfg.out_dir.empty()) {
                std::cout << "report written to " << cfg.out_dir << "/report.json\n";
            }
        } else if (*ablate) {
            abl_cfg.task = parse_task(abl_task_str);
            std::vector<std::string> axes;
            std::stringstream ss(axes_arg);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) axes.push_back(item);
            }
            const kofs::AblationReport report =
                kofs::run_ablation_suite(abl_cfg, axes, abl_seeds, abl_jobs);
            std::cout << std::left << std::setw(44) << "variant" << std::setw(16) << "mean_metric"
                      << "mean_mask_weight\n";
            for (const kofs::AblationRow& r : report.rows) {
                std::cout << std::setw(44) << r.variant << std::setw(16) << std::setprecision(6)
                          << r.mean_metric << r.mean_mask_weight << '\n';
            }
            if (!abl_out.empty()) {
                std::filesystem::create_directories(abl_out);
                std::ofstream out(abl_out + "/ablation.json");
                out << report.to_json().dump(2) << '\n';
                report.write_csv(abl_out + "/ablation.csv");
                std::cout << "ablation table written to " << abl_out << '\n';
            }
        } else if (*eval) {
            std::ifstream in(report_path);
            if (!in) throw kofs::DataError("cannot open report: " + report_path);
            nlohmann::json j;
            in >> j;
            std::cout << "dataset: " << j.at("config").at("data").get<std::string>() << " (n="
                      << j.at("n").get<size_t>() << ", d=" << j.at("d").get<size_t>() << ")\n";
            std::cout << "mask weight: ";
            size_t w = 0;
            for (const auto& b : j.at("mask")) w += b.get<int>();
            std::cout << w << '\n';
            if (j.contains("comparators")) print_comparators(j.at("comparators"));
            if (j.contains("timings")) {
                std::cout << "total " << j.at("timings").at("total_s").get<double>() << "s\n";
            }
        } else if (*datagen) {
            std::filesystem::create_directories(gen_out);
            for (kofs::BenchmarkKind kind : kofs::all_benchmarks()) {
                const kofs::BenchmarkSpec spec = kofs::benchmark_spec(kind);
                const std::string path = gen_out + "/" + spec.name + ".csv";
                kofs::write_benchmark_csv(kind, gen_seed, path);
                std::cout << "wrote " << path << " (" << spec.n << " rows, " << spec.d
                          << " features, task " << to_string(spec.task) << ", target '"
                          << spec.target_name << "')\n";
            }
        }
    } catch (const kofs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const kofs::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const kofs::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
    return 0;
}
