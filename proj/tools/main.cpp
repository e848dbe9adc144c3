// stdit - conditional diffusion imputation of spatial gene expression from
// single-cell references. Subcommands: synth, preprocess, train, predict,
// evaluate, robustness.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stdit/commands.hpp"
#include "stdit/error.hpp"

namespace {

using namespace stdit;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<std::string> ablations;
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = 0;
    bool threads_set = false;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run config file (INI sections)");
    cmd->add_option("--set", opts.overrides,
                    "override a config key, e.g. --set train.iterations=500");
    cmd->add_option("--ablation", opts.ablations,
                    "ablation toggle, e.g. --ablation condition=off or concat=off");
    auto* seed = cmd->add_option("--seed", opts.seed, "override run.seed");
    seed->each([&opts](const std::string&) { opts.seed_set = true; });
    auto* threads = cmd->add_option("--threads", opts.threads, "override run.threads");
    threads->each([&opts](const std::string&) { opts.threads_set = true; });
    cmd->add_option("--out-dir", opts.out_dir, "override run.out_dir");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg =
        opts.config_path.empty() ? default_run_config() : parse_run_config(opts.config_path);
    for (const std::string& o : opts.overrides) apply_override(cfg, o);
    for (const std::string& a : opts.ablations) apply_override(cfg, "ablation." + a);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (opts.threads_set) cfg.threads = opts.threads;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    cfg.train.seed = cfg.seed;
    return cfg;
}

std::string config_key_help() {
    std::ostringstream os;
    os << "Config keys (section.key = default):\n";
    for (const ConfigKey& k : config_keys()) {
        os << "  " << k.key << " = " << (*k.def ? k.def : "(required)") << "  -- " << k.help
           << "\n";
    }
    return os.str();
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffusion-transformer imputation of spatial gene expression"};
    app.require_subcommand(1);
    app.footer(config_key_help());

    // synth
    SynthConfig synth_cfg;
    std::string synth_out = "data/synth";
    auto* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
    synth->add_option("--genes", synth_cfg.genes, "shared genes")->capture_default_str();
    synth->add_option("--spots", synth_cfg.spots, "ST spots")->capture_default_str();
    synth->add_option("--cells", synth_cfg.cells, "SC cells")->capture_default_str();
    synth->add_option("--sc-extra", synth_cfg.sc_extra, "extra SC-only genes")
        ->capture_default_str();
    synth->add_option("--rank", synth_cfg.rank, "latent rank k")->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise, "log-scale jitter (0 = deterministic)")
        ->capture_default_str();
    synth->add_option("--base-rate", synth_cfg.base_rate, "count scale")->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->capture_default_str();

    // preprocess
    CommonOpts pre_opts;
    auto* pre = app.add_subcommand("preprocess", "load, filter, normalize, align and split");
    add_common(pre, pre_opts);

    // train
    CommonOpts train_opts;
    bool resume = false;
    auto* train = app.add_subcommand("train", "train the denoiser on a processed bundle");
    add_common(train, train_opts);
    train->add_flag("--resume", resume, "continue from the latest checkpoint");

    // predict
    CommonOpts pred_opts;
    std::string ckpt_path;
    std::string genes_csv;
    std::string pred_out;
    bool counts = false;
    auto* predict = app.add_subcommand("predict", "sample expression for test or named genes");
    add_common(predict, pred_opts);
    predict->add_option("--checkpoint", ckpt_path, "checkpoint file (default ckpt_latest.bin)");
    predict->add_option("--genes", genes_csv, "comma-separated gene ids (default: test split)");
    predict->add_flag("--counts", counts, "write counts instead of log1p values");
    predict->add_option("--out", pred_out, "prediction file (default predictions.tsv)");

    // evaluate
    std::string truth_path;
    std::vector<std::string> pred_paths;
    std::vector<std::string> labels;
    std::string eval_out = "eval";
    bool cluster = false;
    auto* evaluate = app.add_subcommand("evaluate", "score prediction files against a truth matrix");
    evaluate->add_option("--truth", truth_path, "truth matrix (log1p space)")->required();
    evaluate->add_option("--pred", pred_paths, "prediction file (repeatable)")->required();
    evaluate->add_option("--label", labels, "method label per prediction file");
    evaluate->add_option("--out-dir", eval_out, "report directory")->capture_default_str();
    evaluate->add_flag("--cluster-order", cluster, "emit hierarchical gene ordering");

    // robustness
    CommonOpts rob_opts;
    std::string rob_ckpt;
    std::string rates_csv = "0.1,0.3,0.5,0.7";
    auto* robustness =
        app.add_subcommand("robustness", "robustness score across downsampling rates");
    add_common(robustness, rob_opts);
    robustness->add_option("--checkpoint", rob_ckpt, "checkpoint file (default ckpt_latest.bin)");
    robustness->add_option("--rates", rates_csv, "comma-separated downsampling rates")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) {
            commands::run_synth(synth_cfg, synth_out);
            std::cerr << "wrote synthetic dataset to " << synth_out << "\n";
            return 0;
        }
        if (pre->parsed()) {
            RunConfig cfg = resolve_config(pre_opts);
            auto sum = commands::run_preprocess(cfg);
            std::cerr << "bundle: " << sum.bundle_dir << "\n"
                      << "ST: " << sum.st_genes_kept << "/" << sum.st_genes_raw << " genes, "
                      << sum.st_spots << " spots, dropout " << sum.st_dropout << "\n"
                      << "SC: " << sum.sc_genes_kept << "/" << sum.sc_genes_raw << " genes, "
                      << sum.sc_cells << " cells, dropout " << sum.sc_dropout << "\n"
                      << "shared " << sum.shared << ", sc-unique " << sum.sc_unique << "\n";
            return 0;
        }
        if (train->parsed()) {
            RunConfig cfg = resolve_config(train_opts);
            auto sum = commands::run_train(cfg, resume, &std::cerr);
            std::cerr << "parameters " << sum.parameters << "\n"
                      << "iterations " << sum.iterations << "\n"
                      << "final train loss " << sum.final_train_loss << ", val loss "
                      << sum.final_val_loss << "\n"
                      << "checkpoints: " << sum.latest_path << " (latest)";
            if (std::filesystem::exists(sum.best_path)) {
                std::cerr << ", " << sum.best_path << " (best)";
            }
            std::cerr << "\n";
            return 0;
        }
        if (predict->parsed()) {
            RunConfig cfg = resolve_config(pred_opts);
            if (ckpt_path.empty()) {
                ckpt_path = (std::filesystem::path(cfg.out_dir) / "ckpt_latest.bin").string();
            }
            if (pred_out.empty()) {
                pred_out = (std::filesystem::path(cfg.out_dir) / "predictions.tsv").string();
            }
            auto sum = commands::run_predict(cfg, ckpt_path, split_list(genes_csv), counts,
                                             pred_out);
            std::cerr << "wrote " << sum.genes << " gene predictions to " << sum.out_path
                      << " in " << sum.wall_seconds << "s\n";
            return 0;
        }
        if (evaluate->parsed()) {
            auto sum = commands::run_evaluate(truth_path, pred_paths, labels, eval_out, cluster);
            std::printf("method\tpcc\tssim\trmse\tjs%s\n",
                        sum.accuracy.empty() ? "" : "\tas");
            for (std::size_t i = 0; i < sum.reports.size(); ++i) {
                const GeneMetrics& m = sum.reports[i].mean;
                std::printf("%s\t%.4f\t%.4f\t%.4f\t%.4f", sum.reports[i].label.c_str(), m.pcc,
                            m.ssim, m.rmse, m.js);
                if (!sum.accuracy.empty()) std::printf("\t%.4f", sum.accuracy[i]);
                std::printf("\n");
            }
            return 0;
        }
        if (robustness->parsed()) {
            RunConfig cfg = resolve_config(rob_opts);
            if (rob_ckpt.empty()) {
                rob_ckpt = (std::filesystem::path(cfg.out_dir) / "ckpt_latest.bin").string();
            }
            std::vector<double> rates;
            for (const std::string& r : split_list(rates_csv)) rates.push_back(std::stod(r));
            auto table = commands::run_robustness(cfg, rob_ckpt, rates, &std::cerr);
            std::printf("rate\trs\n");
            for (const auto& row : table) std::printf("%g\t%g\n", row.rate, row.rs);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
