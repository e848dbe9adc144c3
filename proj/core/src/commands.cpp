#include "stdit/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "stdit/error.hpp"

namespace stdit::commands {

namespace fs = std::filesystem;

namespace {

void write_stats_tsv(const ExpressionMatrix& m, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write '" + path + "'");
    std::fprintf(f, "gene\tmean\tstd\n");
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        std::fprintf(f, "%s\t%.17g\t%.17g\n", m.gene_ids[g].c_str(), m.per_gene_stats[g].mean,
                     m.per_gene_stats[g].stddev);
    }
    std::fclose(f);
}

std::vector<GeneStats> read_stats_tsv(const std::string& path,
                                      const std::vector<std::string>& expect_ids) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);  // header
    std::vector<GeneStats> stats;
    std::vector<std::string> ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw DataError(path + ": malformed stats line '" + line + "'");
        }
        ids.push_back(line.substr(0, t1));
        GeneStats s;
        s.mean = std::strtod(line.substr(t1 + 1, t2 - t1 - 1).c_str(), nullptr);
        s.stddev = std::strtod(line.substr(t2 + 1).c_str(), nullptr);
        stats.push_back(s);
    }
    if (ids != expect_ids) {
        throw DataError(path + ": gene ids do not match the processed matrix");
    }
    return stats;
}

// log1p view of raw counts over an explicit gene list (absent ids -> zeros)
ExpressionMatrix log1p_matrix_for(const ExpressionMatrix& raw,
                                  const std::vector<std::string>& gene_ids) {
    ExpressionMatrix out;
    out.gene_ids = gene_ids;
    out.col_ids = raw.col_ids;
    out.values = Tensor(gene_ids.size(), raw.n_cols());
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t g = 0; g < raw.n_genes(); ++g) index.emplace(raw.gene_ids[g], g);
    for (std::size_t g = 0; g < gene_ids.size(); ++g) {
        auto it = index.find(gene_ids[g]);
        if (it == index.end()) continue;
        for (std::size_t c = 0; c < raw.n_cols(); ++c) {
            out.values.at(g, c) = std::log1p(raw.values.at(it->second, c));
        }
    }
    return out;
}

std::string bundle_dir_of(const RunConfig& cfg) {
    return (fs::path(cfg.out_dir) / "bundle").string();
}

}  // namespace

PreprocessSummary run_preprocess(const RunConfig& cfg) {
    if (cfg.st_path.empty()) throw ConfigError("data.st_path is required");
    if (cfg.sc_path.empty()) throw ConfigError("data.sc_path is required");

    ExpressionMatrix st_raw = load_matrix(cfg.st_path, cfg.st_orientation);
    ExpressionMatrix sc_raw = load_matrix(cfg.sc_path, cfg.sc_orientation);

    PreprocessSummary sum;
    sum.st_genes_raw = st_raw.n_genes();
    sum.sc_genes_raw = sc_raw.n_genes();
    sum.st_spots = st_raw.n_cols();
    sum.sc_cells = sc_raw.n_cols();
    sum.st_dropout = dropout_rate(st_raw);
    sum.sc_dropout = dropout_rate(sc_raw);

    ExpressionMatrix st = preprocess(st_raw, cfg.st_top_k);
    ExpressionMatrix sc = preprocess(sc_raw, cfg.sc_top_k);
    sum.st_genes_kept = st.n_genes();
    sum.sc_genes_kept = sc.n_genes();

    GeneAlignment alignment = align(st, sc);
    SplitSpec split_spec = split(alignment, cfg.seed);
    sum.shared = alignment.shared.size();
    sum.sc_unique = alignment.sc_unique.size();

    const std::string dir = bundle_dir_of(cfg);
    fs::create_directories(dir);
    sum.bundle_dir = dir;

    save_matrix(st, (fs::path(dir) / "st_processed.tsv").string());
    save_matrix(sc, (fs::path(dir) / "sc_processed.tsv").string());
    write_stats_tsv(st, (fs::path(dir) / "st_stats.tsv").string());
    write_stats_tsv(sc, (fs::path(dir) / "sc_stats.tsv").string());
    save_matrix(log1p_matrix_for(st_raw, st.gene_ids),
                (fs::path(dir) / "st_log1p.tsv").string());
    save_matrix(st_raw, (fs::path(dir) / "st_raw.tsv").string());

    {
        std::ofstream f((fs::path(dir) / "split.tsv").string());
        if (!f) throw DataError("cannot write split file");
        for (const std::string& id : split_spec.train) f << id << "\ttrain\n";
        for (const std::string& id : split_spec.val) f << id << "\tval\n";
        for (const std::string& id : split_spec.test) f << id << "\ttest\n";
    }
    {
        std::ofstream f((fs::path(dir) / "alignment.tsv").string());
        if (!f) throw DataError("cannot write alignment file");
        for (const std::string& id : alignment.shared) f << id << "\tshared\n";
        for (const std::string& id : alignment.sc_unique) f << id << "\tsc_unique\n";
    }
    {
        std::ofstream f((fs::path(dir) / "stats_report.txt").string());
        if (!f) throw DataError("cannot write stats report");
        char buf[64];
        auto pct = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
            return std::string(buf);
        };
        f << "st_genes_raw\t" << sum.st_genes_raw << "\n"
          << "st_genes_kept\t" << sum.st_genes_kept << "\n"
          << "st_spots\t" << sum.st_spots << "\n"
          << "st_dropout_rate\t" << pct(sum.st_dropout) << "\n"
          << "sc_genes_raw\t" << sum.sc_genes_raw << "\n"
          << "sc_genes_kept\t" << sum.sc_genes_kept << "\n"
          << "sc_cells\t" << sum.sc_cells << "\n"
          << "sc_dropout_rate\t" << pct(sum.sc_dropout) << "\n"
          << "shared_genes\t" << sum.shared << "\n"
          << "sc_unique_genes\t" << sum.sc_unique << "\n"
          << "train_genes\t" << split_spec.train.size() << "\n"
          << "val_genes\t" << split_spec.val.size() << "\n"
          << "test_genes\t" << split_spec.test.size() << "\n";
    }
    {
        std::ofstream f((fs::path(dir) / "bundle.ini").string());
        if (!f) throw DataError("cannot write bundle manifest");
        f << "[bundle]\n"
          << "st_processed = st_processed.tsv\n"
          << "sc_processed = sc_processed.tsv\n"
          << "st_log1p = st_log1p.tsv\n"
          << "st_raw = st_raw.tsv\n"
          << "st_stats = st_stats.tsv\n"
          << "sc_stats = sc_stats.tsv\n"
          << "split = split.tsv\n"
          << "alignment = alignment.tsv\n"
          << "seed = " << cfg.seed << "\n"
          << "st_top_k = " << cfg.st_top_k << "\n"
          << "sc_top_k = " << cfg.sc_top_k << "\n";
    }
    return sum;
}

DataBundle load_bundle(const std::string& bundle_dir) {
    fs::path dir(bundle_dir);
    if (!fs::exists(dir / "bundle.ini")) {
        throw DataError("no processed bundle at '" + bundle_dir + "' (run preprocess first)");
    }
    DataBundle b;
    b.st = load_matrix((dir / "st_processed.tsv").string(), Orientation::GenesInRows);
    b.st.normalized = true;
    b.st.per_gene_stats = read_stats_tsv((dir / "st_stats.tsv").string(), b.st.gene_ids);
    b.sc = load_matrix((dir / "sc_processed.tsv").string(), Orientation::GenesInRows);
    b.sc.normalized = true;
    b.sc.per_gene_stats = read_stats_tsv((dir / "sc_stats.tsv").string(), b.sc.gene_ids);
    b.st_raw = load_matrix((dir / "st_raw.tsv").string(), Orientation::GenesInRows);
    b.alignment = align(b.st, b.sc);

    std::ifstream f((dir / "split.tsv").string());
    if (!f) throw DataError("cannot open split file in '" + bundle_dir + "'");
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("malformed split line '" + line + "'");
        }
        std::string id = line.substr(0, tab);
        std::string part = line.substr(tab + 1);
        if (part == "train") b.split_spec.train.push_back(id);
        else if (part == "val") b.split_spec.val.push_back(id);
        else if (part == "test") b.split_spec.test.push_back(id);
        else throw DataError("unknown split tag '" + part + "'");
    }
    return b;
}

TrainSummary run_train(const RunConfig& cfg, bool resume, std::ostream* progress) {
    DataBundle data = load_bundle(bundle_dir_of(cfg));

    Checkpoint ckpt;
    const std::string latest = (fs::path(cfg.out_dir) / "ckpt_latest.bin").string();
    if (resume) {
        ckpt = load_checkpoint(latest);
        ckpt.train_cfg.iterations = cfg.train.iterations;
    } else {
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        ckpt = init_run(data, cfg.model, tc);
    }

    FitResult fit_result = fit(ckpt, data, cfg.out_dir, progress);

    TrainSummary sum;
    sum.best_path = fit_result.best_path;
    sum.latest_path = fit_result.latest_path;
    sum.parameters = param_count(ckpt.params.cfg);
    sum.iterations = ckpt.iteration;
    sum.final_train_loss = fit_result.final_train_loss;
    sum.final_val_loss = fit_result.final_val_loss;
    return sum;
}

PredictSummary run_predict(const RunConfig& cfg, const std::string& ckpt_path,
                           const std::vector<std::string>& genes, bool counts,
                           const std::string& out_path) {
    const auto start = std::chrono::steady_clock::now();
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DataBundle data = load_bundle(bundle_dir_of(cfg));
    if (data.sc.n_cols() != ckpt.params.cfg.q || data.st.n_cols() != ckpt.params.cfg.p) {
        throw DataError("predict: bundle dimensions do not match checkpoint (p=" +
                        std::to_string(ckpt.params.cfg.p) + ", q=" +
                        std::to_string(ckpt.params.cfg.q) + ")");
    }

    ExpressionMatrix pred =
        genes.empty() ? predict_testset(ckpt, data.sc, cfg.draws, cfg.seed, cfg.threads)
                      : predict_genes(ckpt, data.sc, genes, cfg.draws, cfg.seed, cfg.threads);
    destandardize_to_log1p(pred, ckpt);
    if (counts) log1p_to_counts(pred);

    fs::create_directories(fs::path(out_path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_path).parent_path());
    save_matrix(pred, out_path);

    PredictSummary sum;
    sum.out_path = out_path;
    sum.genes = pred.n_genes();
    sum.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    sum.summary_path = out_path + ".summary.txt";
    std::ofstream f(sum.summary_path);
    if (!f) throw DataError("cannot write '" + sum.summary_path + "'");
    f << "genes\t" << sum.genes << "\n"
      << "draws\t" << cfg.draws << "\n"
      << "seed\t" << cfg.seed << "\n"
      << "space\t" << (counts ? "counts" : "log1p") << "\n";
    for (const std::string& id : pred.gene_ids) {
        f << "gene_seed\t" << id << "\t" << derive_seed(cfg.seed, "sample/" + id) << "\n";
    }
    f << "wall_seconds\t" << sum.wall_seconds << "\n";
    return sum;
}

namespace {

std::string label_from_path(const std::string& path) {
    std::string stem = fs::path(path).stem().string();
    return stem.empty() ? path : stem;
}

}  // namespace

EvaluateSummary run_evaluate(const std::string& truth_path,
                             const std::vector<std::string>& pred_paths,
                             std::vector<std::string> labels, const std::string& out_dir,
                             bool cluster) {
    if (pred_paths.empty()) throw ConfigError("evaluate: no prediction files given");
    if (!labels.empty() && labels.size() != pred_paths.size()) {
        throw ConfigError("evaluate: got " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(pred_paths.size()) + " prediction files");
    }
    if (labels.empty()) {
        for (const std::string& p : pred_paths) labels.push_back(label_from_path(p));
    }

    ExpressionMatrix truth = load_matrix(truth_path, Orientation::GenesInRows);
    fs::create_directories(out_dir);

    EvaluateSummary sum;
    for (std::size_t i = 0; i < pred_paths.size(); ++i) {
        ExpressionMatrix pred = load_matrix(pred_paths[i], Orientation::GenesInRows);
        MetricsReport report = evaluate_predictions(labels[i], truth, pred);
        std::string base = (fs::path(out_dir) / (labels[i] + ".metrics")).string();
        write_report_tsv(report, base + ".tsv");
        write_report_json(report, base + ".json");
        sum.report_paths.push_back(base + ".tsv");
        sum.reports.push_back(std::move(report));
    }

    if (sum.reports.size() >= 2) {
        sum.accuracy = accuracy_score(sum.reports);
        sum.comparison_path = (fs::path(out_dir) / "comparison.tsv").string();
        std::FILE* f = std::fopen(sum.comparison_path.c_str(), "w");
        if (!f) throw DataError("cannot write '" + sum.comparison_path + "'");
        std::fprintf(f, "method\tpcc\tssim\trmse\tjs\tas\n");
        for (std::size_t i = 0; i < sum.reports.size(); ++i) {
            const GeneMetrics& m = sum.reports[i].mean;
            std::fprintf(f, "%s\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                         sum.reports[i].label.c_str(), m.pcc, m.ssim, m.rmse, m.js,
                         sum.accuracy[i]);
        }
        std::fclose(f);
    }

    if (cluster) {
        // order the truth rows of the evaluated gene set, for heatmap tools
        const std::vector<std::string>& genes = sum.reports.front().genes;
        Tensor rows(genes.size(), truth.n_cols());
        for (std::size_t g = 0; g < genes.size(); ++g) {
            std::ptrdiff_t tr = truth.find_gene(genes[g]);
            for (std::size_t c = 0; c < truth.n_cols(); ++c) {
                rows.at(g, c) = truth.values.at(static_cast<std::size_t>(tr), c);
            }
        }
        ClusterOrder order = cluster_order(rows);
        sum.cluster_path = (fs::path(out_dir) / "cluster_order.txt").string();
        std::ofstream f(sum.cluster_path);
        if (!f) throw DataError("cannot write '" + sum.cluster_path + "'");
        for (std::size_t idx : order.order) f << genes[idx] << "\n";
    }
    return sum;
}

std::vector<RobustnessRow> run_robustness(const RunConfig& cfg, const std::string& ckpt_path,
                                          const std::vector<double>& rates,
                                          std::ostream* progress) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DataBundle data = load_bundle(bundle_dir_of(cfg));

    ExpressionMatrix pred = predict_testset(ckpt, data.sc, cfg.draws, cfg.seed, cfg.threads);
    destandardize_to_log1p(pred, ckpt);
    ExpressionMatrix truth = log1p_matrix_for(data.st_raw, data.st.gene_ids);
    MetricsReport original = evaluate_predictions("original", truth, pred);
    if (progress) {
        (*progress) << "original mean PCC " << original.mean.pcc << "\n";
    }

    std::vector<RobustnessRow> table;
    for (double rate : rates) {
        ExpressionMatrix ds_raw = downsample(data.st_raw, rate, cfg.seed);
        ExpressionMatrix ds_truth = log1p_matrix_for(ds_raw, data.st.gene_ids);
        MetricsReport down = evaluate_predictions("downsampled", ds_truth, pred);
        RobustnessRow row;
        row.rate = rate;
        row.rs = robustness_score(original, down, 0.5);
        table.push_back(row);
        if (progress) {
            (*progress) << "rate " << rate << " RS " << row.rs << "\n";
        }
    }

    fs::create_directories(cfg.out_dir);
    std::FILE* f =
        std::fopen((fs::path(cfg.out_dir) / "robustness.tsv").string().c_str(), "w");
    if (!f) throw DataError("cannot write robustness table");
    std::fprintf(f, "rate\trs\n");
    for (const RobustnessRow& row : table) std::fprintf(f, "%.17g\t%.17g\n", row.rate, row.rs);
    std::fclose(f);
    return table;
}

void run_synth(const SynthConfig& synth_cfg, const std::string& out_dir) {
    SynthData data = make_synth(synth_cfg);
    write_synth(data, synth_cfg, out_dir);
}

}  // namespace stdit::commands
