#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stdit/config.hpp"
#include "stdit/metrics.hpp"
#include "stdit/sample.hpp"
#include "stdit/synth.hpp"
#include "stdit/train.hpp"

namespace stdit::commands {

// Every command is a pure function of (config, input files, seed); re-running
// one reproduces its outputs byte for byte.

struct PreprocessSummary {
    std::string bundle_dir;
    std::size_t st_genes_raw = 0, st_genes_kept = 0, st_spots = 0;
    std::size_t sc_genes_raw = 0, sc_genes_kept = 0, sc_cells = 0;
    std::size_t shared = 0, sc_unique = 0;
    double st_dropout = 0.0, sc_dropout = 0.0;
};

// Loads and preprocesses both matrices, aligns and splits the shared genes,
// and writes the processed bundle under <out_dir>/bundle.
PreprocessSummary run_preprocess(const RunConfig& cfg);

DataBundle load_bundle(const std::string& bundle_dir);

struct TrainSummary {
    std::string best_path, latest_path;
    std::size_t parameters = 0;
    std::size_t iterations = 0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
};

TrainSummary run_train(const RunConfig& cfg, bool resume, std::ostream* progress = nullptr);

struct PredictSummary {
    std::string out_path;
    std::string summary_path;
    std::size_t genes = 0;
    double wall_seconds = 0.0;
};

// genes empty = the checkpoint's test split. Output is log1p-space by
// default; counts applies the inverse normalization with a floor at zero.
PredictSummary run_predict(const RunConfig& cfg, const std::string& ckpt_path,
                           const std::vector<std::string>& genes, bool counts,
                           const std::string& out_path);

struct EvaluateSummary {
    std::vector<MetricsReport> reports;
    std::vector<double> accuracy;  // one AS per method when >= 2 methods
    std::vector<std::string> report_paths;
    std::string comparison_path;
    std::string cluster_path;
};

EvaluateSummary run_evaluate(const std::string& truth_path,
                             const std::vector<std::string>& pred_paths,
                             std::vector<std::string> labels, const std::string& out_dir,
                             bool cluster);

struct RobustnessRow {
    double rate = 0.0;
    double rs = 0.0;
};

// Fig-6 style harness: for each rate, binomial-downsample the raw ST counts,
// re-normalize over the original kept genes, re-predict the test split and
// score it against the downsampled truth; RS compares per-gene PCC of the
// original and downsampled runs at the 0.5 threshold.
std::vector<RobustnessRow> run_robustness(const RunConfig& cfg, const std::string& ckpt_path,
                                          const std::vector<double>& rates,
                                          std::ostream* progress = nullptr);

void run_synth(const SynthConfig& synth_cfg, const std::string& out_dir);

}  // namespace stdit::commands
