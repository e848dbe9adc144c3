#pragma once

#include <string>
#include <vector>

#include "stdit/data.hpp"
#include "stdit/tensor.hpp"

namespace stdit {

// Pearson correlation; 0 by convention when either vector is constant.
double pcc(const Tensor& pred, const Tensor& truth);

// Global (non-windowed) 1-D SSIM with C1 = 1e-4, C2 = 9e-4. Each vector is
// shifted so negative minima land at zero, then divided by its own maximum
// when that is positive.
double ssim(const Tensor& pred, const Tensor& truth);

// Root mean square error of the two vectors after z-scoring each
// independently (population stddev, constant vectors map to zeros).
double rmse(const Tensor& pred, const Tensor& truth);

// Jensen-Shannon divergence with base-2 logs after shifting each vector by
// its minimum and normalizing to a distribution (uniform when the shifted
// mass is zero). Always in [0, 1].
double js(const Tensor& pred, const Tensor& truth);

struct GeneMetrics {
    double pcc = 0.0, ssim = 0.0, rmse = 0.0, js = 0.0;
};

struct MetricsReport {
    std::string label;
    std::vector<std::string> genes;
    std::vector<GeneMetrics> per_gene;
    GeneMetrics mean;
    GeneMetrics stddev;
};

// Per-gene metrics of a prediction matrix against the matching truth rows
// (matched by gene id; column ids must agree exactly).
MetricsReport evaluate_predictions(const std::string& label, const ExpressionMatrix& truth,
                                   const ExpressionMatrix& pred);

// Rank-based composite over >= 2 methods: per metric, methods are ranked by
// aggregate mean (rank 1 = worst; higher is better for PCC/SSIM, lower for
// RMSE/JS; ties share the average rank) and AS is the mean of
// (rank-1)/(M-1) over the four metrics.
std::vector<double> accuracy_score(const std::vector<MetricsReport>& methods);

// Fraction of genes whose PCC exceeds the threshold under both the original
// and the downsampled run. Gene sets must match.
double robustness_score(const MetricsReport& original, const MetricsReport& downsampled,
                        double threshold = 0.5);

struct ClusterOrder {
    std::vector<std::size_t> order;  // leaf order for heatmap rendering
    std::vector<double> condensed;   // d(i, j) for i < j, row-major
};

// Average-linkage agglomerative clustering on pairwise Euclidean distances
// between gene rows. Children are ordered smaller-min-index first so the
// leaf order is canonical.
ClusterOrder cluster_order(const Tensor& genes_by_spots);

// Line-oriented per-gene table plus aggregates.
void write_report_tsv(const MetricsReport& report, const std::string& path);
// Same content as a structured JSON document.
void write_report_json(const MetricsReport& report, const std::string& path);

}  // namespace stdit
