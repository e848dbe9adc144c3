#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stdit/rng.hpp"
#include "stdit/tensor.hpp"

namespace stdit {

// Per-gene statistics recorded at normalization time (log1p space), used to
// invert predictions back to log1p or count space.
struct GeneStats {
    double mean = 0.0;
    double stddev = 1.0;
};

// Gene-major expression matrix: rows are genes, columns are spots (ST) or
// cells (SC). Raw matrices hold non-negative counts; normalized ones hold
// z-scored log1p values and carry per-gene stats.
struct ExpressionMatrix {
    std::vector<std::string> gene_ids;
    std::vector<std::string> col_ids;
    Tensor values;  // genes x cols
    bool normalized = false;
    std::vector<GeneStats> per_gene_stats;  // one per gene once normalized

    std::size_t n_genes() const { return gene_ids.size(); }
    std::size_t n_cols() const { return col_ids.size(); }
    // index of a gene id, or -1
    std::ptrdiff_t find_gene(const std::string& id) const;
    Tensor gene_row(std::size_t g) const;  // 1 x cols copy
};

enum class Orientation { GenesInRows, GenesInCols };

Orientation parse_orientation(const std::string& text);  // "genes-rows" | "genes-cols"

// Delimited text (tab or comma, auto-detected). First row holds column ids
// with the corner cell ignored, first column holds gene ids. The result is
// always gene-major regardless of the on-disk orientation.
ExpressionMatrix load_matrix(const std::string& path, Orientation orientation);

// Tab-separated, genes x cols, %.17g so values round-trip exactly.
void save_matrix(const ExpressionMatrix& m, const std::string& path);

// Fraction of zero entries (raw matrices).
double dropout_rate(const ExpressionMatrix& m);

// Drops all-zero genes, keeps the top_k genes by mean raw expression
// (everything if top_k is 0 or >= the remainder, ties by file order), then
// log1p + per-gene z-score with sample stddev (floor 1e-8). Refuses matrices
// that are already normalized.
ExpressionMatrix preprocess(const ExpressionMatrix& raw, std::size_t top_k);

// Re-normalizes `raw` over exactly `gene_ids` (missing ids become all-zero
// rows). Used by the robustness harness so downsampled runs keep the gene
// set of the original run.
ExpressionMatrix normalize_to_genes(const ExpressionMatrix& raw,
                                    const std::vector<std::string>& gene_ids);

struct GeneAlignment {
    std::vector<std::string> shared;     // ST order
    std::vector<std::string> sc_unique;  // SC order
    std::vector<std::size_t> shared_st_rows;
    std::vector<std::size_t> shared_sc_rows;
};

GeneAlignment align(const ExpressionMatrix& st, const ExpressionMatrix& sc);

struct SplitSpec {
    std::vector<std::string> train, val, test;
    std::uint64_t seed = 0;
};

// Deterministic shuffle of the shared genes followed by a 7:2:1 partition.
// Val and test get floor(0.2n) / floor(0.1n) but at least one gene each;
// the remainder goes to train.
SplitSpec split(const GeneAlignment& alignment, std::uint64_t seed);

enum class MaskMode { SpotMask, WholeGene };

struct MaskPair {
    Tensor m1;       // 1 x p, marks zero-valued entries
    Tensor m2;       // 1 x p, marks selected non-zero entries
    Tensor unknown;  // 1 x p, entries the model must predict
};

// st_row holds raw-space values (zero means unexpressed). Spot-mask mode
// samples round(rho * #nonzero) non-zero entries into m2 and predicts
// m1 | m2; whole-gene mode predicts every entry while m1/m2 still record the
// zero/non-zero partition.
MaskPair make_masks(const Tensor& st_row, double rho, MaskMode mode, Rng& rng);

// Binomial(count, rate) thinning of a raw count matrix; zeros stay zero and
// no entry ever grows. Rejects non-integer values.
ExpressionMatrix downsample(const ExpressionMatrix& raw, double rate, std::uint64_t seed);

}  // namespace stdit
