#include "stdit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stdit/error.hpp"

namespace stdit {

std::ptrdiff_t ExpressionMatrix::find_gene(const std::string& id) const {
    for (std::size_t i = 0; i < gene_ids.size(); ++i) {
        if (gene_ids[i] == id) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
}

Tensor ExpressionMatrix::gene_row(std::size_t g) const {
    Tensor row(1, n_cols());
    for (std::size_t c = 0; c < n_cols(); ++c) row[c] = values.at(g, c);
    return row;
}

Orientation parse_orientation(const std::string& text) {
    if (text == "genes-rows") return Orientation::GenesInRows;
    if (text == "genes-cols") return Orientation::GenesInCols;
    throw ConfigError("orientation must be genes-rows or genes-cols, got '" + text + "'");
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& token, const std::string& path, std::size_t line_no) {
    const char* begin = token.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || token.empty()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + token +
                        "'");
    }
    return v;
}

void check_unique(const std::vector<std::string>& ids, const std::string& path,
                  const char* what) {
    std::unordered_set<std::string> seen;
    for (const std::string& id : ids) {
        if (!seen.insert(id).second) {
            throw DataError(path + ": duplicate " + what + " id '" + id + "'");
        }
    }
}

}  // namespace

ExpressionMatrix load_matrix(const std::string& path, Orientation orientation) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path + ":1: empty file");
    }
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string> header = split_fields(line, delim);
    if (header.size() < 2) {
        throw DataError(path + ":1: header needs a corner cell and at least one column id");
    }
    std::vector<std::string> file_col_ids(header.begin() + 1, header.end());

    std::vector<std::string> row_ids;
    std::vector<double> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> fields = split_fields(line, delim);
        if (fields.size() != header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": ragged row, expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        row_ids.push_back(fields[0]);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            cells.push_back(parse_cell(fields[i], path, line_no));
        }
    }
    if (row_ids.empty()) {
        throw DataError(path + ": no data rows");
    }

    ExpressionMatrix m;
    if (orientation == Orientation::GenesInRows) {
        m.gene_ids = std::move(row_ids);
        m.col_ids = std::move(file_col_ids);
        m.values = Tensor(m.gene_ids.size(), m.col_ids.size(), std::move(cells));
    } else {
        m.gene_ids = std::move(file_col_ids);
        m.col_ids = std::move(row_ids);
        m.values = Tensor(m.gene_ids.size(), m.col_ids.size());
        const std::size_t file_cols = m.gene_ids.size();
        for (std::size_t r = 0; r < m.col_ids.size(); ++r)
            for (std::size_t c = 0; c < file_cols; ++c)
                m.values.at(c, r) = cells[r * file_cols + c];
    }
    check_unique(m.gene_ids, path, "gene");
    check_unique(m.col_ids, path, "column");
    if (!m.values.all_finite()) {
        throw DataError(path + ": non-finite value in matrix");
    }
    return m;
}

void save_matrix(const ExpressionMatrix& m, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw DataError("cannot write '" + path + "'");
    }
    std::fputs("gene", f);
    for (const std::string& id : m.col_ids) std::fprintf(f, "\t%s", id.c_str());
    std::fputc('\n', f);
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        std::fputs(m.gene_ids[g].c_str(), f);
        for (std::size_t c = 0; c < m.n_cols(); ++c) {
            std::fprintf(f, "\t%.17g", m.values.at(g, c));
        }
        std::fputc('\n', f);
    }
    std::fclose(f);
}

double dropout_rate(const ExpressionMatrix& m) {
    if (m.values.size() == 0) return 0.0;
    std::size_t zeros = 0;
    for (double v : m.values.data) {
        if (v == 0.0) ++zeros;
    }
    return static_cast<double>(zeros) / static_cast<double>(m.values.size());
}

namespace {

// log1p + per-gene z-score over the supplied gene rows of `raw`.
ExpressionMatrix normalize_rows(const ExpressionMatrix& raw,
                                const std::vector<std::string>& gene_ids,
                                const std::vector<std::ptrdiff_t>& source_rows) {
    const std::size_t cols = raw.n_cols();
    ExpressionMatrix out;
    out.gene_ids = gene_ids;
    out.col_ids = raw.col_ids;
    out.values = Tensor(gene_ids.size(), cols);
    out.normalized = true;
    out.per_gene_stats.resize(gene_ids.size());
    for (std::size_t g = 0; g < gene_ids.size(); ++g) {
        std::vector<double> logv(cols, 0.0);
        if (source_rows[g] >= 0) {
            for (std::size_t c = 0; c < cols; ++c) {
                logv[c] = std::log1p(raw.values.at(static_cast<std::size_t>(source_rows[g]), c));
            }
        }
        double mean = 0.0;
        for (double v : logv) mean += v;
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (double v : logv) var += (v - mean) * (v - mean);
        var = cols > 1 ? var / static_cast<double>(cols - 1) : 0.0;
        double sd = std::max(std::sqrt(var), 1e-8);
        out.per_gene_stats[g] = {mean, sd};
        for (std::size_t c = 0; c < cols; ++c) out.values.at(g, c) = (logv[c] - mean) / sd;
    }
    return out;
}

}  // namespace

ExpressionMatrix preprocess(const ExpressionMatrix& raw, std::size_t top_k) {
    if (raw.normalized) {
        throw ConfigError("preprocess: matrix is already normalized");
    }
    for (double v : raw.values.data) {
        if (v < 0.0) throw DataError("preprocess: negative value in raw matrix");
    }
    const std::size_t cols = raw.n_cols();

    std::vector<std::size_t> kept;
    std::vector<double> means;
    for (std::size_t g = 0; g < raw.n_genes(); ++g) {
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += raw.values.at(g, c);
        if (sum > 0.0) {
            kept.push_back(g);
            means.push_back(sum / static_cast<double>(cols));
        }
    }
    if (kept.empty()) {
        throw DataError("preprocess: no expressed genes remain");
    }

    if (top_k > 0 && top_k < kept.size()) {
        std::vector<std::size_t> order(kept.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return means[a] > means[b]; });
        order.resize(top_k);
        std::sort(order.begin(), order.end());
        std::vector<std::size_t> selected;
        selected.reserve(top_k);
        for (std::size_t i : order) selected.push_back(kept[i]);
        kept = std::move(selected);
    }

    std::vector<std::string> ids;
    std::vector<std::ptrdiff_t> rows;
    ids.reserve(kept.size());
    for (std::size_t g : kept) {
        ids.push_back(raw.gene_ids[g]);
        rows.push_back(static_cast<std::ptrdiff_t>(g));
    }
    return normalize_rows(raw, ids, rows);
}

ExpressionMatrix normalize_to_genes(const ExpressionMatrix& raw,
                                    const std::vector<std::string>& gene_ids) {
    if (raw.normalized) {
        throw ConfigError("normalize_to_genes: matrix is already normalized");
    }
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t g = 0; g < raw.n_genes(); ++g) index.emplace(raw.gene_ids[g], g);
    std::vector<std::ptrdiff_t> rows;
    rows.reserve(gene_ids.size());
    for (const std::string& id : gene_ids) {
        auto it = index.find(id);
        rows.push_back(it == index.end() ? -1 : static_cast<std::ptrdiff_t>(it->second));
    }
    return normalize_rows(raw, gene_ids, rows);
}

GeneAlignment align(const ExpressionMatrix& st, const ExpressionMatrix& sc) {
    std::unordered_map<std::string, std::size_t> sc_index;
    for (std::size_t g = 0; g < sc.n_genes(); ++g) sc_index.emplace(sc.gene_ids[g], g);

    GeneAlignment a;
    std::unordered_set<std::string> shared_set;
    for (std::size_t g = 0; g < st.n_genes(); ++g) {
        auto it = sc_index.find(st.gene_ids[g]);
        if (it != sc_index.end()) {
            a.shared.push_back(st.gene_ids[g]);
            a.shared_st_rows.push_back(g);
            a.shared_sc_rows.push_back(it->second);
            shared_set.insert(st.gene_ids[g]);
        }
    }
    for (const std::string& id : sc.gene_ids) {
        if (!shared_set.count(id)) a.sc_unique.push_back(id);
    }
    if (a.shared.empty()) {
        throw DataError("align: no shared genes between ST and SC matrices");
    }
    return a;
}

SplitSpec split(const GeneAlignment& alignment, std::uint64_t seed) {
    const std::size_t n = alignment.shared.size();
    if (n < 3) {
        throw DataError("split: need at least 3 shared genes, got " + std::to_string(n));
    }
    std::vector<std::string> shuffled = alignment.shared;
    Rng rng(derive_seed(seed, "split"));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = rng.uniform_int(i + 1);
        std::swap(shuffled[i], shuffled[j]);
    }
    std::size_t n_test = std::max<std::size_t>(1, n / 10);
    std::size_t n_val = std::max<std::size_t>(1, n * 2 / 10);
    std::size_t n_train = n - n_val - n_test;

    SplitSpec s;
    s.seed = seed;
    s.train.assign(shuffled.begin(), shuffled.begin() + n_train);
    s.val.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
    s.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
    return s;
}

MaskPair make_masks(const Tensor& st_row, double rho, MaskMode mode, Rng& rng) {
    if (rho < 0.0 || rho > 1.0) {
        throw ConfigError("make_masks: rho must be in [0, 1]");
    }
    const std::size_t p = st_row.size();
    MaskPair mp;
    mp.m1 = Tensor(1, p);
    mp.m2 = Tensor(1, p);
    mp.unknown = Tensor(1, p);

    std::vector<std::size_t> nonzero;
    for (std::size_t j = 0; j < p; ++j) {
        if (st_row[j] == 0.0) {
            mp.m1[j] = 1.0;
        } else {
            nonzero.push_back(j);
        }
    }

    if (mode == MaskMode::WholeGene) {
        for (std::size_t j : nonzero) mp.m2[j] = 1.0;
        for (std::size_t j = 0; j < p; ++j) mp.unknown[j] = 1.0;
        return mp;
    }

    std::size_t k = static_cast<std::size_t>(
        std::llround(rho * static_cast<double>(nonzero.size())));
    // partial Fisher-Yates: the first k entries are a uniform sample
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.uniform_int(nonzero.size() - i);
        std::swap(nonzero[i], nonzero[j]);
        mp.m2[nonzero[i]] = 1.0;
    }
    for (std::size_t j = 0; j < p; ++j) {
        mp.unknown[j] = (mp.m1[j] != 0.0 || mp.m2[j] != 0.0) ? 1.0 : 0.0;
    }
    return mp;
}

ExpressionMatrix downsample(const ExpressionMatrix& raw, double rate, std::uint64_t seed) {
    if (raw.normalized) {
        throw DataError("downsample: defined on raw counts, matrix is normalized");
    }
    if (rate < 0.0 || rate > 1.0) {
        throw ConfigError("downsample: rate must be in [0, 1]");
    }
    for (double v : raw.values.data) {
        if (v < 0.0 || std::floor(v) != v) {
            throw DataError("downsample: defined on non-negative integer counts");
        }
    }
    ExpressionMatrix out = raw;
    if (rate == 1.0) return out;
    Rng rng(derive_seed(seed, "downsample"));
    for (double& v : out.values.data) {
        v = static_cast<double>(rng.binomial(static_cast<long>(v), rate));
    }
    return out;
}

}  // namespace stdit
