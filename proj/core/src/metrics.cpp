#include "stdit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "stdit/error.hpp"

namespace stdit {

namespace {

void require_pair(const char* op, const Tensor& a, const Tensor& b, std::size_t min_len) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes differ: " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    if (a.size() < min_len) {
        throw ShapeError(std::string(op) + ": need at least " + std::to_string(min_len) +
                         " entries");
    }
}

double mean_of(const Tensor& v) {
    double m = 0.0;
    for (double x : v.data) m += x;
    return m / static_cast<double>(v.size());
}

}  // namespace

double pcc(const Tensor& pred, const Tensor& truth) {
    require_pair("pcc", pred, truth, 2);
    const double mp = mean_of(pred);
    const double mt = mean_of(truth);
    double cov = 0.0, vp = 0.0, vt = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double dp = pred[i] - mp;
        double dt = truth[i] - mt;
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if (vp == 0.0 || vt == 0.0) return 0.0;  // constant vector: no signal
    return cov / std::sqrt(vp * vt);
}

namespace {

// shift negative minima to zero, then scale by the maximum when positive
std::vector<double> ssim_scale(const Tensor& v) {
    std::vector<double> out(v.data);
    double lo = *std::min_element(out.begin(), out.end());
    if (lo < 0.0) {
        for (double& x : out) x -= lo;
    }
    double hi = *std::max_element(out.begin(), out.end());
    if (hi > 0.0) {
        for (double& x : out) x /= hi;
    }
    return out;
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& truth) {
    require_pair("ssim", pred, truth, 2);
    constexpr double c1 = 1e-4;
    constexpr double c2 = 9e-4;
    std::vector<double> x = ssim_scale(pred);
    std::vector<double> y = ssim_scale(truth);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cxy += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
           ((mx * mx + my * my + c1) * (vx + vy + c2));
}

namespace {

// z-score with population stddev; constant vectors map to zeros
std::vector<double> zscore(const Tensor& v) {
    std::vector<double> out(v.data);
    double mean = 0.0;
    for (double x : out) mean += x;
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (double x : out) var += (x - mean) * (x - mean);
    var /= static_cast<double>(out.size());
    if (var == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return out;
    }
    double inv = 1.0 / std::sqrt(var);
    for (double& x : out) x = (x - mean) * inv;
    return out;
}

}  // namespace

double rmse(const Tensor& pred, const Tensor& truth) {
    require_pair("rmse", pred, truth, 1);
    std::vector<double> x = zscore(pred);
    std::vector<double> y = zscore(truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(acc / static_cast<double>(x.size()));
}

namespace {

// shift by the minimum, normalize to sum 1; uniform when the mass is zero
std::vector<double> to_distribution(const Tensor& v) {
    std::vector<double> out(v.data);
    double lo = *std::min_element(out.begin(), out.end());
    for (double& x : out) x -= lo;
    double sum = std::accumulate(out.begin(), out.end(), 0.0);
    if (sum <= 0.0) {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
        return out;
    }
    for (double& x : out) x /= sum;
    return out;
}

}  // namespace

double js(const Tensor& pred, const Tensor& truth) {
    require_pair("js", pred, truth, 1);
    std::vector<double> p = to_distribution(pred);
    std::vector<double> q = to_distribution(truth);
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) d += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) d += 0.5 * q[i] * std::log2(q[i] / m);
    }
    return std::min(std::max(d, 0.0), 1.0);
}

MetricsReport evaluate_predictions(const std::string& label, const ExpressionMatrix& truth,
                                   const ExpressionMatrix& pred) {
    if (truth.col_ids != pred.col_ids) {
        throw DataError("evaluate: column ids of truth and '" + label + "' differ");
    }
    MetricsReport report;
    report.label = label;
    report.genes = pred.gene_ids;
    report.per_gene.reserve(pred.n_genes());
    for (std::size_t g = 0; g < pred.n_genes(); ++g) {
        std::ptrdiff_t tr = truth.find_gene(pred.gene_ids[g]);
        if (tr < 0) {
            throw DataError("evaluate: gene '" + pred.gene_ids[g] +
                            "' missing from truth matrix");
        }
        Tensor t = truth.gene_row(static_cast<std::size_t>(tr));
        Tensor p = pred.gene_row(g);
        GeneMetrics m;
        m.pcc = pcc(p, t);
        m.ssim = ssim(p, t);
        m.rmse = rmse(p, t);
        m.js = js(p, t);
        report.per_gene.push_back(m);
    }
    const double n = static_cast<double>(report.per_gene.size());
    for (const GeneMetrics& m : report.per_gene) {
        report.mean.pcc += m.pcc / n;
        report.mean.ssim += m.ssim / n;
        report.mean.rmse += m.rmse / n;
        report.mean.js += m.js / n;
    }
    for (const GeneMetrics& m : report.per_gene) {
        report.stddev.pcc += (m.pcc - report.mean.pcc) * (m.pcc - report.mean.pcc) / n;
        report.stddev.ssim += (m.ssim - report.mean.ssim) * (m.ssim - report.mean.ssim) / n;
        report.stddev.rmse += (m.rmse - report.mean.rmse) * (m.rmse - report.mean.rmse) / n;
        report.stddev.js += (m.js - report.mean.js) * (m.js - report.mean.js) / n;
    }
    report.stddev.pcc = std::sqrt(report.stddev.pcc);
    report.stddev.ssim = std::sqrt(report.stddev.ssim);
    report.stddev.rmse = std::sqrt(report.stddev.rmse);
    report.stddev.js = std::sqrt(report.stddev.js);
    return report;
}

namespace {

// rank 1 = worst; ties share the average rank
std::vector<double> ranks_of(const std::vector<double>& values, bool higher_better) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return higher_better ? values[a] < values[b] : values[a] > values[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::vector<double> accuracy_score(const std::vector<MetricsReport>& methods) {
    const std::size_t m = methods.size();
    if (m < 2) {
        throw ConfigError("accuracy_score: comparison requires >= 2 methods");
    }
    for (std::size_t i = 1; i < m; ++i) {
        if (methods[i].genes != methods[0].genes) {
            throw DataError("accuracy_score: method '" + methods[i].label +
                            "' covers a different gene set than '" + methods[0].label + "'");
        }
    }
    std::vector<double> as(m, 0.0);
    auto fold = [&](auto metric_of, bool higher_better) {
        std::vector<double> values(m);
        for (std::size_t i = 0; i < m; ++i) values[i] = metric_of(methods[i].mean);
        std::vector<double> ranks = ranks_of(values, higher_better);
        for (std::size_t i = 0; i < m; ++i) {
            as[i] += (ranks[i] - 1.0) / (static_cast<double>(m) - 1.0) / 4.0;
        }
    };
    fold([](const GeneMetrics& g) { return g.pcc; }, true);
    fold([](const GeneMetrics& g) { return g.ssim; }, true);
    fold([](const GeneMetrics& g) { return g.rmse; }, false);
    fold([](const GeneMetrics& g) { return g.js; }, false);
    return as;
}

double robustness_score(const MetricsReport& original, const MetricsReport& downsampled,
                        double threshold) {
    if (original.genes != downsampled.genes) {
        throw DataError("robustness_score: gene sets differ between runs");
    }
    if (original.genes.empty()) {
        throw DataError("robustness_score: empty gene set");
    }
    std::size_t robust = 0;
    for (std::size_t g = 0; g < original.genes.size(); ++g) {
        if (original.per_gene[g].pcc > threshold && downsampled.per_gene[g].pcc > threshold) {
            ++robust;
        }
    }
    return static_cast<double>(robust) / static_cast<double>(original.genes.size());
}

namespace {

struct ClusterNode {
    // leaves have left == right == npos and hold one original index
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t left = npos, right = npos;
    std::size_t index = npos;
    std::size_t size = 1;
    std::size_t min_index = 0;
};

void collect_leaves(const std::vector<ClusterNode>& nodes, std::size_t at,
                    std::vector<std::size_t>& out) {
    const ClusterNode& n = nodes[at];
    if (n.left == ClusterNode::npos) {
        out.push_back(n.index);
        return;
    }
    collect_leaves(nodes, n.left, out);
    collect_leaves(nodes, n.right, out);
}

}  // namespace

ClusterOrder cluster_order(const Tensor& genes_by_spots) {
    const std::size_t n = genes_by_spots.rows;
    if (n < 2) {
        throw ConfigError("cluster_order: need at least 2 genes");
    }
    ClusterOrder result;
    result.condensed.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < genes_by_spots.cols; ++c) {
                double d = genes_by_spots.at(i, c) - genes_by_spots.at(j, c);
                d2 += d * d;
            }
            result.condensed.push_back(std::sqrt(d2));
        }
    }

    // active x active distance matrix, average linkage
    std::vector<ClusterNode> nodes(n);
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i].index = i;
        nodes[i].min_index = i;
        active[i] = i;
    }
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    {
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j, ++k) {
                dist[i][j] = dist[j][i] = result.condensed[k];
            }
        }
    }

    while (active.size() > 1) {
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                double d = dist[active[a]][active[b]];
                if (d < best) {
                    best = d;
                    bi = a;
                    bj = b;
                }
            }
        }
        std::size_t ci = active[bi], cj = active[bj];
        ClusterNode merged;
        // smaller minimum original index goes left: canonical leaf order
        if (nodes[ci].min_index <= nodes[cj].min_index) {
            merged.left = ci;
            merged.right = cj;
        } else {
            merged.left = cj;
            merged.right = ci;
        }
        merged.index = ClusterNode::npos;
        merged.size = nodes[ci].size + nodes[cj].size;
        merged.min_index = std::min(nodes[ci].min_index, nodes[cj].min_index);
        nodes.push_back(merged);
        std::size_t id = nodes.size() - 1;

        dist.emplace_back(nodes.size(), 0.0);
        for (auto& row : dist) row.resize(nodes.size(), 0.0);
        for (std::size_t a = 0; a < active.size(); ++a) {
            std::size_t other = active[a];
            if (other == ci || other == cj) continue;
            double d = (dist[ci][other] * static_cast<double>(nodes[ci].size) +
                        dist[cj][other] * static_cast<double>(nodes[cj].size)) /
                       static_cast<double>(merged.size);
            dist[id][other] = dist[other][id] = d;
        }
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
        active.push_back(id);
    }

    collect_leaves(nodes, active[0], result.order);
    return result;
}

void write_report_tsv(const MetricsReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write report '" + path + "'");
    std::fprintf(f, "gene\tpcc\tssim\trmse\tjs\n");
    for (std::size_t g = 0; g < report.genes.size(); ++g) {
        const GeneMetrics& m = report.per_gene[g];
        std::fprintf(f, "%s\t%.17g\t%.17g\t%.17g\t%.17g\n", report.genes[g].c_str(), m.pcc,
                     m.ssim, m.rmse, m.js);
    }
    std::fprintf(f, "#mean\t%.17g\t%.17g\t%.17g\t%.17g\n", report.mean.pcc, report.mean.ssim,
                 report.mean.rmse, report.mean.js);
    std::fprintf(f, "#std\t%.17g\t%.17g\t%.17g\t%.17g\n", report.stddev.pcc, report.stddev.ssim,
                 report.stddev.rmse, report.stddev.js);
    std::fclose(f);
}

void write_report_json(const MetricsReport& report, const std::string& path) {
    nlohmann::ordered_json doc;
    doc["label"] = report.label;
    auto pack = [](const GeneMetrics& m) {
        return nlohmann::ordered_json{
            {"pcc", m.pcc}, {"ssim", m.ssim}, {"rmse", m.rmse}, {"js", m.js}};
    };
    doc["mean"] = pack(report.mean);
    doc["std"] = pack(report.stddev);
    nlohmann::ordered_json genes = nlohmann::ordered_json::object();
    for (std::size_t g = 0; g < report.genes.size(); ++g) {
        genes[report.genes[g]] = pack(report.per_gene[g]);
    }
    doc["genes"] = genes;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report '" + path + "'");
    out << doc.dump(2) << "\n";
}

}  // namespace stdit
