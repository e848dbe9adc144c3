#include "stdit/sample.hpp"

#include <cmath>
#include <mutex>
#include <thread>

#include "stdit/error.hpp"

namespace stdit {

ConditionCache make_condition_cache(const Checkpoint& ckpt, const ExpressionMatrix& sc) {
    if (sc.n_cols() != ckpt.params.cfg.q) {
        throw DataError("sample: SC matrix has " + std::to_string(sc.n_cols()) +
                        " cells but checkpoint expects " + std::to_string(ckpt.params.cfg.q));
    }
    const ConditionMode mode = ckpt.params.cfg.condition;
    ConditionCache cache;
    if (mode == ConditionMode::Off || mode == ConditionMode::Mlp) return cache;

    Tensor kv_source = sc.values;
    if (mode == ConditionMode::SharedGenes) {
        Tensor sub(ckpt.alignment.shared_sc_rows.size(), sc.n_cols());
        for (std::size_t i = 0; i < ckpt.alignment.shared_sc_rows.size(); ++i) {
            const std::size_t r = ckpt.alignment.shared_sc_rows[i];
            if (r >= sc.n_genes()) {
                throw DataError("condition: SC matrix does not match checkpoint alignment");
            }
            for (std::size_t c = 0; c < sc.n_cols(); ++c) sub.at(i, c) = sc.values.at(r, c);
        }
        kv_source = std::move(sub);
    }
    Graph g;
    ModelGraph mg = register_params(g, ckpt.params);
    CondKv kv = condition_kv(g, mg, g.input(std::move(kv_source)));
    cache.keys = g.value(kv.keys);
    cache.values = g.value(kv.values);
    return cache;
}

Tensor condition_vector_for(const Checkpoint& ckpt, const ConditionCache& cache,
                            const Tensor& sc_row) {
    Graph g;
    ModelGraph mg = register_params(g, ckpt.params);
    CondKv kv;
    if (!cache.keys.empty()) {
        kv.keys = g.input(cache.keys);
        kv.values = g.input(cache.values);
    }
    return g.value(condition_rows_from(g, mg, kv, g.input(sc_row)));
}

namespace {

void apply_clamp(Tensor& x, const Tensor& values, const Tensor& mask) {
    if (mask.empty()) return;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (mask[j] != 0.0) x[j] = values[j];
    }
}

}  // namespace

Tensor reverse_chain(Tensor x, const Schedule& sched, const DenoiseFn& eps_fn, Rng& rng,
                     const Tensor& clamp_values, const Tensor& clamp_mask,
                     const StepObserver& observer) {
    for (std::size_t t = sched.steps; t >= 1; --t) {
        apply_clamp(x, clamp_values, clamp_mask);
        Tensor eps_hat = eps_fn(x, t);
        ReverseStep step = p_mean_sigma(x, t, eps_hat, sched);
        x = std::move(step.mean);
        if (step.sigma > 0.0) {
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += step.sigma * rng.normal();
        }
        apply_clamp(x, clamp_values, clamp_mask);
        if (observer) observer(t, x);
    }
    return x;
}

SampleResult sample_gene(const SampleRequest& req, const Checkpoint& ckpt,
                         const ExpressionMatrix& sc, const Tensor& cond,
                         const StepObserver& observer) {
    const ModelConfig& cfg = ckpt.params.cfg;
    if (req.draws == 0) throw ConfigError("sample: draw count must be >= 1");
    std::ptrdiff_t sc_row_idx = sc.find_gene(req.gene_id);
    if (sc_row_idx < 0) {
        throw DataError("sample: gene '" + req.gene_id + "' not present in SC matrix");
    }
    if (sc.n_cols() != cfg.q) {
        throw DataError("sample: SC matrix has " + std::to_string(sc.n_cols()) +
                        " cells but checkpoint expects " + std::to_string(cfg.q));
    }
    if (!req.clamp_mask.empty()) {
        if (req.clamp_mask.size() != cfg.p || req.clamp_values.size() != cfg.p) {
            throw DataError("sample: clamp vectors must have " + std::to_string(cfg.p) +
                            " entries");
        }
    }
    const Tensor sc_vec = sc.gene_row(static_cast<std::size_t>(sc_row_idx));
    const Schedule& sched = ckpt.schedule;

    DenoiseFn eps_fn = [&](const Tensor& x, std::size_t t) {
        return predict_eps(ckpt.params, cond, x, sc_vec, t).eps_hat;
    };

    Rng rng(derive_seed(req.seed, "sample/" + req.gene_id));
    SampleResult result;
    result.mean = Tensor(1, cfg.p);
    for (std::size_t draw = 0; draw < req.draws; ++draw) {
        Tensor x(1, cfg.p);
        for (std::size_t j = 0; j < cfg.p; ++j) x[j] = rng.normal();
        x = reverse_chain(std::move(x), sched, eps_fn, rng, req.clamp_values, req.clamp_mask,
                          observer);
        for (std::size_t j = 0; j < cfg.p; ++j) result.mean[j] += x[j];
        result.draws.push_back(std::move(x));
    }
    for (std::size_t j = 0; j < cfg.p; ++j) {
        result.mean[j] /= static_cast<double>(req.draws);
    }
    // averaging must not perturb clamped coordinates
    apply_clamp(result.mean, req.clamp_values, req.clamp_mask);
    return result;
}

SampleResult sample_gene(const SampleRequest& req, const Checkpoint& ckpt,
                         const ExpressionMatrix& sc) {
    ConditionCache cache = make_condition_cache(ckpt, sc);
    std::ptrdiff_t row = sc.find_gene(req.gene_id);
    if (row < 0) {
        throw DataError("sample: gene '" + req.gene_id + "' not present in SC matrix");
    }
    Tensor cond = condition_vector_for(
        ckpt, cache, sc.gene_row(static_cast<std::size_t>(row)));
    return sample_gene(req, ckpt, sc, cond);
}

ExpressionMatrix predict_genes(const Checkpoint& ckpt, const ExpressionMatrix& sc,
                               const std::vector<std::string>& genes, std::size_t draws,
                               std::uint64_t seed, unsigned threads) {
    const ConditionCache cache = make_condition_cache(ckpt, sc);
    ExpressionMatrix pred;
    pred.gene_ids = genes;
    pred.col_ids = ckpt.st_col_ids;
    pred.values = Tensor(genes.size(), ckpt.params.cfg.p);
    pred.normalized = true;

    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::ptrdiff_t row = sc.find_gene(genes[i]);
            if (row < 0) {
                throw DataError("sample: gene '" + genes[i] + "' not present in SC matrix");
            }
            SampleRequest req;
            req.gene_id = genes[i];
            req.draws = draws;
            req.seed = seed;
            Tensor cond = condition_vector_for(
                ckpt, cache, sc.gene_row(static_cast<std::size_t>(row)));
            SampleResult r = sample_gene(req, ckpt, sc, cond);
            for (std::size_t c = 0; c < ckpt.params.cfg.p; ++c) {
                pred.values.at(i, c) = r.mean[c];
            }
        }
    };

    if (threads <= 1 || genes.size() <= 1) {
        run_range(0, genes.size());
    } else {
        const std::size_t n_workers = std::min<std::size_t>(threads, genes.size());
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mu;
        for (std::size_t w = 0; w < n_workers; ++w) {
            std::size_t begin = genes.size() * w / n_workers;
            std::size_t end = genes.size() * (w + 1) / n_workers;
            pool.emplace_back([&, begin, end] {
                try {
                    run_range(begin, end);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (std::thread& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    return pred;
}

ExpressionMatrix predict_testset(const Checkpoint& ckpt, const ExpressionMatrix& sc,
                                 std::size_t draws, std::uint64_t seed, unsigned threads) {
    if (ckpt.split_spec.test.empty()) {
        throw DataError("predict: checkpoint has an empty test split");
    }
    return predict_genes(ckpt, sc, ckpt.split_spec.test, draws, seed, threads);
}

void destandardize_to_log1p(ExpressionMatrix& pred, const Checkpoint& ckpt) {
    auto stats_for = [&](const std::string& id) -> const GeneStats* {
        for (std::size_t i = 0; i < ckpt.st_gene_ids.size(); ++i) {
            if (ckpt.st_gene_ids[i] == id) return &ckpt.st_stats[i];
        }
        for (std::size_t i = 0; i < ckpt.sc_gene_ids.size(); ++i) {
            if (ckpt.sc_gene_ids[i] == id) return &ckpt.sc_stats[i];
        }
        return nullptr;
    };
    for (std::size_t g = 0; g < pred.n_genes(); ++g) {
        const GeneStats* st = stats_for(pred.gene_ids[g]);
        if (!st) {
            throw DataError("predict: no normalization stats for gene '" + pred.gene_ids[g] +
                            "'");
        }
        for (std::size_t c = 0; c < pred.n_cols(); ++c) {
            pred.values.at(g, c) = pred.values.at(g, c) * st->stddev + st->mean;
        }
    }
}

void log1p_to_counts(ExpressionMatrix& pred) {
    for (double& v : pred.values.data) {
        v = std::max(std::expm1(v), 0.0);
    }
}

}  // namespace stdit
