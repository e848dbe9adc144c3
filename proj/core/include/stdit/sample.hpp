#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stdit/train.hpp"

namespace stdit {

struct SampleRequest {
    std::string gene_id;
    Tensor clamp_values;  // 1 x p; empty when nothing is clamped
    Tensor clamp_mask;    // 1 x p binary; empty when nothing is clamped
    std::size_t draws = 4;
    std::uint64_t seed = 1;
};

struct SampleResult {
    Tensor mean;                // 1 x p, normalized space
    std::vector<Tensor> draws;  // per-draw chains' endpoints
};

// Observes the chain state after every reverse step (tests use this to check
// the clamping contract).
using StepObserver = std::function<void(std::size_t t, const Tensor& x)>;

// Noise predictor driving the reverse chain: (x_t, t) -> eps_hat.
using DenoiseFn = std::function<Tensor(const Tensor&, std::size_t)>;

// One ancestral chain from x (the t = T state) down to t = 1. Coordinates
// under clamp_mask are pinned to clamp_values before every predictor call
// and after every step. Step noise comes from rng; the final step is
// deterministic (sigma = 0 at t = 1).
Tensor reverse_chain(Tensor x, const Schedule& sched, const DenoiseFn& eps_fn, Rng& rng,
                     const Tensor& clamp_values, const Tensor& clamp_mask,
                     const StepObserver& observer = nullptr);

// Landmark keys/values of the condition attention, computed once per
// checkpoint (parameters are frozen) and shared across genes, draws and
// timesteps. Empty in the modes that do not attend.
struct ConditionCache {
    Tensor keys;    // r x d_k
    Tensor values;  // r x d_v
};

ConditionCache make_condition_cache(const Checkpoint& ckpt, const ExpressionMatrix& sc);

// One gene's condition row, from the cache and the gene's SC expression row.
Tensor condition_vector_for(const Checkpoint& ckpt, const ConditionCache& cache,
                            const Tensor& sc_row);

// Ancestral sampling of one gene's ST expression vector: start from
// Gaussian noise, re-clamp known entries to their clean values before every
// denoise call, step with the posterior mean plus sigma-scaled noise (sigma
// 0 at t = 1), and average the requested number of independent chains. The
// per-gene stream is derived from (seed, gene id) so parallel and serial
// runs agree.
SampleResult sample_gene(const SampleRequest& req, const Checkpoint& ckpt,
                         const ExpressionMatrix& sc, const Tensor& cond,
                         const StepObserver& observer = nullptr);
SampleResult sample_gene(const SampleRequest& req, const Checkpoint& ckpt,
                         const ExpressionMatrix& sc);

// Whole-gene predictions (nothing clamped) for an explicit gene list; rows
// come back in list order. Genes may be shared or SC-unique but must exist
// in the SC matrix.
ExpressionMatrix predict_genes(const Checkpoint& ckpt, const ExpressionMatrix& sc,
                               const std::vector<std::string>& genes, std::size_t draws,
                               std::uint64_t seed, unsigned threads = 1);

// predict_genes over the checkpoint's test split.
ExpressionMatrix predict_testset(const Checkpoint& ckpt, const ExpressionMatrix& sc,
                                 std::size_t draws, std::uint64_t seed, unsigned threads = 1);

// In-place un-z-score to log1p space using the checkpoint's per-gene stats
// (ST stats for shared genes, SC stats for SC-unique ones).
void destandardize_to_log1p(ExpressionMatrix& pred, const Checkpoint& ckpt);

// expm1 with a floor at zero; log1p-space matrix -> count scale.
void log1p_to_counts(ExpressionMatrix& pred);

}  // namespace stdit
