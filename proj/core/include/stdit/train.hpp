#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stdit/data.hpp"
#include "stdit/model.hpp"
#include "stdit/schedule.hpp"

namespace stdit {

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch = 32;  // genes per step
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double mask_ratio = 0.5;       // rho
    double whole_gene_prob = 0.5;  // chance a sample trains full-vector generation
    double sc_token_dropout = 0.0;  // chance a sample withholds the SC token
    std::size_t steps = 1000;      // diffusion T (desk-scale runs use 50)
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 200;
    std::size_t val_every = 100;

    void validate() const;
};

// Processed matrices plus the raw ST counts the mask construction needs.
struct DataBundle {
    ExpressionMatrix st;      // processed, kept genes only
    ExpressionMatrix sc;      // processed
    ExpressionMatrix st_raw;  // raw counts, full original matrix
    GeneAlignment alignment;
    SplitSpec split_spec;
};

// Mean of (eps - eps_hat)^2 over entries where unknown == 1. Plain MSE when
// unknown is all ones; rejects an empty mask.
double loss_eps(const Tensor& eps, const Tensor& eps_hat, const Tensor& unknown);

// Adaptive moment estimation with bias correction. Moment tensors follow
// for_each_param order.
struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;
};

AdamState init_adam(const ModelParams& params);
void adam_update(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
                 const TrainConfig& cfg);

// The SC matrix the condition embedding consumes: the full processed matrix,
// or its shared-gene rows under the shared-genes ablation.
Tensor condition_input_matrix(const DataBundle& data, ConditionMode mode);

// One training step over a batch of shared-gene indices (positions into
// alignment.shared). Per gene: draw masks and a timestep, noise the unknown
// entries (known entries stay clamped to clean values), run the denoiser and
// take one optimizer step on the batch-mean masked eps loss. Returns that
// loss. Throws NumericError with the offending iteration context if the loss
// is not finite.
double train_step(const std::vector<std::size_t>& batch, const DataBundle& data,
                  ModelParams& params, const Schedule& sched, AdamState& opt,
                  const TrainConfig& cfg, Rng& rng);

// Forward-only loss over the validation split with a dedicated, re-seeded
// stream so values are comparable across iterations.
double validation_loss(const DataBundle& data, const ModelParams& params, const Schedule& sched,
                       const TrainConfig& cfg);

// Everything sampling needs besides the SC matrix.
struct Checkpoint {
    std::uint32_t version = 1;
    ModelParams params;
    Schedule schedule;
    TrainConfig train_cfg;
    std::vector<std::string> st_gene_ids;
    std::vector<GeneStats> st_stats;
    std::vector<std::string> sc_gene_ids;
    std::vector<GeneStats> sc_stats;
    std::vector<std::string> st_col_ids;
    GeneAlignment alignment;
    SplitSpec split_spec;
    std::size_t iteration = 0;
    std::string rng_state;  // training stream
    AdamState opt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Fresh checkpoint at iteration 0 with seeded initial parameters.
Checkpoint init_run(const DataBundle& data, ModelConfig model_cfg, const TrainConfig& train_cfg);

struct FitResult {
    double final_train_loss = 0.0;  // mean of the last (up to) 100 step losses
    double final_val_loss = 0.0;
    std::string best_path;
    std::string latest_path;
};

// Runs ckpt from its iteration counter up to train_cfg.iterations, writing
// best-validation and latest checkpoints plus a tab-separated metrics log
// (iteration, train loss, val loss) under out_dir. `progress`, when given,
// receives occasional status lines.
FitResult fit(Checkpoint& ckpt, const DataBundle& data, const std::string& out_dir,
              std::ostream* progress = nullptr);

}  // namespace stdit
