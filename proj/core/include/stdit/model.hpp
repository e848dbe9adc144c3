#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stdit/tensor.hpp"

namespace stdit {

// How the condition vector is produced from the SC matrix.
//   Attention   - landmark attention over all SC genes (default)
//   Off         - condition forced to zero
//   Mlp         - mean-pooled SC matrix through a 2-layer MLP
//   SharedGenes - attention over the SC rows of shared genes only
enum class ConditionMode { Attention, Off, Mlp, SharedGenes };

ConditionMode parse_condition_mode(const std::string& text);
std::string condition_mode_name(ConditionMode mode);

struct ModelConfig {
    std::size_t p = 0;  // spots
    std::size_t q = 0;  // cells
    std::size_t d = 64;
    std::size_t d_c = 64;
    std::size_t d_t = 64;
    std::size_t d_k = 32;
    std::size_t d_v = 32;
    std::size_t landmarks = 64;  // r; landmark count for the condition attention
    std::size_t blocks = 4;
    std::size_t heads = 4;
    ConditionMode condition = ConditionMode::Attention;
    bool concat_sc = true;  // false: SC token replaced by zeros

    void validate() const;
};

struct LinearParams {
    Tensor w;  // in x out
    Tensor b;  // 1 x out
};

struct BlockParams {
    Tensor qkv;             // d x 3d, bias-free (a key bias would be inert)
    LinearParams attn_out;  // d x d
    LinearParams mlp_in;    // d x 4d
    LinearParams mlp_out;   // 4d x d
    LinearParams ada;       // d_c x 6d, zero-initialized
};

struct ModelParams {
    ModelConfig cfg;
    LinearParams st_proj;  // p x d
    LinearParams sc_proj;  // q x d
    Tensor wq, wk;         // q x d_k
    Tensor wv;             // q x d_v
    LinearParams cond_pool;     // d_v x d_c
    LinearParams cond_mlp_in;   // q x d_c (Mlp mode only)
    LinearParams cond_mlp_out;  // d_c x d_c (Mlp mode only)
    LinearParams t_mlp_in;      // d_t x d_c
    LinearParams t_mlp_out;     // d_c x d_c
    std::vector<BlockParams> blocks;
    LinearParams decoder;  // d x 2p, zero-initialized
};

// Weights uniform in +-1/sqrt(fan_in) from a seeded stream; biases zero;
// modulation heads and decoder exactly zero so every block starts as the
// identity and the initial prediction is zero.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Visits every parameter tensor in a fixed order (serialization, optimizer
// state and gradient bookkeeping all rely on this order).
void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const ModelParams& params,
                    const std::function<void(const std::string&, const Tensor&)>& fn);

std::size_t param_count(const ModelConfig& cfg);

// Parameter leaves registered in a Graph, mirroring ModelParams.
struct ModelGraph {
    const ModelConfig* cfg = nullptr;
    struct Lin {
        Graph::NodeId w = Graph::npos, b = Graph::npos;
    };
    Lin st_proj, sc_proj;
    Graph::NodeId wq = Graph::npos, wk = Graph::npos, wv = Graph::npos;
    Lin cond_pool, cond_mlp_in, cond_mlp_out, t_mlp_in, t_mlp_out;
    struct Blk {
        Graph::NodeId qkv = Graph::npos;
        Lin attn_out, mlp_in, mlp_out, ada;
    };
    std::vector<Blk> blocks;
    Lin decoder;
    Graph::NodeId unit_gain = Graph::npos, zero_bias = Graph::npos;  // 1 x d constants
    // leaf ids in for_each_param order, for reading gradients back out
    std::vector<Graph::NodeId> ordered;
};

ModelGraph register_params(Graph& g, const ModelParams& params);

// Builds the graph-side view from leaves already registered in
// for_each_param order (register_params and the gradient checks share this).
ModelGraph wire_params(Graph& g, const ModelConfig& cfg,
                       const std::vector<Graph::NodeId>& ordered);

// Uniform-stride landmark rows: floor(i * m / r) for i < r (all rows if
// m <= r).
std::vector<std::size_t> landmark_rows(std::size_t m, std::size_t r);

// token 0 = st_proj(st_vec), token 1 = sc_proj(sc_vec) (zeros when concat is
// off); returns the 2 x d token sequence. The explicit-switch overload lets
// training withhold the SC token per sample.
Graph::NodeId latent_embed(Graph& g, const ModelGraph& mg, Graph::NodeId st_vec,
                           Graph::NodeId sc_vec);
Graph::NodeId latent_embed(Graph& g, const ModelGraph& mg, Graph::NodeId st_vec,
                           Graph::NodeId sc_vec, bool with_sc_token);

// Keys and values of the condition attention, landmark-compressed, built
// once per graph and shared by every per-gene query.
struct CondKv {
    Graph::NodeId keys = Graph::npos;    // r x d_k
    Graph::NodeId values = Graph::npos;  // r x d_v
};

CondKv condition_kv(Graph& g, const ModelGraph& mg, Graph::NodeId kv_source);

// One gene's condition row: softmax(q K_r^T / sqrt(d_k)) V_r through the
// projection head. query_rows may hold several genes (one output row each).
Graph::NodeId condition_rows_from(Graph& g, const ModelGraph& mg, const CondKv& kv,
                                  Graph::NodeId query_rows);

// Per-gene condition rows for every gene of x_sc (m x d_c): landmark
// attention (queries = all rows), the per-gene MLP variant, or zeros,
// depending on the configured mode.
Graph::NodeId condition_embed(Graph& g, const ModelGraph& mg, Graph::NodeId x_sc);

// Interleaved [sin(t w_i), cos(t w_i)] features, w_i = 10000^(-2i/d_t).
Tensor timestep_features(std::size_t t, std::size_t d_t);

// Sinusoidal features through the 2-layer MLP; 1 x d_c.
Graph::NodeId timestep_embed(Graph& g, const ModelGraph& mg, std::size_t t);

// The DiT stack: per block, adaLN-modulated self-attention and MLP with
// zero-initialized gates on both residual paths. cond_vec is the summed
// timestep + condition embedding (1 x d_c).
Graph::NodeId run_blocks(Graph& g, const ModelGraph& mg, Graph::NodeId tokens,
                         Graph::NodeId cond_vec);

struct DenoiseNodes {
    Graph::NodeId eps_hat = Graph::npos;  // 1 x p
    Graph::NodeId cov_hat = Graph::npos;  // 1 x p
};

// Full denoiser: blocks then final norm + linear decoder on the ST token,
// split into noise and diagonal-covariance heads.
DenoiseNodes denoise(Graph& g, const ModelGraph& mg, Graph::NodeId tokens, std::size_t t,
                     Graph::NodeId cond);

// --- convenience evaluation wrappers (build a throwaway graph) ---

// Per-gene condition rows of a prepared SC matrix (SharedGenes restriction
// is the caller's job; see condition_input_matrix in train.hpp).
Tensor condition_matrix(const ModelParams& params, const Tensor& x_sc);

// Condition row for one query gene against a key/value source matrix.
Tensor condition_vector(const ModelParams& params, const Tensor& kv_source,
                        const Tensor& query_row);

struct DenoiseResult {
    Tensor eps_hat;
    Tensor cov_hat;
};

// eps prediction for one gene: embeds (st_vec, sc_vec), runs the stack with
// a precomputed condition vector.
DenoiseResult predict_eps(const ModelParams& params, const Tensor& cond, const Tensor& st_vec,
                          const Tensor& sc_vec, std::size_t t);

}  // namespace stdit
