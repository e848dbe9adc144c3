#include "stdit/model.hpp"

#include <cmath>

#include "stdit/error.hpp"
#include "stdit/rng.hpp"

namespace stdit {

ConditionMode parse_condition_mode(const std::string& text) {
    if (text == "attention") return ConditionMode::Attention;
    if (text == "off") return ConditionMode::Off;
    if (text == "mlp") return ConditionMode::Mlp;
    if (text == "shared-genes") return ConditionMode::SharedGenes;
    throw ConfigError("condition must be attention|off|mlp|shared-genes, got '" + text + "'");
}

std::string condition_mode_name(ConditionMode mode) {
    switch (mode) {
        case ConditionMode::Attention: return "attention";
        case ConditionMode::Off: return "off";
        case ConditionMode::Mlp: return "mlp";
        case ConditionMode::SharedGenes: return "shared-genes";
    }
    return "attention";
}

void ModelConfig::validate() const {
    if (p == 0 || q == 0) throw ConfigError("model: p and q must be positive");
    if (d == 0 || d_c == 0 || d_t == 0 || d_k == 0 || d_v == 0 || landmarks == 0) {
        throw ConfigError("model: all embedding dimensions must be positive");
    }
    if (blocks == 0) throw ConfigError("model: need at least one block");
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("model: heads must divide d (" + std::to_string(d) + " % " +
                          std::to_string(heads) + " != 0)");
    }
    if (d_t % 2 != 0) throw ConfigError("model: d_t must be even");
}

namespace {

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng, bool zero) {
    LinearParams lin;
    lin.w = Tensor(in, out);
    lin.b = Tensor(1, out);
    if (!zero) {
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : lin.w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return lin;
}

Tensor init_weight(std::size_t in, std::size_t out, Rng& rng) {
    Tensor w(in, out);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, "init"));
    ModelParams p;
    p.cfg = cfg;
    p.st_proj = init_linear(cfg.p, cfg.d, rng, false);
    p.sc_proj = init_linear(cfg.q, cfg.d, rng, false);
    p.wq = init_weight(cfg.q, cfg.d_k, rng);
    p.wk = init_weight(cfg.q, cfg.d_k, rng);
    p.wv = init_weight(cfg.q, cfg.d_v, rng);
    p.cond_pool = init_linear(cfg.d_v, cfg.d_c, rng, false);
    if (cfg.condition == ConditionMode::Mlp) {
        p.cond_mlp_in = init_linear(cfg.q, cfg.d_c, rng, false);
        p.cond_mlp_out = init_linear(cfg.d_c, cfg.d_c, rng, false);
    }
    p.t_mlp_in = init_linear(cfg.d_t, cfg.d_c, rng, false);
    p.t_mlp_out = init_linear(cfg.d_c, cfg.d_c, rng, false);
    p.blocks.resize(cfg.blocks);
    for (BlockParams& blk : p.blocks) {
        blk.qkv = init_weight(cfg.d, 3 * cfg.d, rng);
        blk.attn_out = init_linear(cfg.d, cfg.d, rng, false);
        blk.mlp_in = init_linear(cfg.d, 4 * cfg.d, rng, false);
        blk.mlp_out = init_linear(4 * cfg.d, cfg.d, rng, false);
        blk.ada = init_linear(cfg.d_c, 6 * cfg.d, rng, true);
    }
    p.decoder = init_linear(cfg.d, 2 * cfg.p, rng, true);
    return p;
}

namespace {

template <typename P, typename F>
void visit_params(P& p, const F& fn) {
    auto lin = [&](const std::string& name, auto& l) {
        fn(name + ".w", l.w);
        fn(name + ".b", l.b);
    };
    lin("st_proj", p.st_proj);
    lin("sc_proj", p.sc_proj);
    fn("cond.wq", p.wq);
    fn("cond.wk", p.wk);
    fn("cond.wv", p.wv);
    lin("cond.pool", p.cond_pool);
    if (p.cfg.condition == ConditionMode::Mlp) {
        lin("cond.mlp_in", p.cond_mlp_in);
        lin("cond.mlp_out", p.cond_mlp_out);
    }
    lin("t.mlp_in", p.t_mlp_in);
    lin("t.mlp_out", p.t_mlp_out);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        std::string base = "block" + std::to_string(i);
        fn(base + ".qkv", p.blocks[i].qkv);
        lin(base + ".attn_out", p.blocks[i].attn_out);
        lin(base + ".mlp_in", p.blocks[i].mlp_in);
        lin(base + ".mlp_out", p.blocks[i].mlp_out);
        lin(base + ".ada", p.blocks[i].ada);
    }
    lin("decoder", p.decoder);
}

}  // namespace

void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_params(params, fn);
}

void for_each_param(const ModelParams& params,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
    visit_params(params, fn);
}

std::size_t param_count(const ModelConfig& cfg) {
    ModelParams p;
    p.cfg = cfg;
    auto zero_lin = [](std::size_t in, std::size_t out) {
        LinearParams l;
        l.w = Tensor(in, out);
        l.b = Tensor(1, out);
        return l;
    };
    p.st_proj = zero_lin(cfg.p, cfg.d);
    p.sc_proj = zero_lin(cfg.q, cfg.d);
    p.wq = Tensor(cfg.q, cfg.d_k);
    p.wk = Tensor(cfg.q, cfg.d_k);
    p.wv = Tensor(cfg.q, cfg.d_v);
    p.cond_pool = zero_lin(cfg.d_v, cfg.d_c);
    if (cfg.condition == ConditionMode::Mlp) {
        p.cond_mlp_in = zero_lin(cfg.q, cfg.d_c);
        p.cond_mlp_out = zero_lin(cfg.d_c, cfg.d_c);
    }
    p.t_mlp_in = zero_lin(cfg.d_t, cfg.d_c);
    p.t_mlp_out = zero_lin(cfg.d_c, cfg.d_c);
    p.blocks.resize(cfg.blocks);
    for (BlockParams& blk : p.blocks) {
        blk.qkv = Tensor(cfg.d, 3 * cfg.d);
        blk.attn_out = zero_lin(cfg.d, cfg.d);
        blk.mlp_in = zero_lin(cfg.d, 4 * cfg.d);
        blk.mlp_out = zero_lin(4 * cfg.d, cfg.d);
        blk.ada = zero_lin(cfg.d_c, 6 * cfg.d);
    }
    p.decoder = zero_lin(cfg.d, 2 * cfg.p);
    std::size_t count = 0;
    for_each_param(p, [&](const std::string&, const Tensor& t) { count += t.size(); });
    return count;
}

ModelGraph wire_params(Graph& g, const ModelConfig& cfg,
                       const std::vector<Graph::NodeId>& ordered) {
    ModelGraph mg;
    mg.cfg = &cfg;
    mg.ordered = ordered;

    std::size_t i = 0;
    auto next = [&]() {
        if (i >= ordered.size()) {
            throw ConfigError("wire_params: too few parameter leaves for this config");
        }
        return ordered[i++];
    };
    auto lin = [&](ModelGraph::Lin& slot) {
        slot.w = next();
        slot.b = next();
    };
    lin(mg.st_proj);
    lin(mg.sc_proj);
    mg.wq = next();
    mg.wk = next();
    mg.wv = next();
    lin(mg.cond_pool);
    if (cfg.condition == ConditionMode::Mlp) {
        lin(mg.cond_mlp_in);
        lin(mg.cond_mlp_out);
    }
    lin(mg.t_mlp_in);
    lin(mg.t_mlp_out);
    mg.blocks.resize(cfg.blocks);
    for (ModelGraph::Blk& blk : mg.blocks) {
        blk.qkv = next();
        lin(blk.attn_out);
        lin(blk.mlp_in);
        lin(blk.mlp_out);
        lin(blk.ada);
    }
    lin(mg.decoder);
    if (i != ordered.size()) {
        throw ConfigError("wire_params: parameter leaf count does not match the config");
    }

    mg.unit_gain = g.input(Tensor::full(1, cfg.d, 1.0));
    mg.zero_bias = g.input(Tensor(1, cfg.d));
    return mg;
}

ModelGraph register_params(Graph& g, const ModelParams& params) {
    std::vector<Graph::NodeId> ordered;
    for_each_param(params,
                   [&](const std::string&, const Tensor& t) { ordered.push_back(g.input(t)); });
    return wire_params(g, params.cfg, ordered);
}

std::vector<std::size_t> landmark_rows(std::size_t m, std::size_t r) {
    std::vector<std::size_t> idx;
    if (m <= r) {
        idx.resize(m);
        for (std::size_t i = 0; i < m; ++i) idx[i] = i;
        return idx;
    }
    idx.resize(r);
    for (std::size_t i = 0; i < r; ++i) idx[i] = i * m / r;
    return idx;
}

namespace {

Graph::NodeId linear(Graph& g, Graph::NodeId x, const ModelGraph::Lin& lin) {
    return g.add_rowvec(g.matmul(x, lin.w), lin.b);
}

}  // namespace

Graph::NodeId latent_embed(Graph& g, const ModelGraph& mg, Graph::NodeId st_vec,
                           Graph::NodeId sc_vec) {
    return latent_embed(g, mg, st_vec, sc_vec, mg.cfg->concat_sc);
}

Graph::NodeId latent_embed(Graph& g, const ModelGraph& mg, Graph::NodeId st_vec,
                           Graph::NodeId sc_vec, bool with_sc_token) {
    const ModelConfig& cfg = *mg.cfg;
    if (g.value(st_vec).cols != cfg.p || g.value(st_vec).rows != 1) {
        throw ShapeError("latent_embed: ST vector is " + g.value(st_vec).shape_str() +
                         ", expected 1x" + std::to_string(cfg.p));
    }
    if (g.value(sc_vec).cols != cfg.q || g.value(sc_vec).rows != 1) {
        throw ShapeError("latent_embed: SC vector is " + g.value(sc_vec).shape_str() +
                         ", expected 1x" + std::to_string(cfg.q));
    }
    Graph::NodeId st_tok = linear(g, st_vec, mg.st_proj);
    Graph::NodeId sc_tok;
    if (with_sc_token) {
        sc_tok = linear(g, sc_vec, mg.sc_proj);
    } else {
        sc_tok = g.input(Tensor(1, cfg.d));
    }
    return g.concat_rows(st_tok, sc_tok);
}

CondKv condition_kv(Graph& g, const ModelGraph& mg, Graph::NodeId kv_source) {
    const ModelConfig& cfg = *mg.cfg;
    const Tensor& sc = g.value(kv_source);
    if (sc.rows == 0 || sc.cols == 0) {
        throw ConfigError("condition_embed: empty SC matrix");
    }
    if (sc.cols != cfg.q) {
        throw ShapeError("condition_embed: SC matrix is " + sc.shape_str() + ", expected cols " +
                         std::to_string(cfg.q));
    }
    // landmark compression; exact attention when landmarks >= gene count
    Graph::NodeId k = g.matmul(kv_source, mg.wk);  // m x d_k
    Graph::NodeId v = g.matmul(kv_source, mg.wv);  // m x d_v
    std::vector<std::size_t> lm = landmark_rows(sc.rows, cfg.landmarks);
    CondKv kv;
    kv.keys = g.select_rows(k, lm);
    kv.values = g.select_rows(v, lm);
    return kv;
}

Graph::NodeId condition_rows_from(Graph& g, const ModelGraph& mg, const CondKv& kv,
                                  Graph::NodeId query_rows) {
    const ModelConfig& cfg = *mg.cfg;
    if (cfg.condition == ConditionMode::Off) {
        return g.input(Tensor(g.value(query_rows).rows, cfg.d_c));
    }
    if (cfg.condition == ConditionMode::Mlp) {
        Graph::NodeId h = g.gelu(linear(g, query_rows, mg.cond_mlp_in));
        return linear(g, h, mg.cond_mlp_out);
    }
    Graph::NodeId q = g.matmul(query_rows, mg.wq);  // n x d_k
    Graph::NodeId scores =
        g.scale(g.matmul_nt(q, kv.keys), 1.0 / std::sqrt(static_cast<double>(cfg.d_k)));
    Graph::NodeId attn = g.softmax_rows(scores);       // n x r
    Graph::NodeId context = g.matmul(attn, kv.values);  // n x d_v
    return linear(g, context, mg.cond_pool);            // n x d_c
}

Graph::NodeId condition_embed(Graph& g, const ModelGraph& mg, Graph::NodeId x_sc) {
    const ModelConfig& cfg = *mg.cfg;
    if (cfg.condition == ConditionMode::Off) {
        return g.input(Tensor(g.value(x_sc).rows, cfg.d_c));
    }
    if (cfg.condition == ConditionMode::Mlp) {
        const Tensor& sc = g.value(x_sc);
        if (sc.rows == 0 || sc.cols == 0) {
            throw ConfigError("condition_embed: empty SC matrix");
        }
        Graph::NodeId h = g.gelu(linear(g, x_sc, mg.cond_mlp_in));
        return linear(g, h, mg.cond_mlp_out);
    }
    CondKv kv = condition_kv(g, mg, x_sc);
    return condition_rows_from(g, mg, kv, x_sc);
}

Tensor timestep_features(std::size_t t, std::size_t d_t) {
    Tensor feat(1, d_t);
    for (std::size_t i = 0; i < d_t / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d_t));
        double angle = static_cast<double>(t) * freq;
        feat[2 * i] = std::sin(angle);
        feat[2 * i + 1] = std::cos(angle);
    }
    return feat;
}

Graph::NodeId timestep_embed(Graph& g, const ModelGraph& mg, std::size_t t) {
    Graph::NodeId feat = g.input(timestep_features(t, mg.cfg->d_t));
    Graph::NodeId h = g.gelu(linear(g, feat, mg.t_mlp_in));
    return linear(g, h, mg.t_mlp_out);
}

namespace {

// x * (1 + scale) + shift, scale/shift broadcast over token rows
Graph::NodeId modulate(Graph& g, Graph::NodeId x, Graph::NodeId shift, Graph::NodeId scale) {
    return g.add_rowvec(g.mul_rowvec(x, g.add_scalar(scale, 1.0)), shift);
}

Graph::NodeId self_attention(Graph& g, const ModelGraph& mg, const ModelGraph::Blk& blk,
                             Graph::NodeId x) {
    const ModelConfig& cfg = *mg.cfg;
    const std::size_t d = cfg.d;
    const std::size_t dh = d / cfg.heads;
    Graph::NodeId qkv = g.matmul(x, blk.qkv);  // L x 3d
    Graph::NodeId q = g.slice_cols(qkv, 0, d);
    Graph::NodeId k = g.slice_cols(qkv, d, 2 * d);
    Graph::NodeId v = g.slice_cols(qkv, 2 * d, 3 * d);
    Graph::NodeId merged = Graph::npos;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Graph::NodeId qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        Graph::NodeId kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        Graph::NodeId vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        Graph::NodeId scores =
            g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        Graph::NodeId oh = g.matmul(g.softmax_rows(scores), vh);
        merged = (h == 0) ? oh : g.concat_cols(merged, oh);
    }
    return linear(g, merged, blk.attn_out);
}

}  // namespace

Graph::NodeId run_blocks(Graph& g, const ModelGraph& mg, Graph::NodeId tokens,
                         Graph::NodeId cond_vec) {
    const ModelConfig& cfg = *mg.cfg;
    const std::size_t d = cfg.d;
    Graph::NodeId x = tokens;
    for (const ModelGraph::Blk& blk : mg.blocks) {
        Graph::NodeId mod = linear(g, cond_vec, blk.ada);  // 1 x 6d
        Graph::NodeId shift1 = g.slice_cols(mod, 0, d);
        Graph::NodeId scale1 = g.slice_cols(mod, d, 2 * d);
        Graph::NodeId gate1 = g.slice_cols(mod, 2 * d, 3 * d);
        Graph::NodeId shift2 = g.slice_cols(mod, 3 * d, 4 * d);
        Graph::NodeId scale2 = g.slice_cols(mod, 4 * d, 5 * d);
        Graph::NodeId gate2 = g.slice_cols(mod, 5 * d, 6 * d);

        Graph::NodeId h = modulate(g, g.layer_norm(x, mg.unit_gain, mg.zero_bias), shift1,
                                   scale1);
        x = g.add(x, g.mul_rowvec(self_attention(g, mg, blk, h), gate1));

        Graph::NodeId h2 = modulate(g, g.layer_norm(x, mg.unit_gain, mg.zero_bias), shift2,
                                    scale2);
        Graph::NodeId mlp = linear(g, g.gelu(linear(g, h2, blk.mlp_in)), blk.mlp_out);
        x = g.add(x, g.mul_rowvec(mlp, gate2));
    }
    return x;
}

DenoiseNodes denoise(Graph& g, const ModelGraph& mg, Graph::NodeId tokens, std::size_t t,
                     Graph::NodeId cond) {
    const ModelConfig& cfg = *mg.cfg;
    Graph::NodeId cond_vec = g.add(timestep_embed(g, mg, t), cond);
    Graph::NodeId x = run_blocks(g, mg, tokens, cond_vec);
    Graph::NodeId st_tok = g.slice_row(g.layer_norm(x, mg.unit_gain, mg.zero_bias), 0);
    Graph::NodeId out = linear(g, st_tok, mg.decoder);  // 1 x 2p
    DenoiseNodes nodes;
    nodes.eps_hat = g.slice_cols(out, 0, cfg.p);
    nodes.cov_hat = g.slice_cols(out, cfg.p, 2 * cfg.p);
    return nodes;
}

Tensor condition_matrix(const ModelParams& params, const Tensor& x_sc) {
    Graph g;
    ModelGraph mg = register_params(g, params);
    Graph::NodeId cond = condition_embed(g, mg, g.input(x_sc));
    return g.value(cond);
}

Tensor condition_vector(const ModelParams& params, const Tensor& kv_source,
                        const Tensor& query_row) {
    Graph g;
    ModelGraph mg = register_params(g, params);
    Graph::NodeId query = g.input(query_row);
    if (params.cfg.condition == ConditionMode::Off ||
        params.cfg.condition == ConditionMode::Mlp) {
        return g.value(condition_rows_from(g, mg, CondKv{}, query));
    }
    CondKv kv = condition_kv(g, mg, g.input(kv_source));
    return g.value(condition_rows_from(g, mg, kv, query));
}

DenoiseResult predict_eps(const ModelParams& params, const Tensor& cond, const Tensor& st_vec,
                          const Tensor& sc_vec, std::size_t t) {
    Graph g;
    ModelGraph mg = register_params(g, params);
    Graph::NodeId tokens = latent_embed(g, mg, g.input(st_vec), g.input(sc_vec));
    DenoiseNodes nodes = denoise(g, mg, tokens, t, g.input(cond));
    return {g.value(nodes.eps_hat), g.value(nodes.cov_hat)};
}

}  // namespace stdit
