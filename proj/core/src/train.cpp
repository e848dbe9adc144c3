#include "stdit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "stdit/error.hpp"

namespace stdit {

void TrainConfig::validate() const {
    if (batch == 0) throw ConfigError("train: batch must be positive");
    if (lr <= 0.0 || beta1 <= 0.0 || beta2 <= 0.0 || eps <= 0.0) {
        throw ConfigError("train: optimizer constants must be positive");
    }
    if (mask_ratio < 0.0 || mask_ratio > 1.0) {
        throw ConfigError("train: mask_ratio must be in [0, 1]");
    }
    if (whole_gene_prob < 0.0 || whole_gene_prob > 1.0) {
        throw ConfigError("train: whole_gene_prob must be in [0, 1]");
    }
    if (sc_token_dropout < 0.0 || sc_token_dropout > 1.0) {
        throw ConfigError("train: sc_token_dropout must be in [0, 1]");
    }
    if (steps == 0) throw ConfigError("train: diffusion steps must be positive");
}

double loss_eps(const Tensor& eps, const Tensor& eps_hat, const Tensor& unknown) {
    if (!eps.same_shape(eps_hat) || !eps.same_shape(unknown)) {
        throw ShapeError("loss_eps: shapes differ: " + eps.shape_str() + " vs " +
                         eps_hat.shape_str() + " vs " + unknown.shape_str());
    }
    double count = 0.0;
    for (double m : unknown.data) count += (m != 0.0) ? 1.0 : 0.0;
    if (count == 0.0) {
        throw ConfigError("loss_eps: unknown mask selects no entries");
    }
    // same accumulation order as Graph::masked_mse so the two routes agree
    // bit for bit
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (unknown[i] != 0.0) {
            double d = eps_hat[i] - eps[i];
            acc += d * d;
        }
    }
    return acc / count;
}

AdamState init_adam(const ModelParams& params) {
    AdamState st;
    for_each_param(params, [&](const std::string&, const Tensor& t) {
        st.m.emplace_back(t.rows, t.cols);
        st.v.emplace_back(t.rows, t.cols);
    });
    return st;
}

void adam_update(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
                 const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    std::size_t i = 0;
    for_each_param(params, [&](const std::string&, Tensor& t) {
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < t.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            t[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        ++i;
    });
}

Tensor condition_input_matrix(const DataBundle& data, ConditionMode mode) {
    if (mode == ConditionMode::SharedGenes) {
        Tensor sub(data.alignment.shared_sc_rows.size(), data.sc.n_cols());
        for (std::size_t i = 0; i < data.alignment.shared_sc_rows.size(); ++i) {
            const std::size_t r = data.alignment.shared_sc_rows[i];
            for (std::size_t c = 0; c < data.sc.n_cols(); ++c) {
                sub.at(i, c) = data.sc.values.at(r, c);
            }
        }
        return sub;
    }
    return data.sc.values;
}

namespace {

struct GeneDraw {
    std::size_t t = 0;
    Tensor eps;
    Tensor noisy;
    Tensor unknown;
    bool drop_sc_token = false;
};

// Draw order per gene: mode, mask sample, timestep, noise, token dropout.
// Known entries of the noisy vector are clamped to the clean values so
// training matches the clamped inference chain. With probability
// sc_token_dropout the sample withholds the SC token, leaving the condition
// embedding as the only carrier of the gene's identity; this keeps both
// conditioning pathways load-bearing.
GeneDraw draw_gene_sample(const Tensor& x0, const Tensor& raw_row, const Schedule& sched,
                          const TrainConfig& cfg, Rng& rng) {
    GeneDraw d;
    MaskMode mode =
        rng.uniform() < cfg.whole_gene_prob ? MaskMode::WholeGene : MaskMode::SpotMask;
    MaskPair masks = make_masks(raw_row, cfg.mask_ratio, mode, rng);
    d.t = 1 + static_cast<std::size_t>(rng.uniform_int(sched.steps));
    d.eps = Tensor(1, x0.cols);
    for (std::size_t j = 0; j < d.eps.size(); ++j) d.eps[j] = rng.normal();
    d.noisy = q_sample(x0, d.t, d.eps, sched);
    for (std::size_t j = 0; j < d.noisy.size(); ++j) {
        if (masks.unknown[j] == 0.0) d.noisy[j] = x0[j];
    }
    d.unknown = std::move(masks.unknown);
    d.drop_sc_token = rng.uniform() < cfg.sc_token_dropout;
    return d;
}

std::size_t raw_row_for(const ExpressionMatrix& raw, const std::string& gene_id) {
    std::ptrdiff_t r = raw.find_gene(gene_id);
    if (r < 0) {
        throw DataError("training: gene '" + gene_id + "' missing from raw ST matrix");
    }
    return static_cast<std::size_t>(r);
}

// Key/value context shared by every gene of one step's graph (empty for the
// modes that do not attend).
struct CondContext {
    CondKv kv;
    bool use_kv = false;
};

CondContext prepare_condition(Graph& g, const ModelGraph& mg, const DataBundle& data) {
    CondContext ctx;
    const ConditionMode mode = mg.cfg->condition;
    if (mode == ConditionMode::Off || mode == ConditionMode::Mlp) return ctx;
    ctx.kv = condition_kv(g, mg, g.input(condition_input_matrix(data, mode)));
    ctx.use_kv = true;
    return ctx;
}

// Batch loss graph shared by training and validation.
Graph::NodeId build_batch_loss(Graph& g, const ModelGraph& mg, const DataBundle& data,
                               const std::vector<std::size_t>& shared_indices,
                               const Schedule& sched, const TrainConfig& cfg, Rng& rng,
                               const CondContext& ctx, std::vector<std::size_t>* t_drawn) {
    Graph::NodeId total = Graph::npos;
    for (std::size_t idx : shared_indices) {
        const std::size_t st_row = data.alignment.shared_st_rows[idx];
        const std::size_t sc_row = data.alignment.shared_sc_rows[idx];
        Tensor x0 = data.st.gene_row(st_row);
        Tensor raw_row =
            data.st_raw.gene_row(raw_row_for(data.st_raw, data.alignment.shared[idx]));
        GeneDraw d = draw_gene_sample(x0, raw_row, sched, cfg, rng);
        if (t_drawn) t_drawn->push_back(d.t);

        Graph::NodeId sc_vec = g.input(data.sc.gene_row(sc_row));
        Graph::NodeId cond = condition_rows_from(g, mg, ctx.kv, sc_vec);
        Graph::NodeId tokens = latent_embed(g, mg, g.input(std::move(d.noisy)), sc_vec,
                                            mg.cfg->concat_sc && !d.drop_sc_token);
        DenoiseNodes out = denoise(g, mg, tokens, d.t, cond);
        Graph::NodeId loss = g.masked_mse(out.eps_hat, std::move(d.eps), std::move(d.unknown));
        total = (total == Graph::npos) ? loss : g.add(total, loss);
    }
    return g.scale(total, 1.0 / static_cast<double>(shared_indices.size()));
}

}  // namespace

double train_step(const std::vector<std::size_t>& batch, const DataBundle& data,
                  ModelParams& params, const Schedule& sched, AdamState& opt,
                  const TrainConfig& cfg, Rng& rng) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    Graph g;
    ModelGraph mg = register_params(g, params);
    CondContext ctx = prepare_condition(g, mg, data);
    std::vector<std::size_t> t_drawn;
    Graph::NodeId loss = build_batch_loss(g, mg, data, batch, sched, cfg, rng, ctx, &t_drawn);

    double loss_value = g.value(loss)[0];
    if (!std::isfinite(loss_value)) {
        std::ostringstream os;
        os << "training aborted: non-finite loss; genes";
        for (std::size_t idx : batch) os << ' ' << data.alignment.shared[idx];
        os << "; timesteps";
        for (std::size_t t : t_drawn) os << ' ' << t;
        throw NumericError(os.str());
    }

    g.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(mg.ordered.size());
    for (Graph::NodeId id : mg.ordered) grads.push_back(g.grad(id));
    adam_update(params, grads, opt, cfg);
    return loss_value;
}

namespace {

std::vector<std::size_t> shared_indices_of(const GeneAlignment& alignment,
                                           const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < alignment.shared.size(); ++i) pos.emplace(alignment.shared[i], i);
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) {
            throw DataError("split gene '" + id + "' not in shared gene set");
        }
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

double validation_loss(const DataBundle& data, const ModelParams& params, const Schedule& sched,
                       const TrainConfig& cfg) {
    std::vector<std::size_t> val = shared_indices_of(data.alignment, data.split_spec.val);
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    Rng rng(derive_seed(cfg.seed, "val"));
    Graph g;
    ModelGraph mg = register_params(g, params);
    CondContext ctx = prepare_condition(g, mg, data);
    Graph::NodeId loss = build_batch_loss(g, mg, data, val, sched, cfg, rng, ctx, nullptr);
    return g.value(loss)[0];
}

// ---------------------------------------------------------------------------
// checkpoint serialization
//
// Binary, little-endian, fixed section order (see docs/formats.md):
//   magic "STDITCKP", u32 version, model config, named parameter tensors,
//   schedule arrays, train config, normalization stats, alignment, split,
//   iteration, rng state, optimizer state.
// ---------------------------------------------------------------------------

namespace {

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    }
    void bytes(const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u64(t.rows);
        u64(t.cols);
        bytes(t.data.data(), t.data.size() * sizeof(double));
    }
    void f64_vec(const std::vector<double>& v) {
        u64(v.size());
        bytes(v.data(), v.size() * sizeof(double));
    }
    void str_vec(const std::vector<std::string>& v) {
        u64(v.size());
        for (const std::string& s : v) str(s);
    }
    void idx_vec(const std::vector<std::size_t>& v) {
        u64(v.size());
        for (std::size_t x : v) u64(x);
    }
    void stats_vec(const std::vector<GeneStats>& v) {
        u64(v.size());
        for (const GeneStats& s : v) {
            f64(s.mean);
            f64(s.stddev);
        }
    }
};

struct Reader {
    std::ifstream in;
    std::string path;
    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw DataError("cannot open checkpoint '" + p + "'");
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in) throw DataError("checkpoint '" + path + "' is truncated");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    Tensor tensor() {
        std::size_t r = u64();
        std::size_t c = u64();
        Tensor t(r, c);
        if (t.size()) bytes(t.data.data(), t.size() * sizeof(double));
        return t;
    }
    std::vector<double> f64_vec() {
        std::size_t n = u64();
        std::vector<double> v(n);
        if (n) bytes(v.data(), n * sizeof(double));
        return v;
    }
    std::vector<std::string> str_vec() {
        std::size_t n = u64();
        std::vector<std::string> v(n);
        for (std::string& s : v) s = str();
        return v;
    }
    std::vector<std::size_t> idx_vec() {
        std::size_t n = u64();
        std::vector<std::size_t> v(n);
        for (std::size_t& x : v) x = u64();
        return v;
    }
    std::vector<GeneStats> stats_vec() {
        std::size_t n = u64();
        std::vector<GeneStats> v(n);
        for (GeneStats& s : v) {
            s.mean = f64();
            s.stddev = f64();
        }
        return v;
    }
};

constexpr char kMagic[8] = {'S', 'T', 'D', 'I', 'T', 'C', 'K', 'P'};

void write_model_config(Writer& w, const ModelConfig& cfg) {
    w.u64(cfg.p);
    w.u64(cfg.q);
    w.u64(cfg.d);
    w.u64(cfg.d_c);
    w.u64(cfg.d_t);
    w.u64(cfg.d_k);
    w.u64(cfg.d_v);
    w.u64(cfg.landmarks);
    w.u64(cfg.blocks);
    w.u64(cfg.heads);
    w.u8(static_cast<std::uint8_t>(cfg.condition));
    w.u8(cfg.concat_sc ? 1 : 0);
}

ModelConfig read_model_config(Reader& r) {
    ModelConfig cfg;
    cfg.p = r.u64();
    cfg.q = r.u64();
    cfg.d = r.u64();
    cfg.d_c = r.u64();
    cfg.d_t = r.u64();
    cfg.d_k = r.u64();
    cfg.d_v = r.u64();
    cfg.landmarks = r.u64();
    cfg.blocks = r.u64();
    cfg.heads = r.u64();
    cfg.condition = static_cast<ConditionMode>(r.u8());
    cfg.concat_sc = r.u8() != 0;
    return cfg;
}

void write_train_config(Writer& w, const TrainConfig& cfg) {
    w.u64(cfg.iterations);
    w.u64(cfg.batch);
    w.f64(cfg.lr);
    w.f64(cfg.beta1);
    w.f64(cfg.beta2);
    w.f64(cfg.eps);
    w.f64(cfg.mask_ratio);
    w.f64(cfg.whole_gene_prob);
    w.f64(cfg.sc_token_dropout);
    w.u64(cfg.steps);
    w.f64(cfg.beta_start);
    w.f64(cfg.beta_end);
    w.u64(cfg.seed);
    w.u64(cfg.checkpoint_every);
    w.u64(cfg.val_every);
}

TrainConfig read_train_config(Reader& r) {
    TrainConfig cfg;
    cfg.iterations = r.u64();
    cfg.batch = r.u64();
    cfg.lr = r.f64();
    cfg.beta1 = r.f64();
    cfg.beta2 = r.f64();
    cfg.eps = r.f64();
    cfg.mask_ratio = r.f64();
    cfg.whole_gene_prob = r.f64();
    cfg.sc_token_dropout = r.f64();
    cfg.steps = r.u64();
    cfg.beta_start = r.f64();
    cfg.beta_end = r.f64();
    cfg.seed = r.u64();
    cfg.checkpoint_every = r.u64();
    cfg.val_every = r.u64();
    return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(ckpt.version);
    write_model_config(w, ckpt.params.cfg);

    std::uint32_t n_tensors = 0;
    for_each_param(ckpt.params, [&](const std::string&, const Tensor&) { ++n_tensors; });
    w.u32(n_tensors);
    for_each_param(ckpt.params, [&](const std::string& name, const Tensor& t) {
        w.str(name);
        w.tensor(t);
    });

    w.u64(ckpt.schedule.steps);
    w.f64_vec(ckpt.schedule.betas);
    w.f64_vec(ckpt.schedule.alpha_hats);
    w.f64_vec(ckpt.schedule.alpha_bars);
    w.f64_vec(ckpt.schedule.posterior_vars);

    write_train_config(w, ckpt.train_cfg);

    w.str_vec(ckpt.st_gene_ids);
    w.stats_vec(ckpt.st_stats);
    w.str_vec(ckpt.sc_gene_ids);
    w.stats_vec(ckpt.sc_stats);
    w.str_vec(ckpt.st_col_ids);

    w.str_vec(ckpt.alignment.shared);
    w.str_vec(ckpt.alignment.sc_unique);
    w.idx_vec(ckpt.alignment.shared_st_rows);
    w.idx_vec(ckpt.alignment.shared_sc_rows);

    w.str_vec(ckpt.split_spec.train);
    w.str_vec(ckpt.split_spec.val);
    w.str_vec(ckpt.split_spec.test);
    w.u64(ckpt.split_spec.seed);

    w.u64(ckpt.iteration);
    w.str(ckpt.rng_state);

    w.u64(ckpt.opt.step);
    w.u32(static_cast<std::uint32_t>(ckpt.opt.m.size()));
    for (const Tensor& t : ckpt.opt.m) w.tensor(t);
    for (const Tensor& t : ckpt.opt.v) w.tensor(t);
    if (!w.out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("'" + path + "' is not a checkpoint file");
    }
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != 1) {
        throw DataError("checkpoint '" + path + "' has unsupported version " +
                        std::to_string(ckpt.version));
    }
    ckpt.params.cfg = read_model_config(r);
    ckpt.params = init_params(ckpt.params.cfg, 0);
    std::uint32_t n_tensors = r.u32();
    std::unordered_map<std::string, Tensor> loaded;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = r.str();
        loaded.emplace(std::move(name), r.tensor());
    }
    for_each_param(ckpt.params, [&](const std::string& name, Tensor& t) {
        auto it = loaded.find(name);
        if (it == loaded.end()) {
            throw DataError("checkpoint '" + path + "' is missing tensor '" + name + "'");
        }
        if (!t.same_shape(it->second)) {
            throw DataError("checkpoint tensor '" + name + "' has shape " +
                            it->second.shape_str() + ", expected " + t.shape_str());
        }
        t = std::move(it->second);
    });

    ckpt.schedule.steps = r.u64();
    ckpt.schedule.betas = r.f64_vec();
    ckpt.schedule.alpha_hats = r.f64_vec();
    ckpt.schedule.alpha_bars = r.f64_vec();
    ckpt.schedule.posterior_vars = r.f64_vec();

    ckpt.train_cfg = read_train_config(r);

    ckpt.st_gene_ids = r.str_vec();
    ckpt.st_stats = r.stats_vec();
    ckpt.sc_gene_ids = r.str_vec();
    ckpt.sc_stats = r.stats_vec();
    ckpt.st_col_ids = r.str_vec();

    ckpt.alignment.shared = r.str_vec();
    ckpt.alignment.sc_unique = r.str_vec();
    ckpt.alignment.shared_st_rows = r.idx_vec();
    ckpt.alignment.shared_sc_rows = r.idx_vec();

    ckpt.split_spec.train = r.str_vec();
    ckpt.split_spec.val = r.str_vec();
    ckpt.split_spec.test = r.str_vec();
    ckpt.split_spec.seed = r.u64();

    ckpt.iteration = r.u64();
    ckpt.rng_state = r.str();

    ckpt.opt.step = r.u64();
    std::uint32_t n_moments = r.u32();
    ckpt.opt.m.resize(n_moments);
    for (Tensor& t : ckpt.opt.m) t = r.tensor();
    ckpt.opt.v.resize(n_moments);
    for (Tensor& t : ckpt.opt.v) t = r.tensor();
    return ckpt;
}

Checkpoint init_run(const DataBundle& data, ModelConfig model_cfg,
                    const TrainConfig& train_cfg) {
    train_cfg.validate();
    model_cfg.p = data.st.n_cols();
    model_cfg.q = data.sc.n_cols();
    model_cfg.validate();

    Checkpoint ckpt;
    ckpt.params = init_params(model_cfg, train_cfg.seed);
    ckpt.schedule = make_schedule(train_cfg.steps, train_cfg.beta_start, train_cfg.beta_end);
    ckpt.train_cfg = train_cfg;
    ckpt.st_gene_ids = data.st.gene_ids;
    ckpt.st_stats = data.st.per_gene_stats;
    ckpt.sc_gene_ids = data.sc.gene_ids;
    ckpt.sc_stats = data.sc.per_gene_stats;
    ckpt.st_col_ids = data.st.col_ids;
    ckpt.alignment = data.alignment;
    ckpt.split_spec = data.split_spec;
    ckpt.iteration = 0;
    ckpt.rng_state = Rng(derive_seed(train_cfg.seed, "train")).save_state();
    ckpt.opt = init_adam(ckpt.params);
    return ckpt;
}

FitResult fit(Checkpoint& ckpt, const DataBundle& data, const std::string& out_dir,
              std::ostream* progress) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const TrainConfig& cfg = ckpt.train_cfg;

    std::vector<std::size_t> train_pool =
        shared_indices_of(data.alignment, data.split_spec.train);
    if (train_pool.empty()) throw DataError("fit: empty training split");

    Rng rng(0);
    rng.restore_state(ckpt.rng_state);

    FitResult result;
    result.best_path = (fs::path(out_dir) / "ckpt_best.bin").string();
    result.latest_path = (fs::path(out_dir) / "ckpt_latest.bin").string();

    std::ofstream log((fs::path(out_dir) / "train_log.tsv").string(),
                      ckpt.iteration == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError("fit: cannot write training log in '" + out_dir + "'");
    if (ckpt.iteration == 0) log << "iter\ttrain_loss\tval_loss\n";

    double best_val = std::numeric_limits<double>::infinity();
    double last_train = std::numeric_limits<double>::quiet_NaN();
    double last_val = std::numeric_limits<double>::quiet_NaN();
    std::deque<double> tail_losses;  // smoothing window; per-step losses are noisy

    auto snapshot = [&](const std::string& path) {
        ckpt.rng_state = rng.save_state();
        save_checkpoint(ckpt, path);
    };

    bool stepped = false;
    for (std::size_t iter = ckpt.iteration + 1; iter <= cfg.iterations; ++iter) {
        stepped = true;
        std::vector<std::size_t> batch(cfg.batch);
        for (std::size_t& b : batch) b = train_pool[rng.uniform_int(train_pool.size())];
        try {
            last_train = train_step(batch, data, ckpt.params, ckpt.schedule, ckpt.opt, cfg, rng);
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(iter) + ": " + e.what());
        }
        ckpt.iteration = iter;
        tail_losses.push_back(last_train);
        if (tail_losses.size() > 100) tail_losses.pop_front();

        const bool at_val = iter % cfg.val_every == 0 || iter == cfg.iterations;
        if (at_val) {
            last_val = validation_loss(data, ckpt.params, ckpt.schedule, cfg);
            log << iter << '\t' << last_train << '\t' << last_val << '\n';
            log.flush();
            if (progress) {
                (*progress) << "iter " << iter << " train " << last_train << " val " << last_val
                            << "\n";
            }
            if (last_val < best_val) {
                best_val = last_val;
                snapshot(result.best_path);
            }
        }
        if (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations) {
            snapshot(result.latest_path);
        }
    }

    if (!stepped) {
        // nothing to train; still leave a usable checkpoint behind
        snapshot(result.latest_path);
    }

    if (!tail_losses.empty()) {
        double sum = 0.0;
        for (double v : tail_losses) sum += v;
        result.final_train_loss = sum / static_cast<double>(tail_losses.size());
    } else {
        result.final_train_loss = last_train;
    }
    result.final_val_loss = last_val;
    return result;
}

}  // namespace stdit
