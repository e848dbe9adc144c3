#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "stdit/train.hpp"

using namespace stdit;
using testutil::bit_equal;
using testutil::desk_model;
using testutil::make_bundle;

namespace {

std::string temp_dir(const std::string& leaf) {
    auto p = std::filesystem::temp_directory_path() / "stdit_tests" / leaf;
    std::filesystem::create_directories(p);
    return p.string();
}

SynthConfig tiny_synth() {
    SynthConfig cfg;
    cfg.genes = 10;
    cfg.spots = 16;
    cfg.cells = 12;
    cfg.rank = 2;
    cfg.noise = 0.1;
    cfg.seed = 3;
    return cfg;
}

TrainConfig tiny_train(std::size_t iterations) {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch = 8;
    cfg.steps = 50;
    cfg.beta_end = 0.45;  // desk schedule: the chain must end near pure noise
    cfg.seed = 3;
    cfg.val_every = 50;
    cfg.checkpoint_every = 1000;
    return cfg;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("loss_eps examples") {
    Tensor eps(1, 2, {1, -1});
    CHECK(loss_eps(eps, eps, Tensor::full(1, 2, 1.0)) == 0.0);

    Tensor zero(1, 2);
    CHECK(loss_eps(eps, zero, Tensor::full(1, 2, 1.0)) == doctest::Approx(1.0));

    Tensor e3(1, 3, {1, 2, 3});
    Tensor h3(1, 3, {1, 2, 0});
    Tensor m3(1, 3, {0, 0, 1});
    CHECK(loss_eps(e3, h3, m3) == doctest::Approx(9.0));

    CHECK_THROWS_AS(loss_eps(e3, h3, Tensor(1, 3)), ConfigError);
}

TEST_CASE("loss_eps agrees with the graph route bit for bit") {
    Rng rng(5);
    Tensor eps = testutil::random_normal(1, 9, rng);
    Tensor eps_hat = testutil::random_normal(1, 9, rng);
    Tensor unknown(1, 9);
    for (double& v : unknown.data) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
    unknown[0] = 1.0;

    Graph g;
    auto node = g.masked_mse(g.input(eps_hat), eps, unknown);
    CHECK(g.value(node)[0] == loss_eps(eps, eps_hat, unknown));
}

TEST_CASE("initial loss sits near one") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(0);
    Checkpoint ckpt = init_run(data, desk_model(), tc);

    // eps_hat is identically zero at init, so each loss is a masked mean of
    // squared standard normals
    Rng rng(derive_seed(7, "train"));
    std::vector<std::size_t> pool(data.alignment.shared.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    double total = 0.0;
    const int rounds = 40;  // 40 rounds x 8 genes = 320 draws
    AdamState throwaway = init_adam(ckpt.params);
    TrainConfig no_update = tc;
    no_update.lr = 0.0;
    for (int i = 0; i < rounds; ++i) {
        std::vector<std::size_t> batch;
        for (std::size_t b = 0; b < 8; ++b) batch.push_back(pool[rng.uniform_int(pool.size())]);
        total += train_step(batch, data, ckpt.params, ckpt.schedule, throwaway, no_update, rng);
    }
    double mean = total / rounds;
    CHECK(mean > 0.85);
    CHECK(mean < 1.15);
}

TEST_CASE("full training-loss gradient on a micro bundle") {
    SynthConfig sc;
    sc.genes = 2;
    sc.spots = 4;
    sc.cells = 3;
    sc.rank = 1;
    sc.noise = 0.1;
    sc.seed = 11;
    // two genes are below the split minimum; build the bundle by hand
    SynthData synth = make_synth(sc);
    DataBundle data;
    data.st_raw = synth.st;
    data.st = preprocess(synth.st, 0);
    data.sc = preprocess(synth.sc, 0);
    data.alignment = align(data.st, data.sc);
    data.split_spec.train = data.alignment.shared;
    data.split_spec.val = data.alignment.shared;
    REQUIRE(data.alignment.shared.size() == 2);

    TrainConfig tc = tiny_train(1);
    tc.steps = 4;
    Checkpoint ckpt = init_run(data, desk_model(), tc);
    Rng prng(13);
    for_each_param(ckpt.params, [&](const std::string&, Tensor& t) {
        for (double& v : t.data) v = 0.4 * (2.0 * prng.uniform() - 1.0);
    });

    // freeze one batch's draws, then treat the loss as a pure function of
    // the parameters
    struct Draw {
        Tensor noisy, sc_row, eps, unknown;
        std::size_t t;
    };
    std::vector<Draw> draws;
    Rng rng(17);
    for (std::size_t idx = 0; idx < 2; ++idx) {
        Tensor x0 = data.st.gene_row(data.alignment.shared_st_rows[idx]);
        Tensor raw = data.st_raw.gene_row(
            static_cast<std::size_t>(data.st_raw.find_gene(data.alignment.shared[idx])));
        MaskPair masks = make_masks(raw, 0.5, MaskMode::WholeGene, rng);
        Draw d;
        d.t = 1 + rng.uniform_int(tc.steps);
        d.eps = testutil::random_normal(1, x0.cols, rng);
        d.noisy = q_sample(x0, d.t, d.eps, ckpt.schedule);
        d.unknown = masks.unknown;
        d.sc_row = data.sc.gene_row(data.alignment.shared_sc_rows[idx]);
        draws.push_back(std::move(d));
    }
    Tensor cond_input = condition_input_matrix(data, ckpt.params.cfg.condition);

    std::vector<Tensor> inputs;
    for_each_param(ckpt.params,
                   [&](const std::string&, Tensor& t) { inputs.push_back(t); });
    const ModelConfig cfg = ckpt.params.cfg;
    auto build = [&](Graph& g, const std::vector<Graph::NodeId>& ids) {
        ModelGraph mg = wire_params(g, cfg, ids);
        auto cond_rows = condition_embed(g, mg, g.input(cond_input));
        Graph::NodeId total = Graph::npos;
        for (std::size_t k = 0; k < draws.size(); ++k) {
            const Draw& d = draws[k];
            auto cond = g.slice_row(cond_rows, data.alignment.shared_sc_rows[k]);
            auto tokens = latent_embed(g, mg, g.input(d.noisy), g.input(d.sc_row));
            DenoiseNodes out = denoise(g, mg, tokens, d.t, cond);
            auto loss = g.masked_mse(out.eps_hat, d.eps, d.unknown);
            total = total == Graph::npos ? loss : g.add(total, loss);
        }
        return g.scale(total, 0.5);
    };
    double err = grad_check(build, inputs, 3e-4);
    CHECK(err < 1e-3);
}

TEST_CASE("identical seeds give bit-identical loss trajectories") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(10);
    auto run = [&]() {
        Checkpoint ckpt = init_run(data, desk_model(), tc);
        Rng rng(0);
        rng.restore_state(ckpt.rng_state);
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < data.alignment.shared.size(); ++i) pool.push_back(i);
        std::vector<double> losses;
        for (std::size_t it = 0; it < tc.iterations; ++it) {
            std::vector<std::size_t> batch;
            for (std::size_t b = 0; b < tc.batch; ++b) {
                batch.push_back(pool[rng.uniform_int(pool.size())]);
            }
            losses.push_back(
                train_step(batch, data, ckpt.params, ckpt.schedule, ckpt.opt, tc, rng));
        }
        return losses;
    };
    CHECK(run() == run());
}

TEST_CASE("training drives the loss down on a learnable bundle") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(2000);
    tc.val_every = 500;
    // the ST token must not be a bottleneck: d >= spot count, or (p - d)/p
    // of the noise is unrecoverable by construction
    Checkpoint ckpt = init_run(data, desk_model(16), tc);
    std::string dir = temp_dir("overfit");
    FitResult res = fit(ckpt, data, dir);
    // initial loss is the analytic value of ~1, so this is a 4x reduction
    CHECK(res.final_train_loss < 0.25);
    CHECK(std::filesystem::exists(res.latest_path));
    CHECK(std::filesystem::exists(dir + "/train_log.tsv"));
}

TEST_CASE("validation loss is reproducible") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(0);
    Checkpoint ckpt = init_run(data, desk_model(), tc);
    double a = validation_loss(data, ckpt.params, ckpt.schedule, tc);
    double b = validation_loss(data, ckpt.params, ckpt.schedule, tc);
    CHECK(a == b);
}

TEST_CASE("checkpoint round-trip is byte-identical") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(3);
    Checkpoint ckpt = init_run(data, desk_model(), tc);
    std::string dir = temp_dir("ckpt");
    fit(ckpt, data, dir);

    std::string first = dir + "/a.bin";
    std::string second = dir + "/b.bin";
    save_checkpoint(ckpt, first);
    Checkpoint loaded = load_checkpoint(first);
    save_checkpoint(loaded, second);
    CHECK(testutil::read_file(first) == testutil::read_file(second));
    CHECK(!testutil::read_file(first).empty());
}

TEST_CASE("zero iterations leaves the initialization untouched") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(0);
    Checkpoint ckpt = init_run(data, desk_model(), tc);
    std::vector<Tensor> before;
    for_each_param(ckpt.params, [&](const std::string&, Tensor& t) { before.push_back(t); });

    std::string dir = temp_dir("noop");
    FitResult res = fit(ckpt, data, dir);
    std::size_t i = 0;
    for_each_param(ckpt.params, [&](const std::string&, Tensor& t) {
        CHECK(bit_equal(before[i++], t));
    });
    CHECK(std::filesystem::exists(res.latest_path));

    // resuming a finished run rewrites the same bytes
    Checkpoint reloaded = load_checkpoint(res.latest_path);
    std::string bytes_before = testutil::read_file(res.latest_path);
    fit(reloaded, data, dir);
    CHECK(testutil::read_file(res.latest_path) == bytes_before);
}

TEST_CASE("non-finite loss aborts with context") {
    DataBundle data = make_bundle(tiny_synth());
    TrainConfig tc = tiny_train(1);
    Checkpoint ckpt = init_run(data, desk_model(), tc);
    // poison the noise head so the forward pass produces a non-finite loss
    for (std::size_t j = 0; j < ckpt.params.cfg.p; ++j) {
        ckpt.params.decoder.b[j] = std::numeric_limits<double>::quiet_NaN();
    }
    Rng rng(9);
    try {
        train_step({0, 1}, data, ckpt.params, ckpt.schedule, ckpt.opt, tc, rng);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find(data.alignment.shared[0]) != std::string::npos);
    }
}

}
