#include "stdit/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stdit/error.hpp"
#include "stdit/rng.hpp"

namespace stdit {

namespace {

std::string padded_id(char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%04zu", prefix, i);
    return buf;
}

}  // namespace

SynthData make_synth(const SynthConfig& cfg) {
    if (cfg.genes == 0 || cfg.spots == 0 || cfg.cells == 0) {
        throw ConfigError("synth: genes, spots and cells must be positive");
    }
    if (cfg.noise < 0.0 || cfg.base_rate <= 0.0) {
        throw ConfigError("synth: noise must be >= 0 and base_rate positive");
    }
    Rng rng(derive_seed(cfg.seed, "synth"));
    const std::size_t total_genes = cfg.genes + cfg.sc_extra;
    const std::size_t k = cfg.rank;

    // loadings shared across modalities, factors independent
    Tensor loadings(total_genes, std::max<std::size_t>(k, 1));
    if (k > 0) {
        double inv = 1.0 / std::sqrt(static_cast<double>(k));
        for (double& v : loadings.data) v = rng.normal() * inv;
    }
    Tensor spot_factors(std::max<std::size_t>(k, 1), cfg.spots);
    Tensor cell_factors(std::max<std::size_t>(k, 1), cfg.cells);
    if (k > 0) {
        for (double& v : spot_factors.data) v = rng.normal();
        for (double& v : cell_factors.data) v = rng.normal();
    }

    auto signal_at = [&](std::size_t g, const Tensor& factors, std::size_t col) {
        double s = 0.0;
        for (std::size_t r = 0; r < k; ++r) s += loadings.at(g, r) * factors.at(r, col);
        return s;
    };
    auto draw_count = [&](double log_signal) {
        double jitter = cfg.noise > 0.0 ? cfg.noise * rng.normal() : 0.0;
        double mean = cfg.base_rate * std::exp(log_signal + jitter);
        if (cfg.noise == 0.0) return static_cast<double>(std::llround(mean));
        return static_cast<double>(rng.poisson(mean));
    };

    SynthData out;
    out.st.gene_ids.reserve(cfg.genes);
    out.st.values = Tensor(cfg.genes, cfg.spots);
    out.st_signal = Tensor(cfg.genes, cfg.spots);
    for (std::size_t s = 0; s < cfg.spots; ++s) out.st.col_ids.push_back(padded_id('s', s));
    for (std::size_t g = 0; g < cfg.genes; ++g) {
        out.st.gene_ids.push_back(padded_id('g', g));
        for (std::size_t s = 0; s < cfg.spots; ++s) {
            double sig = signal_at(g, spot_factors, s);
            out.st_signal.at(g, s) = sig;
            out.st.values.at(g, s) = draw_count(sig);
        }
    }

    out.sc.values = Tensor(total_genes, cfg.cells);
    for (std::size_t c = 0; c < cfg.cells; ++c) out.sc.col_ids.push_back(padded_id('c', c));
    for (std::size_t g = 0; g < total_genes; ++g) {
        out.sc.gene_ids.push_back(g < cfg.genes ? padded_id('g', g)
                                                : padded_id('u', g - cfg.genes));
        for (std::size_t c = 0; c < cfg.cells; ++c) {
            out.sc.values.at(g, c) = draw_count(signal_at(g, cell_factors, c));
        }
    }
    return out;
}

void write_synth(const SynthData& data, const SynthConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    save_matrix(data.st, (fs::path(out_dir) / "st_counts.tsv").string());
    save_matrix(data.sc, (fs::path(out_dir) / "sc_counts.tsv").string());

    ExpressionMatrix signal;
    signal.gene_ids = data.st.gene_ids;
    signal.col_ids = data.st.col_ids;
    signal.values = data.st_signal;
    save_matrix(signal, (fs::path(out_dir) / "truth_signal.tsv").string());

    // ready-to-run desk profile: a model sized for the generated matrices
    // and a 50-step schedule that ends near pure noise
    std::ofstream ini((fs::path(out_dir) / "config.ini").string());
    if (!ini) throw DataError("synth: cannot write config in '" + out_dir + "'");
    std::size_t d = 8;
    while (d < cfg.spots) d += 8;
    ini << "[data]\n"
        << "st_path = " << (fs::path(out_dir) / "st_counts.tsv").string() << "\n"
        << "sc_path = " << (fs::path(out_dir) / "sc_counts.tsv").string() << "\n"
        << "st_orientation = genes-rows\n"
        << "sc_orientation = genes-rows\n"
        << "st_top_k = 0\n"
        << "sc_top_k = 0\n"
        << "\n[run]\n"
        << "seed = " << cfg.seed << "\n"
        << "\n[model]\n"
        << "d = " << d << "\n"
        << "d_c = 16\n"
        << "d_t = 16\n"
        << "d_k = 8\n"
        << "d_v = 8\n"
        << "landmarks = 64\n"
        << "blocks = 1\n"
        << "heads = 1\n"
        << "\n[train]\n"
        << "iterations = 2000\n"
        << "batch = 32\n"
        << "steps = 50\n"
        << "beta_end = 0.15\n"
        << "val_every = 100\n"
        << "checkpoint_every = 500\n";
}

}  // namespace stdit
