#pragma once

#include <cstdint>
#include <string>

#include "stdit/data.hpp"

namespace stdit {

// Planted low-rank generator: gene loadings are shared between the two
// modalities while spot and cell factors are independent, so shared genes
// carry learnable cross-modality signal. Counts come from a Poisson draw on
// base_rate * exp(signal + noise jitter); noise == 0 disables all sampling
// and rounds the means instead, so the zero-noise limit is deterministic.
struct SynthConfig {
    std::size_t genes = 60;     // shared genes (rows of both matrices)
    std::size_t spots = 40;
    std::size_t cells = 50;
    std::size_t sc_extra = 0;   // SC-only genes appended after the shared ones
    std::size_t rank = 3;       // latent rank k
    double noise = 0.1;         // stddev of log-scale jitter; 0 = deterministic
    double base_rate = 10.0;    // count scale
    std::uint64_t seed = 1;
};

struct SynthData {
    ExpressionMatrix st;  // raw counts, genes x spots
    ExpressionMatrix sc;  // raw counts, (genes + sc_extra) x cells
    Tensor st_signal;     // noiseless log-scale signal rows, genes x spots
};

SynthData make_synth(const SynthConfig& cfg);

// Writes st_counts.tsv, sc_counts.tsv, truth_signal.tsv and a ready-to-use
// config.ini into out_dir.
void write_synth(const SynthData& data, const SynthConfig& cfg, const std::string& out_dir);

}  // namespace stdit
