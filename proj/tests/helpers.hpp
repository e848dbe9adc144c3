#pragma once

#include <string>
#include <vector>

#include "stdit/rng.hpp"
#include "stdit/synth.hpp"
#include "stdit/tensor.hpp"
#include "stdit/train.hpp"

namespace testutil {

// in-memory pipeline front half: synth -> preprocess -> align -> split
inline stdit::DataBundle make_bundle(const stdit::SynthConfig& cfg) {
    stdit::SynthData synth = stdit::make_synth(cfg);
    stdit::DataBundle b;
    b.st_raw = synth.st;
    b.st = stdit::preprocess(synth.st, 0);
    b.sc = stdit::preprocess(synth.sc, 0);
    b.alignment = stdit::align(b.st, b.sc);
    b.split_spec = stdit::split(b.alignment, cfg.seed);
    return b;
}

inline stdit::ModelConfig desk_model(std::size_t d = 8, std::size_t blocks = 1,
                                     std::size_t heads = 1) {
    stdit::ModelConfig cfg;
    cfg.d = d;
    cfg.d_c = d;
    cfg.d_t = d;
    cfg.d_k = d / 2;
    cfg.d_v = d / 2;
    cfg.landmarks = 16;
    cfg.blocks = blocks;
    cfg.heads = heads;
    return cfg;
}

inline stdit::Tensor random_tensor(std::size_t r, std::size_t c, stdit::Rng& rng,
                                   double lo = -1.0, double hi = 1.0) {
    stdit::Tensor t(r, c);
    for (double& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
}

inline stdit::Tensor random_normal(std::size_t r, std::size_t c, stdit::Rng& rng) {
    stdit::Tensor t(r, c);
    for (double& v : t.data) v = rng.normal();
    return t;
}

inline bool bit_equal(const stdit::Tensor& a, const stdit::Tensor& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

inline std::string read_file(const std::string& path) {
    FILE* f = fopen(path.c_str(), "rb");
    if (!f) return "";
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, n);
    fclose(f);
    return out;
}

}  // namespace testutil
