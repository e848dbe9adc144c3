#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stdit/data.hpp"
#include "stdit/model.hpp"
#include "stdit/train.hpp"

namespace stdit {

// One declarative run description: INI-style sections with key = value
// lines, '#' or ';' comments, unknown keys rejected. Command-line overrides
// use "section.key=value" and win over the file.
struct RunConfig {
    // [data]
    std::string st_path;
    std::string sc_path;
    Orientation st_orientation = Orientation::GenesInRows;
    Orientation sc_orientation = Orientation::GenesInRows;
    std::size_t st_top_k = 0;  // 0 keeps every expressed gene
    std::size_t sc_top_k = 0;
    // [run]
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    unsigned threads = 1;
    // [model] (+ [ablation] condition / concat)
    ModelConfig model;
    // [train]
    TrainConfig train;
    // [sample]
    std::size_t draws = 4;
};

struct ConfigKey {
    const char* key;  // "section.key"
    const char* def;
    const char* help;
};

// Every recognized key with its default, for --help output.
const std::vector<ConfigKey>& config_keys();

RunConfig default_run_config();

// Parses a config file. Every key must be one of config_keys().
RunConfig parse_run_config(const std::string& path);

// Applies one "section.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace stdit
