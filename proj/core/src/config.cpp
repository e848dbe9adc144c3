#include "stdit/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "stdit/error.hpp"

namespace stdit {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"data.st_path", "", "spatial transcriptomics counts file"},
        {"data.sc_path", "", "scRNA-seq counts file"},
        {"data.st_orientation", "genes-rows", "ST on-disk layout: genes-rows|genes-cols"},
        {"data.sc_orientation", "genes-rows", "SC on-disk layout: genes-rows|genes-cols"},
        {"data.st_top_k", "0", "keep top-k ST genes by mean expression (0 = all)"},
        {"data.sc_top_k", "0", "keep top-k SC genes by mean expression (0 = all)"},
        {"run.seed", "1", "base seed for every derived random stream"},
        {"run.out_dir", "out", "output directory"},
        {"run.threads", "1", "worker cap for per-gene sampling"},
        {"model.d", "64", "token width"},
        {"model.d_c", "64", "condition embedding width"},
        {"model.d_t", "64", "sinusoidal timestep feature width (even)"},
        {"model.d_k", "32", "condition attention key width"},
        {"model.d_v", "32", "condition attention value width"},
        {"model.landmarks", "64", "landmark rows in the condition attention"},
        {"model.blocks", "4", "transformer blocks"},
        {"model.heads", "4", "attention heads (must divide d)"},
        {"train.iterations", "2000", "optimizer steps"},
        {"train.batch", "32", "genes per step"},
        {"train.lr", "0.001", "learning rate"},
        {"train.beta1", "0.9", "first-moment decay"},
        {"train.beta2", "0.999", "second-moment decay"},
        {"train.eps", "1e-8", "optimizer epsilon"},
        {"train.mask_ratio", "0.5", "fraction of non-zero entries masked per sample"},
        {"train.whole_gene_prob", "0.5", "chance a sample trains full-vector generation"},
        {"train.sc_token_dropout", "0", "chance a sample withholds the SC token"},
        {"train.steps", "1000", "diffusion timesteps T"},
        {"train.beta_start", "1e-4", "noise schedule start"},
        {"train.beta_end", "0.02", "noise schedule end"},
        {"train.checkpoint_every", "200", "latest-checkpoint cadence"},
        {"train.val_every", "100", "validation cadence"},
        {"sample.draws", "4", "reverse chains averaged per prediction"},
        {"ablation.condition", "attention", "attention|off|mlp|shared-genes"},
        {"ablation.concat", "on", "on|off: SC token in the latent pair"},
    };
    return keys;
}

RunConfig default_run_config() {
    return RunConfig{};
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
    return v;
}

void assign(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data.st_path")cfg.st_path = value;
    else if (key == "data.sc_path") cfg.sc_path = value;
    else if (key == "data.st_orientation") cfg.st_orientation = parse_orientation(value);
    else if (key == "data.sc_orientation") cfg.sc_orientation = parse_orientation(value);
    else if (key == "data.st_top_k") cfg.st_top_k = parse_size(key, value);
    else if (key == "data.sc_top_k") cfg.sc_top_k = parse_size(key, value);
    else if (key == "run.seed") cfg.seed = parse_size(key, value);
    else if (key == "run.out_dir") cfg.out_dir = value;
    else if (key == "run.threads") cfg.threads = static_cast<unsigned>(parse_size(key, value));
    else if (key == "model.d") cfg.model.d = parse_size(key, value);
    else if (key == "model.d_c") cfg.model.d_c = parse_size(key, value);
    else if (key == "model.d_t") cfg.model.d_t = parse_size(key, value);
    else if (key == "model.d_k") cfg.model.d_k = parse_size(key, value);
    else if (key == "model.d_v") cfg.model.d_v = parse_size(key, value);
    else if (key == "model.landmarks") cfg.model.landmarks = parse_size(key, value);
    else if (key == "model.blocks") cfg.model.blocks = parse_size(key, value);
    else if (key == "model.heads") cfg.model.heads = parse_size(key, value);
    else if (key == "train.iterations") cfg.train.iterations = parse_size(key, value);
    else if (key == "train.batch") cfg.train.batch = parse_size(key, value);
    else if (key == "train.lr") cfg.train.lr = parse_double(key, value);
    else if (key == "train.beta1") cfg.train.beta1 = parse_double(key, value);
    else if (key == "train.beta2") cfg.train.beta2 = parse_double(key, value);
    else if (key == "train.eps") cfg.train.eps = parse_double(key, value);
    else if (key == "train.mask_ratio") cfg.train.mask_ratio = parse_double(key, value);
    else if (key == "train.whole_gene_prob") cfg.train.whole_gene_prob = parse_double(key, value);
    else if (key == "train.sc_token_dropout") cfg.train.sc_token_dropout = parse_double(key, value);
    else if (key == "train.steps") cfg.train.steps = parse_size(key, value);
    else if (key == "train.beta_start") cfg.train.beta_start = parse_double(key, value);
    else if (key == "train.beta_end") cfg.train.beta_end = parse_double(key, value);
    else if (key == "train.checkpoint_every") cfg.train.checkpoint_every = parse_size(key, value);
    else if (key == "train.val_every") cfg.train.val_every = parse_size(key, value);
    else if (key == "sample.draws") cfg.draws = parse_size(key, value);
    else if (key == "ablation.condition") cfg.model.condition = parse_condition_mode(value);
    else if (key == "ablation.concat") {
        if (value == "on") cfg.model.concat_sc = true;
        else if (value == "off") cfg.model.concat_sc = false;
        else throw ConfigError("ablation.concat must be on|off, got '" + value + "'");
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    RunConfig cfg = default_run_config();
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') {
                throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed section");
            }
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (section.empty()) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": key '" + key +
                              "' outside any section");
        }
        assign(cfg, section + "." + key, value);
    }
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    assign(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace stdit
