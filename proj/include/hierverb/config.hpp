#pragma once

// Run configuration: a flat key=value file, optional named presets, and the
// precedence chain defaults < preset < file < HIERVERB_SEED < CLI flags.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hierverb/common.hpp"
#include "hierverb/losses.hpp"
#include "hierverb/sampler.hpp"
#include "hierverb/synth.hpp"

namespace hierverb {

struct RunConfig {
    // file paths
    std::string hierarchy_path;
    std::string dataset_path;
    std::string support_path;
    std::string dev_path;
    std::string test_path;
    std::string checkpoint_path;
    std::string out_dir = "out";

    // sampling
    int k = 1;
    std::uint64_t seed = 0;
    SampleOrder order = SampleOrder::Ascending;

    // training
    int epochs = 20;
    int batch_size = 5;
    int patience = 10;
    int warmup_steps = 0;
    double lr = 5e-5;
    double verbalizer_lr = 1e-4;
    std::string early_metric = "micro_f1";

    // encoder
    int hidden = 32;
    double dropout = 0.1;
    int truncate_length = kDefaultTruncateLength;

    // losses & decoding
    LossConfig loss;
    double decode_threshold = 0.5;

    // synthetic corpus
    SyntheticSpec synth;

    // gradient checking
    int gc_hidden = 8;
    int gc_batch = 4;
    double gc_tolerance = 1e-4;
    double gc_step = 1e-5;

    void apply_preset(const std::string& name);
    void apply_file(const std::string& path);
    void apply_kv(const std::string& key, const std::string& value);
    void apply_env();
    void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    fail("config: " + key + " expects a boolean, got '" + v + "'");
}

inline int parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        require(pos == v.size(), "config: " + key + " expects an integer, got '" + v + "'");
        return x;
    } catch (const std::exception&) {
        fail("config: " + key + " expects an integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        require(pos == v.size(), "config: " + key + " expects a number, got '" + v + "'");
        return x;
    } catch (const std::exception&) {
        fail("config: " + key + " expects a number, got '" + v + "'");
    }
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_int(trim(item), key));
    }
    require(!out.empty(), "config: " + key + " expects a comma-separated integer list");
    return out;
}

}  // namespace detail

inline void RunConfig::apply_preset(const std::string& name) {
    if (name == "wos" || name == "dbpedia") {
        epochs = 20;
        batch_size = 5;
        lr = 5e-5;
        verbalizer_lr = 1e-4;
        warmup_steps = 0;
        patience = 10;
        truncate_length = 512;
        loss.lambda1 = 1.0;
        loss.lambda2 = 1e-2;
        loss.alpha = 1.0;
        loss.beta = 1.0;
        loss.mode = Mode::SinglePath;
    } else if (name == "rcv1") {
        epochs = 1000;
        batch_size = 5;
        lr = 3e-5;
        verbalizer_lr = 3e-5;
        warmup_steps = 0;
        patience = 10;
        truncate_length = 512;
        loss.lambda1 = 1.0;
        loss.lambda2 = 1e-4;
        loss.alpha = 1.0;
        loss.beta = 1e-2;
        loss.mode = Mode::MultiPath;
    } else {
        fail("unknown preset '" + name + "' (expected wos, dbpedia, or rcv1)");
    }
}

inline void RunConfig::apply_kv(const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    if (key == "hierarchy") {
        hierarchy_path = value;
    } else if (key == "dataset") {
        dataset_path = value;
    } else if (key == "support") {
        support_path = value;
    } else if (key == "dev") {
        dev_path = value;
    } else if (key == "test") {
        test_path = value;
    } else if (key == "checkpoint") {
        checkpoint_path = value;
    } else if (key == "out_dir") {
        out_dir = value;
    } else if (key == "k") {
        k = parse_int(value, key);
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "sample.order") {
        order = sample_order_from_string(value);
    } else if (key == "mode") {
        loss.mode = mode_from_string(value);
    } else if (key == "epochs") {
        epochs = parse_int(value, key);
    } else if (key == "batch_size") {
        batch_size = parse_int(value, key);
    } else if (key == "patience") {
        patience = parse_int(value, key);
    } else if (key == "warmup_steps") {
        warmup_steps = parse_int(value, key);
    } else if (key == "lr") {
        lr = parse_double(value, key);
    } else if (key == "verbalizer_lr") {
        verbalizer_lr = parse_double(value, key);
    } else if (key == "train.early_metric") {
        early_metric = value;
    } else if (key == "encoder.r") {
        hidden = parse_int(value, key);
    } else if (key == "encoder.dropout") {
        dropout = parse_double(value, key);
    } else if (key == "truncate_length") {
        truncate_length = parse_int(value, key);
    } else if (key == "decode.threshold") {
        decode_threshold = parse_double(value, key);
    } else if (key == "loss.lambda1") {
        loss.lambda1 = parse_double(value, key);
    } else if (key == "loss.lambda2") {
        loss.lambda2 = parse_double(value, key);
    } else if (key == "loss.alpha") {
        loss.alpha = parse_double(value, key);
    } else if (key == "loss.beta") {
        loss.beta = parse_double(value, key);
    } else if (key == "loss.tau") {
        loss.tau = parse_double(value, key);
    } else if (key == "loss.fhc_variant") {
        loss.fhc_variant = fhc_variant_from_string(value);
    } else if (key == "loss.hcc_source") {
        loss.hcc_source = hcc_source_from_string(value);
    } else if (key == "loss.fhc_include_self") {
        loss.fhc_include_self = parse_bool(value, key);
    } else if (key == "synth.branching") {
        synth.branching = detail::parse_int_list(value, key);
    } else if (key == "synth.docs_per_path") {
        synth.docs_per_path = parse_int(value, key);
    } else if (key == "synth.tokens_per_doc") {
        synth.tokens_per_doc = parse_int(value, key);
    } else if (key == "synth.signal") {
        synth.signal = parse_double(value, key);
    } else if (key == "synth.noise_vocab") {
        synth.noise_vocab = parse_int(value, key);
    } else if (key == "gradcheck.r") {
        gc_hidden = parse_int(value, key);
    } else if (key == "gradcheck.batch") {
        gc_batch = parse_int(value, key);
    } else if (key == "gradcheck.tolerance") {
        gc_tolerance = parse_double(value, key);
    } else if (key == "gradcheck.step") {
        gc_step = parse_double(value, key);
    } else {
        fail("config: unknown key '" + key + "'");
    }
}

inline void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos,
                "config: expected key = value at " + path + ":" + std::to_string(lineno));
        apply_kv(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
}

inline void RunConfig::apply_env() {
    if (const char* env = std::getenv("HIERVERB_SEED")) {
        seed = static_cast<std::uint64_t>(std::stoull(env));
    }
}

inline void RunConfig::validate() const {
    require(k >= 1, "config: k must be >= 1");
    require(epochs >= 1, "config: epochs must be >= 1");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(patience >= 1, "config: patience must be >= 1");
    require(warmup_steps >= 0, "config: warmup_steps must be >= 0");
    require(lr > 0.0 && verbalizer_lr > 0.0, "config: learning rates must be > 0");
    require(hidden >= 1, "config: encoder.r must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "config: encoder.dropout must be in [0,1)");
    require(decode_threshold > 0.0 && decode_threshold < 1.0,
            "config: decode.threshold must be in (0,1)");
    loss.validate();
    synth.validate();
}

}  // namespace hierverb
