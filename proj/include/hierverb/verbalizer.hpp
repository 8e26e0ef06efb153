#pragma once

// Per-depth soft verbalizers: one weight matrix and bias per taxonomy layer,
// mapping the depth-d mask hidden state to that layer's label scores. Columns
// start from the mean embedding of the label's name tokens plus the names of
// all its descendants, so the head begins roughly aligned with the taxonomy.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hierverb/common.hpp"
#include "hierverb/encoding.hpp"
#include "hierverb/hierarchy.hpp"

namespace hierverb {

enum class Mode { SinglePath, MultiPath };

inline const char* to_string(Mode m) { return m == Mode::SinglePath ? "single_path" : "multi_path"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "single_path") {
        return Mode::SinglePath;
    }
    if (s == "multi_path") {
        return Mode::MultiPath;
    }
    fail("mode must be single_path or multi_path, got '" + s + "'");
}

struct VerbalizerHead {
    Mode mode = Mode::SinglePath;
    int hidden = 0;
    std::vector<Mat> weight;  // per depth: r x l_d
    std::vector<Vec> bias;    // per depth: l_d

    int depth() const { return static_cast<int>(weight.size()); }
    int layer_size(int d) const { return weight[static_cast<std::size_t>(d)].cols; }
};

struct LayerProbabilities {
    Mode mode = Mode::SinglePath;
    std::vector<Vec> p;  // per depth: l_d probabilities

    int depth() const { return static_cast<int>(p.size()); }
};

inline VerbalizerHead init_head(const Hierarchy& h, const Mat& embed, const Vocab& vocab,
                                Mode mode) {
    require(h.size() > 0, "init_head: empty hierarchy");
    const int r = embed.cols;

    VerbalizerHead head;
    head.mode = mode;
    head.hidden = r;
    head.weight.resize(static_cast<std::size_t>(h.depth()));
    head.bias.resize(static_cast<std::size_t>(h.depth()));

    for (int d = 1; d <= h.depth(); ++d) {
        const auto& layer = h.layers()[static_cast<std::size_t>(d - 1)];
        Mat& w = head.weight[static_cast<std::size_t>(d - 1)];
        w = Mat(r, static_cast<int>(layer.size()));
        head.bias[static_cast<std::size_t>(d - 1)].assign(layer.size(), 0.0);

        for (std::size_t j = 0; j < layer.size(); ++j) {
            // Token multiset: the label's own name plus every descendant's name.
            std::vector<int> stack{layer[j]};
            std::vector<int> token_ids;
            while (!stack.empty()) {
                const int id = stack.back();
                stack.pop_back();
                for (const std::string& piece : split_pieces(h.name_of(id))) {
                    token_ids.push_back(vocab.lookup(piece));
                }
                for (int c : h.children(id)) {
                    stack.push_back(c);
                }
            }
            require(!token_ids.empty(), "init_head: label '" + h.name_of(layer[j]) + "' has no tokens");
            for (int c = 0; c < r; ++c) {
                double s = 0.0;
                for (int tok : token_ids) {
                    s += embed(tok, c);
                }
                w(c, static_cast<int>(j)) = s / static_cast<double>(token_ids.size());
            }
        }
    }
    return head;
}

// logits^d = h^d W_d + b_d; the depth-d mask feeds the depth-d verbalizer only.
inline std::vector<Vec> layer_logits(const VerbalizerHead& head, const MaskHiddenStates& states) {
    require(states.depth() == head.depth(), "layer_logits: depth mismatch");
    require(states.dim() == head.hidden, "layer_logits: hidden size mismatch");
    std::vector<Vec> logits(static_cast<std::size_t>(head.depth()));
    for (int d = 0; d < head.depth(); ++d) {
        Vec v = tmatvec(head.weight[static_cast<std::size_t>(d)], states.h[static_cast<std::size_t>(d)]);
        axpy(v, head.bias[static_cast<std::size_t>(d)]);
        logits[static_cast<std::size_t>(d)] = std::move(v);
    }
    return logits;
}

inline Vec softmax(const Vec& logits) {
    Vec p(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(logits[j] - mx);
        z += p[j];
    }
    for (double& x : p) {
        x /= z;
    }
    return p;
}

inline LayerProbabilities probabilities(const std::vector<Vec>& logits, Mode mode) {
    LayerProbabilities out;
    out.mode = mode;
    out.p.resize(logits.size());
    for (std::size_t d = 0; d < logits.size(); ++d) {
        if (mode == Mode::SinglePath) {
            out.p[d] = softmax(logits[d]);
        } else {
            Vec p(logits[d].size());
            for (std::size_t j = 0; j < p.size(); ++j) {
                p[j] = sigmoid(logits[d][j]);
            }
            out.p[d] = std::move(p);
        }
    }
    return out;
}

// Per-layer argmax (ties to the lowest id) in single-path mode; every label at
// or above the threshold in multi-path mode. The output is a flat label set
// and may be path-inconsistent; consistency is measured, not enforced.
inline std::set<int> decode(const LayerProbabilities& probs, const Hierarchy& h,
                            double threshold = 0.5) {
    require(probs.depth() == h.depth(), "decode: depth mismatch");
    if (probs.mode == Mode::MultiPath) {
        require(threshold > 0.0 && threshold < 1.0, "decode: threshold must be in (0,1)");
    }
    std::set<int> out;
    for (int d = 0; d < probs.depth(); ++d) {
        const auto& layer = h.layers()[static_cast<std::size_t>(d)];
        const Vec& p = probs.p[static_cast<std::size_t>(d)];
        require(p.size() == layer.size(), "decode: layer size mismatch");
        if (probs.mode == Mode::SinglePath) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < p.size(); ++j) {
                if (p[j] > p[best]) {
                    best = j;
                }
            }
            out.insert(layer[best]);
        } else {
            for (std::size_t j = 0; j < p.size(); ++j) {
                if (p[j] >= threshold) {
                    out.insert(layer[j]);
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpointing: flat binary dump with a {D, r, [l_d]} shape header.
// Doubles are written raw, so a save/load round trip is bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    require(in.good(), "checkpoint: truncated file");
    return v;
}

inline void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    require(in.good(), "checkpoint: truncated file");
}

}  // namespace detail

inline void save_head(const VerbalizerHead& head, std::ostream& out) {
    out.write("HVHEAD01", 8);
    detail::write_u32(out, static_cast<std::uint32_t>(head.depth()));
    detail::write_u32(out, static_cast<std::uint32_t>(head.hidden));
    for (int d = 0; d < head.depth(); ++d) {
        detail::write_u32(out, static_cast<std::uint32_t>(head.layer_size(d)));
    }
    for (int d = 0; d < head.depth(); ++d) {
        const Mat& w = head.weight[static_cast<std::size_t>(d)];
        detail::write_doubles(out, w.data.data(), w.data.size());
        const Vec& b = head.bias[static_cast<std::size_t>(d)];
        detail::write_doubles(out, b.data(), b.size());
    }
}

inline void save_head(const VerbalizerHead& head, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "checkpoint: cannot write '" + path + "'");
    save_head(head, out);
}

inline VerbalizerHead load_head(std::istream& in, Mode mode) {
    char magic[8] = {};
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, "HVHEAD01", 8) == 0, "checkpoint: bad head magic");
    VerbalizerHead head;
    head.mode = mode;
    const int depth = static_cast<int>(detail::read_u32(in));
    head.hidden = static_cast<int>(detail::read_u32(in));
    std::vector<int> sizes(static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
        sizes[static_cast<std::size_t>(d)] = static_cast<int>(detail::read_u32(in));
    }
    head.weight.resize(static_cast<std::size_t>(depth));
    head.bias.resize(static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
        Mat w(head.hidden, sizes[static_cast<std::size_t>(d)]);
        detail::read_doubles(in, w.data.data(), w.data.size());
        head.weight[static_cast<std::size_t>(d)] = std::move(w);
        Vec b(static_cast<std::size_t>(sizes[static_cast<std::size_t>(d)]));
        detail::read_doubles(in, b.data(), b.size());
        head.bias[static_cast<std::size_t>(d)] = std::move(b);
    }
    return head;
}

inline VerbalizerHead load_head(const std::string& path, Mode mode) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "checkpoint: cannot open '" + path + "'");
    return load_head(in, mode);
}

}  // namespace hierverb
